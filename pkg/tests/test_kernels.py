"""Kernel descriptors, Gram assembly, the arc-cosine recursion, and the
finite-width tangent-kernel oracle."""

import numpy as np
import pytest

from kerlin import (
    cross_gram,
    empirical_ntk,
    gram,
    kappa0,
    kappa1,
    kernel_diag,
    kernel_from_config,
    kernel_to_config,
    make_linear_kernel,
    make_ntk_kernel,
    make_polynomial_kernel,
    make_rbf_kernel,
    ntk_exact,
)

ALL_KERNELS = [
    make_linear_kernel(),
    make_polynomial_kernel(0.1, 2),
    make_rbf_kernel(1.0),
    make_ntk_kernel(2),
]


def test_linear_kernel_values():
    k = make_linear_kernel()
    assert k.g(1.0, 0.3, 1.0) == 0.3
    assert k.d_g_dz2(0.7, -2.0, 1.4) == 1.0
    assert k.d2_g_dz2(0.7, -2.0, 1.4) == 0.0


def test_polynomial_kernel_values():
    k = make_polynomial_kernel(0.1, 2)
    assert k.g(1.0, 0.0, 1.0) == pytest.approx(0.01, rel=1e-12)
    assert k.g(1.0, 1.0, 1.0) == pytest.approx(1.21, rel=1e-12)
    assert k.d_g_dz2(1.0, 0.0, 1.0) == pytest.approx(0.2, rel=1e-12)
    assert k.d2_g_dz2(1.0, 0.0, 1.0) == pytest.approx(2.0, rel=1e-12)


def test_polynomial_degree_one_reduces_to_linear():
    k = make_polynomial_kernel(0.0, 1)
    lin = make_linear_kernel()
    rng = np.random.default_rng(0)
    for z1, z2, z3 in rng.uniform(-2, 2, size=(50, 3)):
        assert k.g(z1, z2, z3) == lin.g(z1, z2, z3)


def test_polynomial_rejects_bad_params():
    with pytest.raises(ValueError):
        make_polynomial_kernel(0.1, 0)
    with pytest.raises(ValueError):
        make_polynomial_kernel(-0.5, 2)


def test_rbf_kernel_values():
    for tau in (0.5, 1.0, 2.0):
        assert make_rbf_kernel(1.0).g(tau, tau, tau) == 1.0
    assert make_rbf_kernel(1.0).g(1.0, 0.0, 1.0) == pytest.approx(np.exp(-1.0), rel=1e-14)
    with pytest.raises(ValueError):
        make_rbf_kernel(0.0)


def test_rbf_symmetry_in_outer_arguments():
    k = make_rbf_kernel(0.7)
    rng = np.random.default_rng(1)
    for a, b, c in rng.uniform(0.1, 3.0, size=(100, 3)):
        assert k.g(a, b, c) == k.g(c, b, a)


def test_kappa_closed_form_values():
    assert abs(kappa0(1.0) - 1.0) < 1e-12
    assert abs(kappa1(1.0) - 1.0) < 1e-12
    assert abs(kappa0(0.0) - 0.5) < 1e-12
    assert abs(kappa1(0.0) - 1.0 / np.pi) < 1e-12
    assert abs(kappa0(-1.0)) < 1e-12
    assert abs(kappa1(-1.0)) < 1e-12


def test_kappa_bounds_and_monotonicity():
    t = np.linspace(-1.0, 1.0, 1000)
    k0, k1 = kappa0(t), kappa1(t)
    assert np.all((k0 >= 0.0) & (k0 <= 1.0))
    assert np.all(np.abs(k1) <= 1.0 + 1e-15)
    assert np.all(k1 >= t - 1e-15)
    assert np.all(np.diff(k0) >= 0.0)
    assert np.all(np.diff(k1) >= -1e-15)


def test_kappa_clamps_out_of_range():
    assert kappa0(1.0 + 1e-12) == 1.0
    assert kappa1(-1.0 - 1e-12) == 0.0


def test_ntk_scale_identity():
    rng = np.random.default_rng(2)
    for depth in (1, 2, 3):
        u = rng.standard_normal(17)
        value = ntk_exact(u, u, depth)
        assert value == pytest.approx((depth + 1) * float(u @ u), rel=1e-10)


def test_ntk_orthonormal_value():
    u = np.array([1.0, 0.0, 0.0])
    v = np.array([0.0, 1.0, 0.0])
    assert ntk_exact(u, v, 1) == pytest.approx(1.0 / np.pi, rel=1e-12)


def test_ntk_descriptor_normalization():
    # descriptor reports K_depth / p: the /p arguments absorb the scale
    k = make_ntk_kernel(2)
    rng = np.random.default_rng(3)
    u, v = rng.standard_normal((2, 31))
    p = 31
    z1, z2, z3 = u @ u / p, u @ v / p, v @ v / p
    assert float(k.g(z1, z2, z3)) == pytest.approx(ntk_exact(u, v, 2) / p, rel=1e-12)


def test_ntk_rejects_bad_inputs():
    with pytest.raises(ValueError):
        make_ntk_kernel(0)
    k = make_ntk_kernel(1)
    with pytest.raises(ValueError):
        k.g(0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        k.g(1.0, 0.0, -0.5)


def test_kernel_config_round_trip():
    for k in ALL_KERNELS:
        rebuilt = kernel_from_config(kernel_to_config(k))
        assert rebuilt.name == k.name
        assert rebuilt.params == k.params
    with pytest.raises(ValueError):
        kernel_from_config({"type": "spline"})
    with pytest.raises(ValueError):
        kernel_from_config({})


@pytest.mark.parametrize("kernel", ALL_KERNELS, ids=lambda k: k.name)
def test_gram_matches_entrywise_bruteforce(kernel):
    # per-entry double loop over g on the same normalized arguments: 0 ulp.
    # Singleton arrays keep numpy on the same ufunc path as the assembly
    # (scalar ** takes a different pow code path one ulp away).
    rng = np.random.default_rng(4)
    X = rng.standard_normal((23, 9))
    n, p = X.shape
    K = gram(kernel, X)
    sq = np.einsum("ij,ij->i", X, X) / p
    inner = X @ X.T
    inner /= p
    one = lambda value: np.array([value])
    for i in range(n):
        for j in range(i, n):
            z2 = sq[i] if i == j else inner[i, j]
            expected = kernel.g(one(sq[i]), one(z2), one(sq[j]))[0]
            assert K[i, j] == expected
            assert K[j, i] == expected


@pytest.mark.parametrize("kernel", ALL_KERNELS, ids=lambda k: k.name)
def test_gram_exactly_symmetric_across_blocks(kernel):
    # n > 64 exercises the block mirroring
    rng = np.random.default_rng(5)
    X = rng.standard_normal((150, 40))
    K = gram(kernel, X)
    assert np.array_equal(K, K.T)


@pytest.mark.parametrize("kernel", ALL_KERNELS, ids=lambda k: k.name)
def test_gram_psd_on_gaussian_data(kernel):
    rng = np.random.default_rng(6)
    X = rng.standard_normal((300, 120))
    w = np.linalg.eigvalsh(gram(kernel, X))
    assert w[0] >= -1e-8 * w[-1]


def test_gram_rejects_nan():
    X = np.ones((3, 4))
    X[1, 2] = np.nan
    with pytest.raises(ValueError):
        gram(make_linear_kernel(), X)


def test_gram_small_identity_examples():
    assert np.array_equal(gram(make_linear_kernel(), np.eye(2)),
                          np.array([[0.5, 0.0], [0.0, 0.5]]))
    K = gram(make_polynomial_kernel(0.1, 2), np.eye(2))
    np.testing.assert_allclose(K, [[0.36, 0.01], [0.01, 0.36]], rtol=1e-14)


def test_cross_gram_consistency_with_gram():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((40, 12))
    for kernel in ALL_KERNELS:
        C = cross_gram(kernel, X, X)
        K = gram(kernel, X)
        off = ~np.eye(40, dtype=bool)
        np.testing.assert_allclose(C[off], K[off], rtol=1e-12, atol=0)
        # cross_gram sees the matrix-product diagonal (norm^2 up to an ulp);
        # the tangent kernel's cusp at t=1 amplifies that ulp to ~sqrt(ulp)
        np.testing.assert_allclose(np.diag(C), np.diag(K), rtol=5e-8)


def test_cross_gram_single_row_scalar_oracle():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((1, 10))
    X = rng.standard_normal((6, 10))
    k = make_rbf_kernel(1.3)
    row = cross_gram(k, x, X)
    p = 10
    for j in range(6):
        expected = float(k.g(x[0] @ x[0] / p, x[0] @ X[j] / p, X[j] @ X[j] / p))
        assert row[0, j] == pytest.approx(expected, rel=1e-15)


def test_cross_gram_linear_is_scaled_product():
    rng = np.random.default_rng(9)
    X1 = rng.standard_normal((30, 8))
    X2 = rng.standard_normal((50, 8))
    C = cross_gram(make_linear_kernel(), X1, X2)
    expected = X1 @ X2.T
    expected /= 8
    assert np.array_equal(C, expected)


def test_cross_gram_dimension_mismatch():
    with pytest.raises(ValueError):
        cross_gram(make_linear_kernel(), np.ones((2, 3)), np.ones((2, 4)))


def test_kernel_diag_matches_gram_diagonal():
    rng = np.random.default_rng(10)
    X = rng.standard_normal((20, 6))
    for kernel in ALL_KERNELS:
        np.testing.assert_allclose(kernel_diag(kernel, X),
                                   np.diag(gram(kernel, X)), rtol=1e-14)


def test_empirical_ntk_basic_properties():
    rng = np.random.default_rng(11)
    u, v = rng.standard_normal((2, 15))
    assert empirical_ntk(200, u, u, n_trials=2, seed=3) >= 0.0
    a = empirical_ntk(500, u, v, n_trials=2, seed=5)
    b = empirical_ntk(500, v, u, n_trials=2, seed=5)
    assert a == b
    with pytest.raises(ValueError):
        empirical_ntk(0, u, v)
    with pytest.raises(ValueError):
        empirical_ntk(10, u, v[:-1])


def test_empirical_ntk_error_shrinks_with_width():
    # median relative error over 10 pairs: wide beats narrow
    rng = np.random.default_rng(12)
    errors = {500: [], 50000: []}
    for pair in range(10):
        u, v = rng.standard_normal((2, 24))
        exact = ntk_exact(u, v, 1)
        for m in errors:
            approx = empirical_ntk(m, u, v, n_trials=2, seed=100 + pair)
            errors[m].append(abs(approx - exact) / abs(exact))
    assert np.median(errors[50000]) < np.median(errors[500])
