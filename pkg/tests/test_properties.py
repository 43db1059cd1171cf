"""Property tests for the algebraic identities the solvers lean on."""

import numpy as np
from hypothesis import given, settings, strategies as st

from kerlin import (
    SurrogateCoefficients,
    equivalent_regularizers,
    kappa0,
    kappa1,
    make_ntk_kernel,
    make_polynomial_kernel,
    make_rbf_kernel,
    surrogate_matrix,
)

finite = st.floats(allow_nan=False, allow_infinity=False)


@given(st.floats(0.05, 5.0), st.floats(-3.0, 3.0), st.floats(0.05, 5.0),
       st.sampled_from(["polynomial", "rbf", "ntk"]))
@settings(max_examples=200, deadline=None)
def test_kernel_symmetric_in_outer_arguments(z1, z2, z3, name):
    kernel = {
        "polynomial": lambda: make_polynomial_kernel(0.1, 3),
        "rbf": lambda: make_rbf_kernel(0.8),
        "ntk": lambda: make_ntk_kernel(2),
    }[name]()
    assert kernel.g(z1, z2, z3) == kernel.g(z3, z2, z1)


@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
@settings(max_examples=200, deadline=None)
def test_kappa_bounds_and_order(s, t):
    k0, k1 = kappa0(t), kappa1(t)
    assert 0.0 <= k0 <= 1.0
    assert abs(k1) <= 1.0 + 1e-15
    assert k1 >= t - 1e-15
    if s <= t:
        assert kappa0(s) <= k0 + 1e-15
        assert kappa1(s) <= k1 + 1e-15


@given(st.floats(0.05, 10.0), st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_woodbury_special_case(alpha, seed):
    # (A + U U^T)^{-1} U == A^{-1} U (I + U^T A^{-1} U)^{-1} with A = alpha I
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((30, 8))
    lhs = np.linalg.solve(alpha * np.eye(30) + U @ U.T, U)
    rhs = (U / alpha) @ np.linalg.inv(np.eye(8) + U.T @ U / alpha)
    assert np.max(np.abs(lhs - rhs)) < 1e-9


@given(st.floats(0.05, 10.0), st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_push_through_identity(alpha, seed):
    # (alpha I - A^T A) A^T == A^T (alpha I - A A^T)
    A = np.random.default_rng(seed).standard_normal((20, 35))
    lhs = (alpha * np.eye(35) - A.T @ A) @ A.T
    rhs = A.T @ (alpha * np.eye(20) - A @ A.T)
    assert np.max(np.abs(lhs - rhs)) < 1e-10


@given(st.floats(0.0, 3.0), st.floats(0.01, 3.0), st.floats(0.01, 3.0),
       st.floats(0.001, 2.0), st.integers(2, 5000))
@settings(max_examples=200, deadline=None)
def test_equivalent_regularizer_identity(c0, c1, c2, lam, p):
    coeffs = SurrogateCoefficients(tau=1.0, c0=c0, c1=c1, c2=c2,
                                   derivative_mode="analytic")
    lam1, lam2 = equivalent_regularizers(lam, coeffs, p)
    target = c0 + lam
    assert abs(lam1 * c1 - target) <= 1e-12 * max(1.0, target)
    assert abs(lam2 * c2 / p - target) <= 1e-12 * max(1.0, target)


@given(st.floats(0.0, 2.0), st.floats(0.0, 2.0), st.floats(0.0, 2.0),
       st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_surrogate_symmetric_and_psd_for_nonnegative_coefficients(c0, c1, c2, seed):
    coeffs = SurrogateCoefficients(tau=1.0, c0=c0, c1=c1, c2=c2,
                                   derivative_mode="analytic")
    X = np.random.default_rng(seed).standard_normal((12, 6))
    M = surrogate_matrix(coeffs, X)
    assert np.array_equal(M, M.T)
    assert np.linalg.eigvalsh(M)[0] >= -1e-10 * max(1.0, np.abs(M).max())
