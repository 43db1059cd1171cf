"""Surrogate coefficients, the linearized matrix, and operator-norm gaps."""

import numpy as np
import pytest

from kerlin import (
    CovarianceSpec,
    coefficients,
    coefficients_from_data,
    gap_sweep,
    gram,
    make_linear_kernel,
    make_ntk_kernel,
    make_polynomial_kernel,
    make_rbf_kernel,
    operator_norm_gap,
    sample_features,
    surrogate_matrix,
)
from kerlin.datagen import FeatureModel
from kerlin.kernels import KernelDescriptor
from kerlin.linearize import write_gap_sweep_csv


class TestCovarianceSpec:
    def test_identity(self):
        cov = CovarianceSpec.identity(10)
        assert cov.trace() == 10.0
        assert cov.trace_sq() == 10.0
        assert cov.tau == 1.0

    def test_diagonal(self):
        cov = CovarianceSpec.diagonal([4.0, 1.0, 1.0])
        assert cov.trace() == 6.0
        assert cov.trace_sq() == 18.0
        with pytest.raises(ValueError):
            CovarianceSpec.diagonal([1.0, 0.0])

    def test_dense_checks(self):
        with pytest.raises(ValueError):
            CovarianceSpec.dense(np.array([[1.0, 0.5], [0.0, 1.0]]))
        with pytest.raises(ValueError):
            CovarianceSpec.dense(np.array([[1.0, 0.0], [0.0, -1.0]]))
        A = np.array([[2.0, 0.3], [0.3, 1.0]])
        cov = CovarianceSpec.dense(A)
        assert cov.trace() == pytest.approx(3.0)
        assert cov.trace_sq() == pytest.approx(np.sum(A * A))

    def test_mixture_traces_match_materialized(self):
        rng = np.random.default_rng(0)
        factors = [rng.standard_normal((60, 10)) * 0.3 for _ in range(2)]
        cov = CovarianceSpec.low_rank_mixture(factors)
        sigma = cov.materialize()
        assert cov.trace() == pytest.approx(np.trace(sigma), rel=1e-12)
        assert cov.trace_sq() == pytest.approx(np.sum(sigma * sigma), rel=1e-12)

    def test_dense_sqrt_factor_cached(self):
        A = np.array([[2.0, 0.3], [0.3, 1.0]])
        cov = CovarianceSpec.dense(A)
        R = cov.sqrt_factor()
        np.testing.assert_allclose(R @ R.T, A, atol=1e-12)
        assert cov.sqrt_factor() is R


class TestCoefficients:
    def test_linear_identity_exact(self):
        co = coefficients(make_linear_kernel(), CovarianceSpec.identity(37))
        assert (co.tau, co.c0, co.c1, co.c2) == (1.0, 0.0, 0.0, 1.0)
        assert co.derivative_mode == "analytic"

    def test_polynomial_frozen_values(self):
        co = coefficients(make_polynomial_kernel(0.1, 2), CovarianceSpec.identity(2000))
        assert co.tau == 1.0
        assert co.c0 == pytest.approx(1.0, rel=1e-12)
        assert co.c1 == pytest.approx(0.0105, rel=1e-12)
        assert co.c2 == pytest.approx(0.2, rel=1e-12)

    def test_rbf_frozen_values(self):
        co = coefficients(make_rbf_kernel(1.0), CovarianceSpec.identity(100))
        e1 = np.exp(-1.0)
        assert co.c2 == pytest.approx(e1, rel=1e-12)
        assert co.c0 == pytest.approx(1.0 - 2.0 * e1, rel=1e-12)
        # c1 = g(1,0,1) + g''(1,0,1) tr(I)/2p^2 = e^-1 (1 + 1/(2*100))
        assert co.c1 == pytest.approx(e1 * (1.0 + 0.005), rel=1e-12)

    def test_finite_difference_matches_analytic(self):
        for factory in (lambda: make_polynomial_kernel(0.1, 3),
                        lambda: make_rbf_kernel(1.2)):
            k = factory()
            bare = KernelDescriptor(name=k.name, g=k.g)
            for tau in (0.5, 1.0, 2.0):
                cov = CovarianceSpec.diagonal(np.full(50, tau))
                analytic = coefficients(k, cov)
                fd = coefficients(bare, cov)
                assert fd.derivative_mode == "finite_difference"
                assert fd.c2 == pytest.approx(analytic.c2, rel=1e-5)
                assert fd.c1 == pytest.approx(analytic.c1, rel=1e-4)

    def test_ntk_coefficients_positive(self):
        co = coefficients(make_ntk_kernel(3), CovarianceSpec.identity(500))
        assert co.derivative_mode == "finite_difference"
        assert co.c1 > 0 and co.c2 > 0

    def test_nonfinite_kernel_rejected(self):
        k = make_polynomial_kernel(0.1, 800)
        with pytest.raises(ValueError, match="not finite"):
            coefficients(k, CovarianceSpec.diagonal(np.full(20, 9.0)))

    def test_plugin_estimate_close_to_population(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((4000, 200))
        k = make_polynomial_kernel(0.1, 2)
        est = coefficients_from_data(k, X)
        pop = coefficients(k, CovarianceSpec.identity(200))
        assert est.tau == pytest.approx(pop.tau, rel=0.02)
        assert est.c0 == pytest.approx(pop.c0, rel=0.05)
        assert est.c1 == pytest.approx(pop.c1, rel=0.05)
        assert est.c2 == pytest.approx(pop.c2, rel=0.02)


class TestSurrogateMatrix:
    def test_linear_identity_reproduces_gram_exactly(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((80, 120))
        co = coefficients(make_linear_kernel(), CovarianceSpec.identity(120))
        M = surrogate_matrix(co, X)
        K = gram(make_linear_kernel(), X)
        assert np.array_equal(M, K)

    def test_pure_identity_coefficients(self):
        from kerlin import SurrogateCoefficients

        co = SurrogateCoefficients(tau=1.0, c0=1.0, c1=0.0, c2=0.0,
                                   derivative_mode="analytic")
        M = surrogate_matrix(co, np.random.default_rng(3).standard_normal((3, 5)))
        np.testing.assert_allclose(M, np.eye(3), atol=0)

    def test_include_identity_flag(self):
        from kerlin import SurrogateCoefficients

        co = SurrogateCoefficients(tau=1.0, c0=2.0, c1=0.5, c2=1.0,
                                   derivative_mode="analytic")
        X = np.random.default_rng(4).standard_normal((6, 7))
        diff = surrogate_matrix(co, X, True) - surrogate_matrix(co, X, False)
        np.testing.assert_allclose(diff, 2.0 * np.eye(6), atol=0)

    def test_exact_symmetry_and_psd(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((90, 60))
        co = coefficients(make_polynomial_kernel(0.1, 2), CovarianceSpec.identity(60))
        M = surrogate_matrix(co, X)
        assert np.array_equal(M, M.T)
        assert co.c0 > 0 and co.c1 > 0 and co.c2 > 0
        assert np.linalg.eigvalsh(M)[0] >= -1e-10

    def test_close_to_gram_for_smooth_kernel(self):
        # full-matrix brute force: dense eigendecomposition of K - M
        rng = np.random.default_rng(6)
        X = rng.standard_normal((400, 800))
        k = make_polynomial_kernel(0.1, 2)
        co = coefficients(k, CovarianceSpec.identity(800))
        K = gram(k, X)
        M = surrogate_matrix(co, X)
        gap = np.max(np.abs(np.linalg.eigvalsh(K - M)))
        knorm = np.max(np.abs(np.linalg.eigvalsh(K)))
        assert gap / knorm < 0.15

    def test_scale_covariance_consistency(self):
        # tau follows the scale and the pipeline commutes with x -> sqrt(s) x
        rng = np.random.default_rng(7)
        p, s = 40, 2.5
        Z = sample_features(FeatureModel(cov=CovarianceSpec.identity(p)), 30, seed=11)
        cov_s = CovarianceSpec.dense(s * np.eye(p))
        X_s = sample_features(FeatureModel(cov=cov_s), 30, seed=11)
        np.testing.assert_allclose(X_s, np.sqrt(s) * Z, rtol=1e-12)
        for k in (make_polynomial_kernel(0.1, 2), make_rbf_kernel(1.0)):
            co = coefficients(k, cov_s)
            assert co.tau == pytest.approx(s, rel=1e-12)
            M_direct = surrogate_matrix(co, X_s)
            M_scaled = surrogate_matrix(co, np.sqrt(s) * Z)
            np.testing.assert_allclose(M_direct, M_scaled, rtol=1e-10)


class TestOperatorNorm:
    def test_equal_matrices(self):
        A = np.random.default_rng(8).standard_normal((12, 12))
        A = A + A.T
        assert operator_norm_gap(A, A) == 0.0

    def test_known_spectrum(self):
        assert operator_norm_gap(np.diag([3.0, -5.0, 1.0]), np.zeros((3, 3))) == pytest.approx(5.0, abs=1e-10)

    def test_matches_dense_eigendecomposition(self):
        rng = np.random.default_rng(9)
        A = rng.standard_normal((50, 50))
        A = 0.5 * (A + A.T)
        B = rng.standard_normal((50, 50))
        B = 0.5 * (B + B.T)
        expected = np.max(np.abs(np.linalg.eigvalsh(A - B)))
        assert operator_norm_gap(A, B) == pytest.approx(expected, abs=1e-7)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            operator_norm_gap(np.eye(3), np.eye(4))


class TestGapSweep:
    def test_linear_kernel_gap_is_roundoff(self):
        records = gap_sweep(make_linear_kernel(), CovarianceSpec.identity,
                            [50, 100], beta=1.0, trials=2, seed=0)
        assert len(records) == 4
        assert all(r.error is None for r in records)
        assert all(r.gap_abs <= 1e-10 for r in records)

    def test_polynomial_gap_decreases_with_p(self):
        records = gap_sweep(make_polynomial_kernel(0.1, 2), CovarianceSpec.identity,
                            [100, 400], beta=1.0, trials=3, seed=1)
        by_p = {
            p: np.median([r.gap_rel for r in records if r.p == p])
            for p in (100, 400)
        }
        assert by_p[400] < by_p[100]

    def test_failures_recorded_not_raised(self):
        def broken(z1, z2, z3):
            raise RuntimeError("kernel exploded")

        bad = KernelDescriptor(name="broken", g=broken,
                               d_g_dz2=lambda *a: 1.0, d2_g_dz2=lambda *a: 0.0)
        records = gap_sweep(bad, CovarianceSpec.identity, [20], beta=1.0,
                            trials=2, seed=2)
        assert len(records) == 2
        assert all(r.error is not None and "kernel exploded" in r.error
                   for r in records)

    def test_csv_schema(self, tmp_path):
        records = gap_sweep(make_linear_kernel(), CovarianceSpec.identity,
                            [30], beta=0.5, trials=1, seed=3)
        path = tmp_path / "sweep.csv"
        write_gap_sweep_csv(records, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "p,n,trial,seed,gap_abs,gap_rel,kernel,beta"
        cells = lines[1].split(",")
        assert cells[0] == "30" and cells[1] == "15" and cells[6] == "linear"
        assert float(cells[4]) == records[0].gap_abs
