"""Linearized surrogate of a kernel matrix in the proportional regime.

For a kernel ``g`` of the normalized three-argument form, the kernel
matrix on data with covariance Sigma concentrates (in operator norm, as
p grows with n/p fixed) around the explicit linear surrogate

    M = c0 I + c1 11^T + (c2 / p) X X^T,

with coefficients read off a Taylor expansion of ``g`` around the point
(tau, 0, tau), tau = tr(Sigma)/p:

    c2 = dg/dz2 (tau, 0, tau),
    c0 = g(tau, tau, tau) - g(tau, 0, tau) - c2 tr(Sigma)/p,
    c1 = g(tau, 0, tau) + d2g/dz2^2 (tau, 0, tau) tr(Sigma^2) / (2 p^2).

This module computes the coefficients (analytically when the descriptor
carries derivatives, otherwise by central finite differences), builds M,
and measures the operator-norm gap ||K - M||.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .kernels import KernelDescriptor, gram
from .validation import as_matrix, check_square

__all__ = [
    "CovarianceSpec",
    "SurrogateCoefficients",
    "coefficients",
    "coefficients_from_data",
    "surrogate_matrix",
    "operator_norm_gap",
    "PowerIterationError",
    "GapRecord",
    "gap_sweep",
    "write_gap_sweep_csv",
]

# Finite-difference steps for the z2 derivatives at (tau, 0, tau): central
# difference for g', 3-point stencil for g''.  Steps trade truncation
# against roundoff for C^3 kernels.
_FD_STEP_FIRST = 1e-5
_FD_STEP_SECOND = 1e-3


@dataclass(eq=False)
class CovarianceSpec:
    """Population covariance of the features, in structured form.

    ``kind`` is one of ``identity``, ``diagonal``, ``dense`` or
    ``low_rank_mixture``.  Traces (and hence the expansion point tau) are
    available without materializing the p x p matrix except for the dense
    kind, which stores it anyway.  The mixture kind holds the factor
    matrices ``S_c`` (p x r each) of ``Sigma = (1/k) sum_c S_c S_c^T``.
    """

    kind: str
    p: int
    values: np.ndarray | None = None
    matrix: np.ndarray | None = None
    factors: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        self.p = int(self.p)
        self._sqrt_cache = None
        if self.kind == "identity":
            pass
        elif self.kind == "diagonal":
            self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
            if self.values.shape[0] != self.p:
                raise ValueError("diagonal values must have length p")
            if np.any(self.values <= 0):
                raise ValueError("diagonal covariance must be strictly positive")
        elif self.kind == "dense":
            self.matrix = check_square(self.matrix, "covariance matrix")
            if self.matrix.shape[0] != self.p:
                raise ValueError("covariance matrix must be p x p")
            if not np.allclose(self.matrix, self.matrix.T, atol=1e-12):
                raise ValueError("covariance matrix must be symmetric")
            try:
                np.linalg.cholesky(self.matrix)
            except np.linalg.LinAlgError:
                raise ValueError("dense covariance must be positive definite") from None
        elif self.kind == "low_rank_mixture":
            if not self.factors:
                raise ValueError("low_rank_mixture needs factor matrices")
            self.factors = tuple(np.asarray(S, dtype=np.float64) for S in self.factors)
            for S in self.factors:
                if S.ndim != 2 or S.shape[0] != self.p:
                    raise ValueError("each mixture factor must be p x r")
        else:
            raise ValueError(f"unknown covariance kind {self.kind!r}")

    @classmethod
    def identity(cls, p: int) -> "CovarianceSpec":
        return cls(kind="identity", p=p)

    @classmethod
    def diagonal(cls, values) -> "CovarianceSpec":
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        return cls(kind="diagonal", p=values.shape[0], values=values)

    @classmethod
    def dense(cls, matrix) -> "CovarianceSpec":
        matrix = np.asarray(matrix, dtype=np.float64)
        return cls(kind="dense", p=matrix.shape[0], matrix=matrix)

    @classmethod
    def low_rank_mixture(cls, factors) -> "CovarianceSpec":
        factors = tuple(np.asarray(S, dtype=np.float64) for S in factors)
        return cls(kind="low_rank_mixture", p=factors[0].shape[0], factors=factors)

    def trace(self) -> float:
        """tr(Sigma), without materializing Sigma where avoidable."""
        if self.kind == "identity":
            return float(self.p)
        if self.kind == "diagonal":
            return float(self.values.sum())
        if self.kind == "dense":
            return float(np.trace(self.matrix))
        k = len(self.factors)
        return sum(float(np.sum(S * S)) for S in self.factors) / k

    def trace_sq(self) -> float:
        """tr(Sigma^2); for the mixture computed from r x r factor products."""
        if self.kind == "identity":
            return float(self.p)
        if self.kind == "diagonal":
            return float(np.sum(self.values**2))
        if self.kind == "dense":
            return float(np.sum(self.matrix * self.matrix))
        k = len(self.factors)
        total = 0.0
        for Sa in self.factors:
            for Sb in self.factors:
                G = Sa.T @ Sb
                total += float(np.sum(G * G))
        return total / k**2

    @property
    def tau(self) -> float:
        """Expansion point tr(Sigma)/p."""
        return self.trace() / self.p

    def materialize(self) -> np.ndarray:
        """Dense p x p covariance matrix."""
        if self.kind == "identity":
            return np.eye(self.p)
        if self.kind == "diagonal":
            return np.diag(self.values)
        if self.kind == "dense":
            return self.matrix.copy()
        k = len(self.factors)
        out = np.zeros((self.p, self.p))
        for S in self.factors:
            out += S @ S.T
        return out / k

    def sqrt_factor(self) -> np.ndarray:
        """A matrix A with Sigma = A A^T, for ``x = A z`` sampling.

        Symmetric square root for the dense kind (eigendecomposition,
        cached).  Not defined for the mixture kind, whose sampler picks a
        component instead.
        """
        if self.kind == "identity":
            return np.eye(self.p)
        if self.kind == "diagonal":
            return np.diag(np.sqrt(self.values))
        if self.kind == "dense":
            if self._sqrt_cache is None:
                w, V = np.linalg.eigh(self.matrix)
                w = np.clip(w, 0.0, None)
                self._sqrt_cache = (V * np.sqrt(w)) @ V.T
            return self._sqrt_cache
        raise ValueError("low_rank_mixture has no square-root sampler; "
                         "components are drawn individually")


@dataclass(frozen=True)
class SurrogateCoefficients:
    """Expansion coefficients (tau, c0, c1, c2) of the linear surrogate."""

    tau: float
    c0: float
    c1: float
    c2: float
    derivative_mode: str  # "analytic" | "finite_difference"


def _derivatives_at(kernel: KernelDescriptor, tau: float) -> tuple[float, float, str]:
    """(g', g'') in the second argument at (tau, 0, tau)."""
    if kernel.d_g_dz2 is not None and kernel.d2_g_dz2 is not None:
        g1 = float(kernel.d_g_dz2(tau, 0.0, tau))
        g2 = float(kernel.d2_g_dz2(tau, 0.0, tau))
        return g1, g2, "analytic"
    scale = max(1.0, abs(tau))
    h1 = _FD_STEP_FIRST * scale
    h2 = _FD_STEP_SECOND * scale
    g = kernel.g
    g1 = (float(g(tau, h1, tau)) - float(g(tau, -h1, tau))) / (2.0 * h1)
    g2 = (
        float(g(tau, h2, tau)) - 2.0 * float(g(tau, 0.0, tau)) + float(g(tau, -h2, tau))
    ) / h2**2
    return g1, g2, "finite_difference"


def _coefficients_from_moments(
    kernel: KernelDescriptor, tau: float, trace_ratio: float, trace_sq_ratio: float
) -> SurrogateCoefficients:
    """Coefficients from tau, tr(Sigma)/p and tr(Sigma^2)/p^2."""
    with np.errstate(over="ignore"):  # overflow is caught as non-finite below
        g_diag = float(kernel.g(tau, tau, tau))
        g_off = float(kernel.g(tau, 0.0, tau))
    if not (np.isfinite(g_diag) and np.isfinite(g_off)):
        raise ValueError(
            f"kernel {kernel.name!r} is not finite at the expansion points "
            f"(g(tau,tau,tau)={g_diag}, g(tau,0,tau)={g_off}, tau={tau})"
        )
    g1, g2, mode = _derivatives_at(kernel, tau)
    if not (np.isfinite(g1) and np.isfinite(g2)):
        raise ValueError(f"kernel {kernel.name!r} has non-finite derivatives at tau={tau}")
    c2 = g1
    c0 = g_diag - g_off - c2 * trace_ratio
    c1 = g_off + 0.5 * g2 * trace_sq_ratio
    return SurrogateCoefficients(tau=tau, c0=c0, c1=c1, c2=c2, derivative_mode=mode)


def coefficients(kernel: KernelDescriptor, cov: CovarianceSpec) -> SurrogateCoefficients:
    """Surrogate coefficients for a kernel under a known covariance."""
    p = cov.p
    tau = cov.trace() / p
    return _coefficients_from_moments(kernel, tau, cov.trace() / p, cov.trace_sq() / p**2)


def coefficients_from_data(kernel: KernelDescriptor, X) -> SurrogateCoefficients:
    """Plug-in coefficients estimated from a sample (secondary mode).

    Estimates ``tau`` by the mean normalized squared row norm and
    ``tr(Sigma^2)/p^2`` by the mean of squared normalized off-diagonal
    inner products.  No bias correction is applied; intended as a
    convenience when the generating covariance is unknown.
    """
    X = as_matrix(X)
    n, p = X.shape
    if n < 2:
        raise ValueError("need at least two samples to estimate the moments")
    inner = X @ X.T / p
    tau_hat = float(np.mean(np.diag(inner)))
    off = inner[~np.eye(n, dtype=bool)]
    trace_sq_ratio = float(np.mean(off**2))
    return _coefficients_from_moments(kernel, tau_hat, tau_hat, trace_sq_ratio)


def surrogate_matrix(
    coeffs: SurrogateCoefficients, X, include_identity: bool = True
) -> np.ndarray:
    """Linear surrogate ``M = c0 I + c1 11^T + (c2/p) X X^T``.

    ``include_identity=False`` drops the ``c0 I`` term, which is the right
    form for off-diagonal (e.g. test/train) blocks.  The result is exactly
    symmetric.
    """
    X = as_matrix(X)
    n, p = X.shape
    M = X @ X.T
    M *= coeffs.c2
    M /= p
    M += coeffs.c1
    # mirror the upper triangle; matrix products need not be bit-symmetric
    M = np.triu(M) + np.triu(M, 1).T
    # diagonal from the row norms themselves, matching the gram convention
    sq = np.einsum("ij,ij->i", X, X) / p
    diag = coeffs.c1 + coeffs.c2 * sq
    if include_identity:
        diag = coeffs.c0 + diag
    M[np.diag_indices(n)] = diag
    return M


class PowerIterationError(RuntimeError):
    """Power iteration failed to converge and no dense fallback applies."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def _power_top_eigenvalue(S, tol=1e-8, max_iter=1000):
    """Largest eigenvalue of a PSD matrix by power iteration.

    Returns (value, converged, residual).  Deterministic start vector; one
    matrix-vector product per step; convergence declared on the residual
    ||S x - lam x|| relative to lam.
    """
    n = S.shape[0]
    x = np.full(n, 1.0 / np.sqrt(n))
    lam = 0.0
    residual = np.inf
    for _ in range(max_iter):
        y = S @ x
        lam = float(x @ y)
        residual = float(np.linalg.norm(y - lam * x))
        if residual <= tol * max(1.0, abs(lam)):
            return lam, True, residual
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0, True, 0.0
        x = y / norm
    return lam, False, residual


def operator_norm_gap(A, B, *, tol: float = 1e-8, max_iter: int = 1000) -> float:
    """Operator norm (largest |eigenvalue|) of the symmetric difference A - B.

    Two shifted power iterations (shift = Gershgorin radius, so both
    shifted matrices are PSD) recover the extreme eigenvalues without
    deflation.  On non-convergence a dense symmetric eigendecomposition is
    used for n <= 2000; beyond that a :class:`PowerIterationError` carrying
    the iterate residual is raised.
    """
    A = check_square(A, "A")
    B = check_square(B, "B")
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    D = A - B
    n = D.shape[0]
    if n == 0:
        return 0.0
    shift = float(np.max(np.sum(np.abs(D), axis=1)))
    if shift == 0.0:
        return 0.0
    eye = shift * np.eye(n)
    hi, ok_hi, res_hi = _power_top_eigenvalue(D + eye, tol=tol, max_iter=max_iter)
    lo, ok_lo, res_lo = _power_top_eigenvalue(eye - D, tol=tol, max_iter=max_iter)
    if ok_hi and ok_lo:
        lam_max = hi - shift
        lam_min = shift - lo
        return max(abs(lam_max), abs(lam_min))
    if n <= 2000:
        w = np.linalg.eigvalsh(D)
        return float(np.max(np.abs(w)))
    raise PowerIterationError(
        f"power iteration did not converge within {max_iter} iterations "
        f"(residuals {res_hi:.3e}, {res_lo:.3e}) and n={n} exceeds the dense fallback",
        residual=max(res_hi, res_lo),
    )


@dataclass
class GapRecord:
    """One (p, trial) measurement from a convergence sweep."""

    p: int
    n: int
    trial: int
    seed: int
    gap_abs: float
    gap_rel: float
    kernel: str
    beta: float
    error: str | None = None


def gap_sweep(
    kernel: KernelDescriptor,
    cov_for_p,
    p_list,
    beta: float,
    trials: int,
    seed: int,
) -> list[GapRecord]:
    """Operator-norm gap ||K - M|| across growing dimension.

    ``cov_for_p`` maps a dimension p to a :class:`CovarianceSpec` (called
    once per p).  For each p, ``n = round(beta * p)`` Gaussian samples are
    drawn per trial with a derived child seed, and both the absolute and
    the relative (by ||K||) gap are recorded.  Per-trial failures are
    captured in the record instead of aborting the sweep.
    """
    from .datagen import FeatureModel, child_seed, sample_features

    records = []
    for p in p_list:
        p = int(p)
        n = int(round(beta * p))
        cov = cov_for_p(p)
        model = FeatureModel(cov=cov)
        for trial in range(int(trials)):
            trial_seed = child_seed(seed, "gap_sweep", kernel.name, p, trial)
            rec = GapRecord(
                p=p, n=n, trial=trial, seed=trial_seed,
                gap_abs=float("nan"), gap_rel=float("nan"),
                kernel=kernel.name, beta=float(beta),
            )
            try:
                coeffs = coefficients(kernel, cov)
                X = sample_features(model, n, trial_seed)
                K = gram(kernel, X)
                M = surrogate_matrix(coeffs, X)
                gap = operator_norm_gap(K, M)
                knorm = operator_norm_gap(K, np.zeros_like(K))
                rec.gap_abs = gap
                rec.gap_rel = gap / knorm if knorm > 0 else float("inf")
            except Exception as exc:  # keep sweeping; the record carries the reason
                rec.error = f"{type(exc).__name__}: {exc}"
            records.append(rec)
    return records


def write_gap_sweep_csv(records, path) -> None:
    """Write sweep records with columns p,n,trial,seed,gap_abs,gap_rel,kernel,beta."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["p", "n", "trial", "seed", "gap_abs", "gap_rel", "kernel", "beta"])
        for r in records:
            if r.error is not None:
                continue
            writer.writerow(
                [r.p, r.n, r.trial, r.seed, repr(r.gap_abs), repr(r.gap_rel), r.kernel, repr(r.beta)]
            )
