"""Kernel ridge regression, its equivalent linear model, and their dynamics.

Two closed-form estimators:

* kernel ridge regression, dual weights ``alpha = (K + lam I)^{-1} y``;
* a ridge-regularized affine model ``f(x) = <w, x> + b`` with separate
  penalties ``lambda1 |b|^2 + lambda2 ||w||^2``, solved in its n x n dual
  form.

For a kernel with surrogate coefficients (c0, c1, c2) the mapping

    lambda1 = (c0 + lam) / c1,      lambda2 = p (c0 + lam) / c2

makes the two estimators agree on fresh test points in the proportional
regime, and with the scalings ``gamma1 = sqrt(c1)``,
``gamma2 = sqrt(c2/p)`` their full-batch gradient-descent trajectories
(initialized at zero) agree step by step.  Closed-form trajectories are
evaluated through one symmetric eigendecomposition of the system matrix,
so any step count costs only scalar powers of eigenvalues.

Gaussian-process posterior mean/variance and the pointwise risk of an
arbitrary predictor under that posterior complete the module; the
posterior mean is the minimum-mean-squared-error predictor, so its risk
is the floor every other predictor is compared against.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh
from sklearn.base import BaseEstimator, RegressorMixin

from .kernels import KernelDescriptor, cross_gram, gram, kernel_diag
from .linearize import (
    CovarianceSpec,
    SurrogateCoefficients,
    _power_top_eigenvalue,
    coefficients,
)
from .validation import as_matrix, as_vector, check_square, require_positive

__all__ = [
    "NotPositiveDefiniteError",
    "KrrFit",
    "LinearFit",
    "Trajectory",
    "GpPosterior",
    "fit_krr",
    "predict_krr",
    "equivalent_regularizers",
    "fit_linear_ridge",
    "predict_linear",
    "default_learning_rate",
    "gd_kernel_trajectory",
    "gd_linear_trajectory",
    "gp_posterior",
    "linear_risk",
    "normalized_test_error",
    "fit_to_dict",
    "fit_to_json",
    "KernelRidge",
    "LinearRidge",
    "EquivalentLinearRidge",
    "GPRegressor",
]


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """An SPD solve failed; carries an estimate of the smallest eigenvalue."""

    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(f"{message} (estimated min eigenvalue {min_eigenvalue:.6e})")
        self.min_eigenvalue = min_eigenvalue


def _spd_solve(S: np.ndarray, rhs: np.ndarray, context: str) -> np.ndarray:
    """Cholesky solve with a diagnostic error on failure."""
    try:
        return cho_solve(cho_factor(S, lower=True, check_finite=False), rhs,
                         check_finite=False)
    except np.linalg.LinAlgError:
        min_eig = float(np.linalg.eigvalsh(S)[0])
        raise NotPositiveDefiniteError(context, min_eig) from None


@dataclass
class KrrFit:
    """Fitted kernel ridge regression state."""

    alpha: np.ndarray
    lam: float
    X_tr: np.ndarray | None = None
    kernel: KernelDescriptor | None = None


@dataclass
class LinearFit:
    """Fitted affine model with separate bias/weight ridge penalties."""

    w: np.ndarray
    b: float
    lambda1: float
    lambda2: float
    bias_dropped: bool = False


@dataclass
class Trajectory:
    """Closed-form gradient-descent predictions at selected step counts."""

    steps: np.ndarray          # (T,) integer step counts
    predictions: np.ndarray    # (T, n_ts)
    eta: float
    model_kind: str            # "kernel" | "scaled_linear"


@dataclass
class GpPosterior:
    """Per-test-point posterior of y_ts given the training data."""

    mean: np.ndarray
    variance: np.ndarray
    sigma2: float


def fit_krr(K, y_tr, lam: float, *, kernel: KernelDescriptor | None = None,
            X_tr=None) -> KrrFit:
    """Solve ``(K + lam I) alpha = y`` by Cholesky factorization.

    ``lam`` must be strictly positive; the ridgeless limit is rejected.
    ``kernel`` and ``X_tr`` may be attached so the fit can predict on new
    points via :func:`predict_krr`.
    """
    K = check_square(K, "K")
    lam = require_positive(lam, "lam")
    y = as_vector(y_tr, n=K.shape[0])
    S = K + lam * np.eye(K.shape[0])
    alpha = _spd_solve(S, y, "K + lam I is not numerically positive definite")
    return KrrFit(alpha=alpha, lam=lam,
                  X_tr=None if X_tr is None else as_matrix(X_tr), kernel=kernel)


def predict_krr(fit: KrrFit, X_ts) -> np.ndarray:
    """Predictions ``K(X_ts, X_tr) alpha``."""
    if fit.kernel is None or fit.X_tr is None:
        raise ValueError("fit was built without kernel/X_tr; cannot form cross kernel")
    C = cross_gram(fit.kernel, X_ts, fit.X_tr)
    return C @ fit.alpha


def equivalent_regularizers(
    lam: float, coeffs: SurrogateCoefficients, p: int
) -> tuple[float, float]:
    """Ridge penalties making the affine model match kernel ridge regression.

    Returns ``(lambda1, lambda2) = ((c0 + lam)/c1, p (c0 + lam)/c2)``.
    Requires ``c1 > 0`` and ``c2 > 0``: a kernel with ``c1 = 0`` (e.g. the
    pure linear kernel) has no bias penalty at this expansion, and
    ``c2 <= 0`` leaves no linear term at all.
    """
    lam = require_positive(lam, "lam")
    if not (coeffs.c1 > 0 and coeffs.c2 > 0):
        raise ValueError(
            "kernel has no linear-model equivalent at this expansion: "
            f"requires c1 > 0 and c2 > 0, got c1={coeffs.c1}, c2={coeffs.c2}"
        )
    lam1 = (coeffs.c0 + lam) / coeffs.c1
    lam2 = p * (coeffs.c0 + lam) / coeffs.c2
    return lam1, lam2


def fit_linear_ridge(X_tr, y_tr, lambda1: float, lambda2: float) -> LinearFit:
    """Affine ridge fit through the n x n dual system.

    Solves ``u = [X X^T / lambda2 + 1 1^T / lambda1 + I]^{-1} y`` and
    recovers ``w = X^T u / lambda2``, ``b = 1^T u / lambda1``, which equals
    the (p+1)-dimensional normal-equation solution of

        sum_i (y_i - <w, x_i> - b)^2 + lambda1 b^2 + lambda2 ||w||^2.

    ``lambda1 = inf`` is accepted and pins ``b = 0`` (the degenerate
    no-bias mode used when a kernel has ``c1 = 0``).
    """
    X = as_matrix(X_tr)
    n, p = X.shape
    y = as_vector(y_tr, n=n)
    lambda2 = require_positive(lambda2, "lambda2")
    bias_dropped = np.isinf(lambda1)
    if not bias_dropped:
        lambda1 = require_positive(lambda1, "lambda1")
    inv1 = 0.0 if bias_dropped else 1.0 / lambda1
    S = X @ X.T
    S /= lambda2
    S += inv1
    S[np.diag_indices(n)] += 1.0
    u = _spd_solve(S, y, "dual ridge system is not numerically positive definite")
    w = X.T @ u / lambda2
    b = 0.0 if bias_dropped else float(np.sum(u) / lambda1)
    return LinearFit(w=w, b=b, lambda1=float(lambda1), lambda2=lambda2,
                     bias_dropped=bool(bias_dropped))


def predict_linear(fit: LinearFit, X_ts) -> np.ndarray:
    X = as_matrix(X_ts, "X_ts", allow_empty=True)
    return X @ fit.w + fit.b


def default_learning_rate(S, lam: float = 0.0) -> float:
    """Step size ``1 / (lam_max(S) + lam)``.

    Keeps every eigenvalue of ``I - eta S`` strictly inside the unit
    circle for symmetric positive definite S.
    """
    S = check_square(S, "S")
    lam_max, converged, _ = _power_top_eigenvalue(S)
    if not converged:
        lam_max = float(np.linalg.eigvalsh(S)[-1])
    return 1.0 / (lam_max + lam)


def _gd_predictions(S, cross, y, eta, t_list):
    """Evaluate ``cross S^{-1} (I - (I - eta S)^t) y`` for each t.

    One symmetric eigendecomposition of S; each step count then costs a
    scalar power per eigenvalue, so large t is exact rather than iterated.
    """
    w, Q = eigh(S, check_finite=False)
    rho = float(np.max(np.abs(1.0 - eta * w)))
    if rho >= 1.0:
        warnings.warn(
            f"learning rate eta={eta} gives spectral radius {rho:.4f} >= 1; "
            "the trajectory will not converge",
            RuntimeWarning,
            stacklevel=3,
        )
    Qty = Q.T @ y
    CQ = cross @ Q
    t_arr = np.asarray(list(t_list), dtype=np.int64)
    preds = np.empty((t_arr.shape[0], cross.shape[0]))
    for idx, t in enumerate(t_arr):
        if t == 0:
            preds[idx] = 0.0
            continue
        factor = (1.0 - (1.0 - eta * w) ** t) / w
        preds[idx] = CQ @ (factor * Qty)
    return t_arr, preds


def gd_kernel_trajectory(K, cross, y_tr, lam: float, eta: float | None,
                         t_list) -> Trajectory:
    """Kernel-model gradient descent evaluated in closed form.

    After t full-batch steps from zero initialization the predictions are
    ``cross (K + lam I)^{-1} (I - (I - eta (K + lam I))^t) y``.  ``eta=None``
    selects :func:`default_learning_rate` of the system matrix.
    """
    K = check_square(K, "K")
    lam = require_positive(lam, "lam")
    cross = np.asarray(cross, dtype=np.float64)
    y = as_vector(y_tr, n=K.shape[0])
    S = K + lam * np.eye(K.shape[0])
    if eta is None:
        eta = default_learning_rate(S, lam)
    steps, preds = _gd_predictions(S, cross, y, eta, t_list)
    return Trajectory(steps=steps, predictions=preds, eta=float(eta),
                      model_kind="kernel")


def gd_linear_trajectory(X_tr, X_ts, y_tr, coeffs: SurrogateCoefficients,
                         lam: float, eta: float | None, t_list) -> Trajectory:
    """Scaled-linear-model gradient descent evaluated in closed form.

    Uses the scalings ``gamma1 = sqrt(c1)``, ``gamma2 = sqrt(c2/p)`` and the
    equivalent penalties, under which the n x n system matrix becomes
    ``gamma2^2 X X^T + gamma1^2 11^T + (c0 + lam) I`` and the trajectory is
    directly comparable, step for step, with the kernel one.
    """
    X = as_matrix(X_tr)
    n, p = X.shape
    Xts = as_matrix(X_ts, "X_ts", allow_empty=True)
    y = as_vector(y_tr, n=n)
    lam = require_positive(lam, "lam")
    lam1, lam2 = equivalent_regularizers(lam, coeffs, p)
    g1sq = coeffs.c1
    g2sq = coeffs.c2 / p
    S = X @ X.T
    S *= g2sq
    S += g1sq
    S[np.diag_indices(n)] += g2sq * lam2  # g2sq * lam2 == c0 + lam
    cross = g2sq * (Xts @ X.T) + g1sq
    if eta is None:
        eta = default_learning_rate(S, lam)
    steps, preds = _gd_predictions(S, cross, y, eta, t_list)
    return Trajectory(steps=steps, predictions=preds, eta=float(eta),
                      model_kind="scaled_linear")


def gp_posterior(kernel: KernelDescriptor, X_tr, y_tr, X_ts,
                 sigma2: float) -> GpPosterior:
    """Posterior mean and variance of noisy observations at the test points.

    Under ``y = f(x) + noise`` with ``f`` a centered Gaussian process with
    covariance given by the kernel and observation noise ``sigma2``:

        mean     = K(X_ts, X_tr) (K + sigma2 I)^{-1} y_tr
        variance = sigma2 + K(x, x)
                   - K(x, X_tr) (K + sigma2 I)^{-1} K(X_tr, x)

    With no training points the prior is returned.  The posterior mean is
    the Bayes-optimal squared-error predictor of y_ts and the variance is
    its risk.
    """
    sigma2 = require_positive(sigma2, "sigma2")
    Xts = as_matrix(X_ts, "X_ts")
    prior_var = kernel_diag(kernel, Xts)
    if X_tr is None or np.size(X_tr) == 0:
        n_ts = Xts.shape[0]
        return GpPosterior(mean=np.zeros(n_ts), variance=sigma2 + prior_var,
                           sigma2=sigma2)
    X = as_matrix(X_tr)
    y = as_vector(y_tr, n=X.shape[0])
    K = gram(kernel, X)
    S = K + sigma2 * np.eye(K.shape[0])
    C = cross_gram(kernel, Xts, X)
    alpha = _spd_solve(S, y, "K + sigma2 I is not numerically positive definite")
    mean = C @ alpha
    V = _spd_solve(S, C.T, "K + sigma2 I is not numerically positive definite")
    variance = sigma2 + prior_var - np.einsum("ij,ji->i", C, V)
    return GpPosterior(mean=mean, variance=variance, sigma2=sigma2)


def linear_risk(posterior: GpPosterior, predictions) -> np.ndarray:
    """Pointwise squared-error risk of a predictor under the posterior.

    ``E[(y_ts - f(x_ts))^2 | data] = variance + (mean - f(x_ts))^2``; equals
    the Bayes risk exactly when the predictor is the posterior mean.
    """
    f = as_vector(predictions, "predictions", n=posterior.mean.shape[0])
    return posterior.variance + (posterior.mean - f) ** 2


def normalized_test_error(y_ts, y_hat) -> float:
    """Squared error normalized by the uncentered second moment of y.

    ``sum (y_i - yhat_i)^2 / sum y_i^2``; 0 for perfect predictions, 1 for
    the zero predictor.
    """
    y = as_vector(y_ts, "y_ts")
    f = as_vector(y_hat, "y_hat", n=y.shape[0])
    denom = float(y @ y)
    if denom == 0.0:
        raise ValueError("y_ts has zero norm; normalized error undefined")
    resid = y - f
    return float(resid @ resid) / denom


def fit_to_dict(fit, *, seed: int | None = None) -> dict:
    """JSON-ready summary of a fit, for experiment provenance."""
    out: dict = {"seed": seed}
    if isinstance(fit, KrrFit):
        out.update(model="krr", lam=fit.lam, alpha=fit.alpha.tolist())
        if fit.kernel is not None:
            from .kernels import kernel_to_config

            out["kernel"] = kernel_to_config(fit.kernel)
    elif isinstance(fit, LinearFit):
        out.update(model="linear", w=fit.w.tolist(), b=fit.b,
                   lambda1=fit.lambda1, lambda2=fit.lambda2,
                   bias_dropped=fit.bias_dropped)
    else:
        raise TypeError(f"unsupported fit type {type(fit).__name__}")
    return out


def fit_to_json(fit, path, *, seed: int | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(fit_to_dict(fit, seed=seed), fh, indent=2)


# ---------------------------------------------------------------------------
# scikit-learn style estimator layer
# ---------------------------------------------------------------------------


def _resolve_kernel(kernel) -> KernelDescriptor:
    if isinstance(kernel, KernelDescriptor):
        return kernel
    if isinstance(kernel, dict):
        from .kernels import kernel_from_config

        return kernel_from_config(kernel)
    raise TypeError("kernel must be a KernelDescriptor or a config dict")


class KernelRidge(BaseEstimator, RegressorMixin):
    """Kernel ridge regression over the normalized three-argument kernels.

    Parameters
    ----------
    kernel : KernelDescriptor or config dict
    lam : float, positive ridge penalty
    """

    def __init__(self, kernel=None, lam: float = 1.0):
        self.kernel = kernel
        self.lam = lam

    def fit(self, X, y):
        k = _resolve_kernel(self.kernel)
        X = as_matrix(X)
        K = gram(k, X)
        fit = fit_krr(K, y, self.lam, kernel=k, X_tr=X)
        self.kernel_ = k
        self.X_fit_ = X
        self.dual_coef_ = fit.alpha
        self._fit = fit
        return self

    def predict(self, X):
        return predict_krr(self._fit, X)


class LinearRidge(BaseEstimator, RegressorMixin):
    """Affine model with separate bias and weight ridge penalties."""

    def __init__(self, lambda1: float = 1.0, lambda2: float = 1.0):
        self.lambda1 = lambda1
        self.lambda2 = lambda2

    def fit(self, X, y):
        fit = fit_linear_ridge(X, y, self.lambda1, self.lambda2)
        self.coef_ = fit.w
        self.intercept_ = fit.b
        self._fit = fit
        return self

    def predict(self, X):
        return predict_linear(self._fit, X)


class EquivalentLinearRidge(BaseEstimator, RegressorMixin):
    """The affine model matched to a kernel ridge regression.

    Derives (lambda1, lambda2) from the kernel's surrogate coefficients
    under the stated covariance and ridge penalty, then fits the affine
    dual.  For kernels with ``c1 = 0`` the bias path degenerates; with
    ``allow_degenerate_bias=True`` the bias is pinned to zero (flagged via
    ``bias_dropped_``) instead of raising.

    Parameters
    ----------
    kernel : KernelDescriptor or config dict
    cov : CovarianceSpec
    lam : float, the kernel-side ridge penalty being matched
    allow_degenerate_bias : bool
    """

    def __init__(self, kernel=None, cov: CovarianceSpec | None = None,
                 lam: float = 1.0, allow_degenerate_bias: bool = False):
        self.kernel = kernel
        self.cov = cov
        self.lam = lam
        self.allow_degenerate_bias = allow_degenerate_bias

    def fit(self, X, y):
        k = _resolve_kernel(self.kernel)
        X = as_matrix(X)
        coeffs = coefficients(k, self.cov)
        if coeffs.c1 <= 0 and coeffs.c2 > 0 and self.allow_degenerate_bias:
            lam1 = np.inf
            lam2 = X.shape[1] * (coeffs.c0 + self.lam) / coeffs.c2
        else:
            lam1, lam2 = equivalent_regularizers(self.lam, coeffs, X.shape[1])
        fit = fit_linear_ridge(X, y, lam1, lam2)
        self.coeffs_ = coeffs
        self.lambda1_ = lam1
        self.lambda2_ = lam2
        self.coef_ = fit.w
        self.intercept_ = fit.b
        self.bias_dropped_ = fit.bias_dropped
        self._fit = fit
        return self

    def predict(self, X):
        return predict_linear(self._fit, X)


class GPRegressor(BaseEstimator, RegressorMixin):
    """Gaussian-process posterior regressor with fixed noise variance."""

    def __init__(self, kernel=None, sigma2: float = 0.1):
        self.kernel = kernel
        self.sigma2 = sigma2

    def fit(self, X, y):
        self.kernel_ = _resolve_kernel(self.kernel)
        self.X_fit_ = as_matrix(X)
        self.y_fit_ = as_vector(y, n=self.X_fit_.shape[0])
        return self

    def predict(self, X, return_var: bool = False):
        post = gp_posterior(self.kernel_, self.X_fit_, self.y_fit_, X, self.sigma2)
        if return_var:
            return post.mean, post.variance
        return post.mean
