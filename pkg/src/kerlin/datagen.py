"""Seeded synthetic data: features, teachers, and the low-rank mixture.

Features follow ``x = Sigma^{1/2} z`` with i.i.d. standardized entries of
z (Gaussian by default; Rademacher and scaled-uniform variants exercise
the same first two moments with different tails).  Teachers map inputs to
responses: a finite ReLU network with fixed random weights, or a joint
Gaussian-process draw over train and test points.  Everything is a pure
function of (config, seed); child seeds derive from a master seed by
hashing stable role tags, so parallel trial layouts cannot change values.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kernels import KernelDescriptor, gram
from .linearize import CovarianceSpec
from .validation import as_matrix, as_vector, require_nonnegative

__all__ = [
    "child_seed",
    "child_rng",
    "FeatureModel",
    "sample_features",
    "ReluTeacher",
    "relu_teacher",
    "gp_teacher_outputs",
    "mixture_covariance",
    "sample_mixture",
    "Dataset",
    "save_dataset",
    "load_dataset",
]

_Z_DISTS = ("gaussian", "rademacher", "uniform_scaled")

# GP draws on near-singular kernels: diagonal jitter starts at 1e-10 of the
# mean diagonal and escalates tenfold up to 1e-4 of it before giving up.
_JITTER_START = 1e-10
_JITTER_MAX = 1e-4


def child_seed(master_seed: int, *keys) -> int:
    """Stable 64-bit child seed from a master seed and role keys.

    Hash-based (SHA-256 over the master seed and the stringified keys), so
    the value depends only on the identifiers, never on execution order.
    """
    h = hashlib.sha256()
    h.update(str(int(master_seed)).encode())
    for key in keys:
        h.update(b"\x1f")
        h.update(str(key).encode())
    return int.from_bytes(h.digest()[:8], "little")


def child_rng(master_seed: int, *keys) -> np.random.Generator:
    """Generator seeded by :func:`child_seed`."""
    return np.random.default_rng(child_seed(master_seed, *keys))


@dataclass
class FeatureModel:
    """Feature law: covariance plus the distribution of the i.i.d. entries."""

    cov: CovarianceSpec
    z_dist: str = "gaussian"

    def __post_init__(self):
        if self.z_dist not in _Z_DISTS:
            raise ValueError(f"z_dist must be one of {_Z_DISTS}, got {self.z_dist!r}")

    @property
    def p(self) -> int:
        return self.cov.p


def _draw_z(rng: np.random.Generator, n: int, p: int, z_dist: str) -> np.ndarray:
    if z_dist == "gaussian":
        return rng.standard_normal((n, p))
    if z_dist == "rademacher":
        return rng.integers(0, 2, size=(n, p)).astype(np.float64) * 2.0 - 1.0
    # uniform on [-sqrt(3), sqrt(3)] has unit variance
    root3 = np.sqrt(3.0)
    return rng.uniform(-root3, root3, size=(n, p))


def sample_features(model: FeatureModel, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` i.i.d. feature rows; bit-identical for equal seeds."""
    n = int(n)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    cov = model.cov
    if cov.kind == "low_rank_mixture":
        return sample_mixture(cov, n, rng, z_dist=model.z_dist)
    Z = _draw_z(rng, n, cov.p, model.z_dist)
    if cov.kind == "identity":
        return Z
    if cov.kind == "diagonal":
        return Z * np.sqrt(cov.values)
    return Z @ cov.sqrt_factor().T


def sample_mixture(cov: CovarianceSpec, n: int, rng: np.random.Generator,
                   z_dist: str = "gaussian") -> np.ndarray:
    """Draw from the uniform mixture of low-rank Gaussians ``x = S_c g``."""
    if cov.kind != "low_rank_mixture":
        raise ValueError("sample_mixture requires a low_rank_mixture covariance")
    k = len(cov.factors)
    labels = rng.integers(0, k, size=n)
    X = np.empty((n, cov.p))
    for c, S in enumerate(cov.factors):
        idx = np.flatnonzero(labels == c)
        if idx.size == 0:
            continue
        G = _draw_z(rng, idx.size, S.shape[1], z_dist)
        X[idx] = G @ S.T
    return X


def mixture_covariance(p: int, r: int, k: int = 2, seed: int = 0) -> CovarianceSpec:
    """Low-rank mixture covariance from k factors S_c (p x r).

    Entries of each factor are i.i.d. centered Gaussian with variance
    1/sqrt(p); the overall covariance (1/k) sum_c S_c S_c^T has rank at
    most k*r, so the data spans only a k*r-dimensional subspace.
    """
    p, r, k = int(p), int(r), int(k)
    if r > p:
        raise ValueError(f"rank r={r} cannot exceed dimension p={p}")
    if k < 1:
        raise ValueError(f"need at least one component, got k={k}")
    rng = np.random.default_rng(seed)
    scale = p ** -0.25  # standard deviation: variance 1/sqrt(p)
    factors = tuple(scale * rng.standard_normal((p, r)) for _ in range(k))
    return CovarianceSpec.low_rank_mixture(factors)


class ReluTeacher:
    """Deterministic finite ReLU network used as a ground-truth function.

    Bias-free network with hidden widths ``widths``; every layer applies
    the sqrt(2 / fan_in) scaling (the first layer included, with fan_in =
    p) and weights are i.i.d. standard normal fixed by the seed.  The map
    is positively 1-homogeneous and sends 0 to 0.
    """

    def __init__(self, widths, p: int, seed: int = 0):
        widths = tuple(int(w) for w in widths)
        if not widths:
            raise ValueError("widths must be nonempty")
        self.widths = widths
        self.p = int(p)
        self.seed = int(seed)
        rng = np.random.default_rng(seed)
        fan_ins = (self.p,) + widths
        self.weights = [
            rng.standard_normal((widths[i], fan_ins[i])) for i in range(len(widths))
        ]
        self.w_out = rng.standard_normal(widths[-1])

    def __call__(self, X) -> np.ndarray:
        H = as_matrix(X, allow_empty=True)
        for W in self.weights:
            H = np.maximum(H @ W.T * np.sqrt(2.0 / W.shape[1]), 0.0)
        return H @ self.w_out * np.sqrt(2.0 / self.w_out.shape[0])


def relu_teacher(widths, p: int, seed: int = 0) -> ReluTeacher:
    """Build a :class:`ReluTeacher`."""
    return ReluTeacher(widths, p, seed)


def gp_teacher_outputs(kernel: KernelDescriptor, X_all, n_tr: int,
                       sigma2: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Joint Gaussian-process responses over train and test points.

    Draws f over all rows of ``X_all`` from N(0, K + jitter I) via Cholesky
    with escalating jitter, adds i.i.d. N(0, sigma2) observation noise,
    and splits after row ``n_tr``.  Raises with a condition estimate when
    even the maximum jitter cannot make the kernel matrix factorizable.
    """
    X_all = as_matrix(X_all)
    n_tr = int(n_tr)
    if not 0 <= n_tr <= X_all.shape[0]:
        raise ValueError(f"n_tr={n_tr} out of range for {X_all.shape[0]} rows")
    sigma2 = require_nonnegative(sigma2, "sigma2")
    rng = np.random.default_rng(seed)
    K = gram(kernel, X_all)
    n = K.shape[0]
    mean_diag = float(np.mean(np.diag(K)))
    if mean_diag <= 0:
        mean_diag = 1.0
    jitter = _JITTER_START * mean_diag
    L = None
    while jitter <= _JITTER_MAX * mean_diag:
        try:
            L = np.linalg.cholesky(K + jitter * np.eye(n))
            break
        except np.linalg.LinAlgError:
            jitter *= 10.0
    if L is None:
        w = np.linalg.eigvalsh(K)
        cond = abs(w[-1]) / max(abs(w[0]), np.finfo(float).tiny)
        raise np.linalg.LinAlgError(
            "kernel matrix not factorizable even with maximum jitter "
            f"(condition estimate {cond:.3e}, min eigenvalue {w[0]:.3e})"
        )
    f = L @ rng.standard_normal(n)
    y = f + np.sqrt(sigma2) * rng.standard_normal(n)
    return y[:n_tr], y[n_tr:]


@dataclass
class Dataset:
    """Train/test split plus the metadata needed to regenerate it."""

    X_tr: np.ndarray
    y_tr: np.ndarray
    X_ts: np.ndarray
    y_ts: np.ndarray
    meta: dict = field(default_factory=dict)


def save_dataset(directory, dataset: Dataset) -> None:
    """One CSV per matrix plus a JSON sidecar (config, seeds, shapes)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    arrays = {
        "X_tr": dataset.X_tr,
        "y_tr": dataset.y_tr,
        "X_ts": dataset.X_ts,
        "y_ts": dataset.y_ts,
    }
    shapes = {}
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype=np.float64)
        shapes[name] = list(arr.shape)
        np.savetxt(directory / f"{name}.csv", np.atleast_2d(arr), delimiter=",",
                   fmt="%.17g")
    sidecar = {"meta": dataset.meta, "shapes": shapes}
    with open(directory / "dataset.json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)


def load_dataset(directory) -> Dataset:
    """Inverse of :func:`save_dataset`."""
    directory = Path(directory)
    with open(directory / "dataset.json") as fh:
        sidecar = json.load(fh)
    arrays = {}
    for name, shape in sidecar["shapes"].items():
        arr = np.loadtxt(directory / f"{name}.csv", delimiter=",", ndmin=2)
        arrays[name] = arr.reshape(shape)
    return Dataset(X_tr=arrays["X_tr"], y_tr=as_vector(arrays["y_tr"], "y_tr"),
                   X_ts=arrays["X_ts"], y_ts=as_vector(arrays["y_ts"], "y_ts"),
                   meta=sidecar["meta"])
