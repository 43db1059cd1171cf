"""Shared input-validation helpers.

Thin wrappers that normalize user input to float64 ndarrays and fail early
with readable messages, in the spirit of scikit-learn's ``check_array``.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "as_matrix",
    "as_vector",
    "check_square",
    "require_positive",
    "require_nonnegative",
]


def as_matrix(X, name: str = "X", *, allow_empty: bool = False) -> np.ndarray:
    """Coerce ``X`` to a 2-d float64 array with finite entries."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {X.shape}")
    if not allow_empty and X.shape[0] == 0:
        raise ValueError(f"{name} must have at least one row")
    if X.size and not np.isfinite(X).all():
        raise ValueError(f"{name} contains NaN or infinite entries")
    return X


def as_vector(y, name: str = "y", *, n: int | None = None) -> np.ndarray:
    """Coerce ``y`` to a 1-d float64 array, optionally of length ``n``."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.size and not np.isfinite(y).all():
        raise ValueError(f"{name} contains NaN or infinite entries")
    if n is not None and y.shape[0] != n:
        raise ValueError(f"{name} has length {y.shape[0]}, expected {n}")
    return y


def check_square(K, name: str = "K") -> np.ndarray:
    """Coerce to a square 2-d float64 array."""
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError(f"{name} must be square, got shape {K.shape}")
    return K


def require_positive(value: float, name: str) -> float:
    value = float(value)
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value


def require_nonnegative(value: float, name: str) -> float:
    value = float(value)
    if value < 0:
        raise ValueError(f"{name} must be nonnegative, got {value}")
    return value
