"""Kernels of the three-argument normalized form and their Gram matrices.

Every kernel here is described by a scalar function

    K(x_i, x_j) = g(||x_i||^2 / p,  <x_i, x_j> / p,  ||x_j||^2 / p),

i.e. a function of the two normalized squared norms and the normalized
inner product.  This covers inner-product kernels (linear, polynomial),
shift-invariant kernels (RBF), and the tangent kernel of fully connected
ReLU networks.  ``g`` must be numpy-vectorized: it is evaluated on
broadcast blocks during Gram assembly.

The ReLU tangent kernel is evaluated through the arc-cosine recursion

    Sigma_l = ||u|| ||v|| kappa1(Sigma_{l-1} / (||u|| ||v||)),
    K_l     = Sigma_l + K_{l-1} kappa0(Sigma_{l-1} / (||u|| ||v||)),

seeded with K_0 = Sigma_0 = <u, v>.  One recursion level corresponds to
one hidden layer of the network.  The descriptor returned by
:func:`make_ntk_kernel` reports K_depth / p so that its output stays O(1)
under the /p argument convention above (the recursion is 1-homogeneous in
the squared norms, so dividing the three arguments by p divides the value
by p).

A finite-width Monte-Carlo oracle (:func:`empirical_ntk`) evaluates the
exact parameter-gradient inner product of a one-hidden-layer ReLU network
and is used to validate the recursion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .validation import as_matrix, require_positive

__all__ = [
    "KernelDescriptor",
    "make_linear_kernel",
    "make_polynomial_kernel",
    "make_rbf_kernel",
    "make_ntk_kernel",
    "kernel_from_config",
    "kernel_to_config",
    "kappa0",
    "kappa1",
    "gram",
    "cross_gram",
    "kernel_diag",
    "ntk_exact",
    "empirical_ntk",
]

# Rows per block during Gram assembly; entries are pure functions of the
# inputs so blocking cannot change the result.
_BLOCK = 64


@dataclass(eq=False)
class KernelDescriptor:
    """A kernel as a scalar function of the normalized arguments.

    Parameters
    ----------
    name : str
        Identifier, also used for config serialization.
    g : callable
        Vectorized ``g(z1, z2, z3)`` where ``z1 = ||x_i||^2/p``,
        ``z2 = <x_i, x_j>/p`` and ``z3 = ||x_j||^2/p``.
    d_g_dz2, d2_g_dz2 : callable or None
        Optional analytic first and second partial derivatives of ``g``
        with respect to the second argument.  When absent, downstream code
        falls back to central finite differences.
    params : dict
        Constructor parameters, kept for round-tripping through config
        files.
    """

    name: str
    g: Callable
    d_g_dz2: Callable | None = None
    d2_g_dz2: Callable | None = None
    params: dict = field(default_factory=dict)

    def __call__(self, z1, z2, z3):
        return self.g(z1, z2, z3)


def make_linear_kernel() -> KernelDescriptor:
    """Inner-product kernel ``g(z1, z2, z3) = z2``."""

    def g(z1, z2, z3):
        z1, z2, z3 = np.broadcast_arrays(z1, z2, z3)
        return np.asarray(z2, dtype=np.float64)

    return KernelDescriptor(
        name="linear",
        g=g,
        d_g_dz2=lambda z1, z2, z3: np.ones_like(np.asarray(z2, dtype=np.float64)),
        d2_g_dz2=lambda z1, z2, z3: np.zeros_like(np.asarray(z2, dtype=np.float64)),
    )


def make_polynomial_kernel(c: float, d: int) -> KernelDescriptor:
    """Polynomial kernel ``g = (z2 + c)^d`` with analytic derivatives.

    ``c >= 0`` balances low- against high-degree terms; ``d >= 1``.
    """
    c = float(c)
    if c < 0:
        raise ValueError(f"offset c must be nonnegative, got {c}")
    d = int(d)
    if d < 1:
        raise ValueError(f"degree d must be a positive integer, got {d}")

    def g(z1, z2, z3):
        return (np.asarray(z2, dtype=np.float64) + c) ** d

    def dg(z1, z2, z3):
        return d * (np.asarray(z2, dtype=np.float64) + c) ** (d - 1)

    def d2g(z1, z2, z3):
        z2 = np.asarray(z2, dtype=np.float64)
        if d < 2:
            return np.zeros_like(z2)
        return d * (d - 1) * (z2 + c) ** (d - 2)

    return KernelDescriptor(
        name="polynomial", g=g, d_g_dz2=dg, d2_g_dz2=d2g, params={"c": c, "d": d}
    )


def make_rbf_kernel(bandwidth: float) -> KernelDescriptor:
    """Gaussian kernel ``g = exp(-(z1 - 2 z2 + z3) / (2 bandwidth^2))``.

    ``z1 - 2 z2 + z3`` is the normalized squared distance, so this is the
    usual RBF kernel on ``x / sqrt(p)``.
    """
    bw = require_positive(bandwidth, "bandwidth")
    inv2 = 1.0 / bw**2

    def g(z1, z2, z3):
        # (z1 + z3) first: keeps g bit-symmetric in its outer arguments
        sqdist = (np.asarray(z1, dtype=np.float64) + np.asarray(z3)) - 2.0 * np.asarray(z2)
        return np.exp(-0.5 * inv2 * sqdist)

    return KernelDescriptor(
        name="rbf",
        g=g,
        d_g_dz2=lambda z1, z2, z3: inv2 * g(z1, z2, z3),
        d2_g_dz2=lambda z1, z2, z3: inv2 * inv2 * g(z1, z2, z3),
        params={"bandwidth": bw},
    )


def kappa0(t):
    """Arc-cosine function ``(pi - arccos t) / pi`` on [-1, 1].

    The argument is clamped to [-1, 1] first: rounding in the recursion can
    push cosines infinitesimally outside the interval.
    """
    t = np.clip(t, -1.0, 1.0)
    return 1.0 - np.arccos(t) / np.pi


def kappa1(t):
    """Arc-cosine function ``(t (pi - arccos t) + sqrt(1 - t^2)) / pi``."""
    t = np.clip(t, -1.0, 1.0)
    return (t * (np.pi - np.arccos(t)) + np.sqrt(1.0 - t * t)) / np.pi


def _ntk_recursion(sq_u, inner, sq_v, depth: int):
    """Run ``depth`` levels of the arc-cosine recursion.

    Arguments are ``||u||^2``, ``<u, v>`` and ``||v||^2`` (broadcastable
    arrays).  Returns the tangent-kernel value at the final level.  The
    recursion is jointly 1-homogeneous in its arguments, which is what lets
    callers feed either raw squared norms or the /p-normalized ones.
    """
    norm_prod = np.sqrt(np.asarray(sq_u, dtype=np.float64) * np.asarray(sq_v, dtype=np.float64))
    sigma, norm_prod = np.broadcast_arrays(np.asarray(inner, dtype=np.float64), norm_prod)
    sigma = sigma.astype(np.float64, copy=True)
    ker = sigma.copy()
    for _ in range(depth):
        t = sigma / norm_prod
        sigma = norm_prod * kappa1(t)
        ker = sigma + ker * kappa0(t)
    return ker


def make_ntk_kernel(depth: int) -> KernelDescriptor:
    """Tangent kernel of a fully connected ReLU network.

    ``depth`` counts recursion levels, i.e. hidden layers of the network
    (the network has ``depth + 1`` weight layers).  On the diagonal the
    value is ``(depth + 1) ||x||^2 / p``.  No analytic derivatives are
    attached; coefficient extraction uses finite differences.
    """
    depth = int(depth)
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")

    def g(z1, z2, z3):
        z1 = np.asarray(z1, dtype=np.float64)
        z3 = np.asarray(z3, dtype=np.float64)
        if np.any(z1 <= 0) or np.any(z3 <= 0):
            raise ValueError("ntk kernel requires strictly positive squared norms")
        return _ntk_recursion(z1, z2, z3, depth)

    return KernelDescriptor(name="ntk", g=g, params={"depth": depth})


def ntk_exact(u, v, depth: int) -> float:
    """Unnormalized analytic tangent-kernel value ``K_depth(u, v)``.

    Reference implementation on raw vectors; used as the infinite-width
    target of :func:`empirical_ntk` and by tests.
    """
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    sq_u = float(u @ u)
    sq_v = float(v @ v)
    if sq_u <= 0 or sq_v <= 0:
        raise ValueError("ntk kernel requires nonzero vectors")
    return float(_ntk_recursion(sq_u, float(u @ v), sq_v, int(depth)))


_KERNEL_FACTORIES = {
    "linear": make_linear_kernel,
    "polynomial": make_polynomial_kernel,
    "rbf": make_rbf_kernel,
    "ntk": make_ntk_kernel,
}


def kernel_from_config(config: dict) -> KernelDescriptor:
    """Build a kernel from ``{"type": name, "params": {...}}``."""
    if "type" not in config:
        raise ValueError("kernel config needs a 'type' key")
    ktype = config["type"]
    if ktype not in _KERNEL_FACTORIES:
        raise ValueError(
            f"unknown kernel type {ktype!r}; expected one of {sorted(_KERNEL_FACTORIES)}"
        )
    params = dict(config.get("params", {}))
    return _KERNEL_FACTORIES[ktype](**params)


def kernel_to_config(kernel: KernelDescriptor) -> dict:
    """Inverse of :func:`kernel_from_config`."""
    return {"type": kernel.name, "params": dict(kernel.params)}


def _normalized_sq_norms(X: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", X, X) / X.shape[1]


def gram(kernel: KernelDescriptor, X) -> np.ndarray:
    """Kernel matrix ``K[i, j] = g(||x_i||^2/p, <x_i,x_j>/p, ||x_j||^2/p)``.

    Inner products come from one matrix product; ``g`` is then evaluated
    blockwise (64-row panels) on the upper triangle and mirrored, so the
    result is exactly symmetric.  Row norms are computed once, and the
    diagonal is evaluated at exactly ``z2 = z1 = z3`` (the rounding of a
    matrix-product diagonal would otherwise leak through kernels with a
    cusp there, like the ReLU tangent kernel).  Rejects non-finite inputs.
    """
    X = as_matrix(X)
    n, p = X.shape
    sq = _normalized_sq_norms(X)
    inner = X @ X.T
    inner /= p
    K = np.empty((n, n), dtype=np.float64)
    for i0 in range(0, n, _BLOCK):
        i1 = min(i0 + _BLOCK, n)
        for j0 in range(i0, n, _BLOCK):
            j1 = min(j0 + _BLOCK, n)
            block = np.asarray(
                kernel.g(sq[i0:i1, None], inner[i0:i1, j0:j1], sq[None, j0:j1])
            )
            if i0 == j0:
                # diagonal block: keep the upper triangle, mirror the rest
                block = np.triu(block) + np.triu(block, 1).T
            K[i0:i1, j0:j1] = block
            if j0 > i0:
                K[j0:j1, i0:i1] = block.T
    K[np.diag_indices(n)] = np.asarray(kernel.g(sq, sq, sq), dtype=np.float64)
    return K


def cross_gram(kernel: KernelDescriptor, X1, X2) -> np.ndarray:
    """Rectangular kernel matrix between the rows of ``X1`` and ``X2``."""
    X1 = as_matrix(X1, "X1")
    X2 = as_matrix(X2, "X2", allow_empty=True)
    if X1.shape[1] != X2.shape[1]:
        raise ValueError(
            f"feature dimensions differ: {X1.shape[1]} vs {X2.shape[1]}"
        )
    n1, p = X1.shape
    n2 = X2.shape[0]
    sq1 = _normalized_sq_norms(X1)
    sq2 = _normalized_sq_norms(X2) if n2 else np.empty(0)
    inner = X1 @ X2.T
    inner /= p
    K = np.empty((n1, n2), dtype=np.float64)
    for i0 in range(0, n1, _BLOCK):
        i1 = min(i0 + _BLOCK, n1)
        K[i0:i1] = np.asarray(kernel.g(sq1[i0:i1, None], inner[i0:i1], sq2[None, :]))
    return K


def kernel_diag(kernel: KernelDescriptor, X) -> np.ndarray:
    """Per-row self kernel values ``K(x_i, x_i)``."""
    X = as_matrix(X, allow_empty=True)
    if X.shape[0] == 0:
        return np.empty(0)
    sq = _normalized_sq_norms(X)
    return np.asarray(kernel.g(sq, sq, sq), dtype=np.float64).reshape(-1)


def empirical_ntk(width: int, u, v, n_trials: int = 1, seed: int = 0) -> float:
    """Finite-width tangent kernel of a one-hidden-layer ReLU network.

    The network is ``f(x) = sqrt(2/m) <w2, relu(W1 x)>`` with all weights
    i.i.d. standard normal.  Returns the average over ``n_trials``
    independent initializations of ``<grad_theta f(u), grad_theta f(v)>``,
    with both gradient blocks (W1 and w2) written out in closed form.

    As ``width -> infinity`` this converges to ``ntk_exact(u, v, depth=1)``,
    one application of the arc-cosine recursion.
    """
    m = int(width)
    if m < 1:
        raise ValueError(f"width must be >= 1, got {m}")
    n_trials = int(n_trials)
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if u.shape != v.shape:
        raise ValueError("u and v must have the same dimension")

    ss = np.random.SeedSequence(seed)
    total = 0.0
    for child in ss.spawn(n_trials):
        rng = np.random.default_rng(child)
        W1 = rng.standard_normal((m, u.shape[0]))
        w2 = rng.standard_normal(m)
        hu = W1 @ u
        hv = W1 @ v
        # d f / d w2 block
        out_block = np.maximum(hu, 0.0) @ np.maximum(hv, 0.0)
        # d f / d W1 block: w2_k^2 relu'(hu_k) relu'(hv_k) <u, v>
        active = (hu > 0) & (hv > 0)
        in_block = (w2[active] @ w2[active]) * (u @ v)
        total += (2.0 / m) * (out_block + in_block)
    return total / n_trials
