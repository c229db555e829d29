"""Vector primitives shared by every algorithm: the clipping projection,
deterministic contractive compressors, and the common node-mean reduction.

Everything here is float64 and pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "check_vector",
    "clip",
    "clip_residual_norm",
    "Compressor",
    "compress",
    "node_mean",
]


def check_vector(x) -> np.ndarray:
    """Coerce to a 1-d float64 array, rejecting NaN/Inf components."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("vector has non-finite components")
    return arr


def _check_threshold(tau) -> float:
    tau = float(tau)
    if not np.isfinite(tau) or tau <= 0.0:
        raise ConfigurationError(f"clip threshold must be a positive real, got {tau}")
    return tau


def clip(x, tau) -> np.ndarray:
    """Project x onto the closed ball of radius tau.

    The boundary case ``||x|| == tau`` takes the copy branch, so any input
    inside the ball comes back bit-identical and the zero vector never
    reaches the tau/||x|| expression.
    """
    arr = check_vector(x)
    tau = _check_threshold(tau)
    norm = float(np.linalg.norm(arr))
    if norm <= tau:
        return arr.copy()
    return (tau / norm) * arr


def clip_residual_norm(x, tau) -> float:
    """Distance the clip moves x: max(0, ||x|| - tau), no vector formed."""
    arr = check_vector(x)
    tau = _check_threshold(tau)
    return max(0.0, float(np.linalg.norm(arr)) - tau)


@dataclass(frozen=True)
class Compressor:
    """Deterministic contractive compressor, either identity or top-k.

    ``alpha(d)`` is the contraction parameter: 1 for identity, k/d for
    top-k on dimension d.
    """

    kind: str
    k: int | None = None

    def __post_init__(self):
        if self.kind == "identity":
            if self.k is not None:
                raise ConfigurationError("identity compressor takes no k")
        elif self.kind == "top_k":
            if self.k is None or int(self.k) < 1:
                raise ConfigurationError("top_k compressor needs a positive integer k")
            object.__setattr__(self, "k", int(self.k))
        else:
            raise ConfigurationError(f"unknown compressor kind {self.kind!r}")

    def alpha(self, d: int) -> float:
        if self.kind == "identity":
            return 1.0
        if self.k > d:
            raise ConfigurationError(f"top_k with k={self.k} exceeds dimension {d}")
        return self.k / d


def compress(c: Compressor, x) -> np.ndarray:
    """Apply the compressor. Top-k keeps the k largest magnitudes; ties keep
    the lower index, which makes the output platform-independent."""
    arr = check_vector(x)
    if c.kind == "identity":
        return arr.copy()
    if c.k > arr.size:
        raise ConfigurationError(f"top_k with k={c.k} exceeds dimension {arr.size}")
    if c.k == arr.size:
        return arr.copy()
    # stable sort on -|x|: equal magnitudes stay in index order
    order = np.argsort(-np.abs(arr), kind="stable")
    keep = order[: c.k]
    out = np.zeros_like(arr)
    out[keep] = arr[keep]
    return out


def node_mean(rows: np.ndarray) -> np.ndarray:
    """Mean over the node axis of an (n, d) array.

    Every aggregation in the package goes through this one reduction so
    that objective gradients and optimizer averages agree bitwise.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ValueError(f"expected an (n, d) array, got shape {rows.shape}")
    return rows.mean(axis=0)
