"""Counter-based Gaussian noise.

Each draw is a pure function of (seed, node, step, coordinate): a 64-bit
key is derived from the first three by chaining a splitmix64-style
finalizer, the coordinate index acts as a counter into that stream, and
pairs of hashed words feed a Box-Muller transform. There is no mutable
generator state, so a single node at a single step can be replayed in
isolation and a whole round can be produced as one block with identical
bits. Noise for different nodes or steps never overlaps because the key
chain separates them before the counter is applied.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

__all__ = ["gaussian_sample", "gaussian_block", "NoiseStream"]

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# array-side copies of the same constants
_GOLDEN_U = np.uint64(_GOLDEN)
_M1_U = np.uint64(0xBF58476D1CE4E5B9)
_M2_U = np.uint64(0x94D049BB133111EB)


def _mix(z: int) -> int:
    # splitmix64 output permutation on python ints, wrapped mod 2^64
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def _stream_key(seed: int, node: int, step: int) -> int:
    # chain the finalizer so each field lands in a distinct stream
    z = _mix(seed + _GOLDEN)
    z = _mix(z ^ _mix((node + 1) * _GOLDEN))
    z = _mix(z ^ _mix((step + 1) * _GOLDEN))
    return z


def _finalize_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1_U
    z = (z ^ (z >> np.uint64(27))) * _M2_U
    return z ^ (z >> np.uint64(31))


def _check_ids(seed: int, node: int, step: int) -> tuple[int, int, int]:
    seed, node, step = int(seed), int(node), int(step)
    if seed < 0 or node < 0 or step < 0:
        raise ConfigurationError("seed, node, and step must be non-negative integers")
    return seed, node, step


def _normals_from_words(words: np.ndarray) -> np.ndarray:
    """Box-Muller over consecutive word pairs; len(words) must be even."""
    hi = (words >> np.uint64(11)).astype(np.float64)  # top 53 bits
    u1 = (hi[0::2] + 1.0) * 2.0**-53  # in (0, 1], keeps the log finite
    u2 = hi[1::2] * 2.0**-53  # in [0, 1)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = (2.0 * np.pi) * u2
    out = np.empty(words.size, dtype=np.float64)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out


def gaussian_sample(seed: int, node: int, step: int, d: int, sigma: float) -> np.ndarray:
    """d iid N(0, sigma^2) draws for one node at one step.

    sigma = 0 returns exact zeros without touching the hash.
    """
    seed, node, step = _check_ids(seed, node, step)
    d = int(d)
    if d < 1:
        raise ConfigurationError(f"dimension must be >= 1, got {d}")
    sigma = float(sigma)
    if not np.isfinite(sigma) or sigma < 0.0:
        raise ConfigurationError(f"sigma must be a finite non-negative real, got {sigma}")
    if sigma == 0.0:
        return np.zeros(d)
    nwords = 2 * ((d + 1) // 2)
    key = _stream_key(seed, node, step)
    idx = np.arange(nwords, dtype=np.uint64)
    words = _finalize_array(idx * _GOLDEN_U + np.uint64(key))
    return sigma * _normals_from_words(words)[:d]


def gaussian_block(seed: int, step: int, n: int, d: int, sigma: float) -> np.ndarray:
    """(n, d) block for one step; row i is bit-identical to
    gaussian_sample(seed, i, step, d, sigma)."""
    n = int(n)
    if n < 1:
        raise ConfigurationError(f"node count must be >= 1, got {n}")
    d = int(d)
    if d < 1:
        raise ConfigurationError(f"dimension must be >= 1, got {d}")
    sigma = float(sigma)
    if not np.isfinite(sigma) or sigma < 0.0:
        raise ConfigurationError(f"sigma must be a finite non-negative real, got {sigma}")
    if sigma == 0.0:
        return np.zeros((n, d))
    seed, _, step = _check_ids(seed, 0, step)
    nwords = 2 * ((d + 1) // 2)
    keys = np.array([_stream_key(seed, i, step) for i in range(n)], dtype=np.uint64)
    idx = np.arange(nwords, dtype=np.uint64)
    words = _finalize_array(idx[None, :] * _GOLDEN_U + keys[:, None])
    out = np.empty((n, nwords), dtype=np.float64)
    for i in range(n):
        out[i] = _normals_from_words(words[i])
    return sigma * out[:, :d]


@dataclass(frozen=True)
class NoiseStream:
    """Seeded handle on the counter-based noise source.

    sigma is the per-coordinate standard deviation of the raw draws; the
    caller applies any clipping on top.
    """

    seed: int
    sigma: float

    def node_noise(self, node: int, step: int, d: int) -> np.ndarray:
        return gaussian_sample(self.seed, node, step, d, self.sigma)

    def block(self, step: int, n: int, d: int) -> np.ndarray:
        return gaussian_block(self.seed, step, n, d, self.sigma)
