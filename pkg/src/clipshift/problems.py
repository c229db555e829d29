"""Objective families with exact gradients and smoothness constants.

Three kinds share one interface: full-batch logistic regression,
nonconvex-regularized linear regression, and a two-node one-dimensional
quadratic whose local gradients point in opposite directions. The global
objective is always the arithmetic mean of the local ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import NodeShard
from .errors import ConfigurationError
from .ops import check_vector, node_mean

__all__ = ["Problem", "SmoothnessInfo", "KINDS", "REGULARIZERS"]

KINDS = ("logistic", "linreg_nonconvex", "quad_counterexample")
REGULARIZERS = ("l2", "nonconvex")


@dataclass(frozen=True)
class SmoothnessInfo:
    """Per-node and aggregate Lipschitz constants, plus an optional
    user-supplied gradient-dominance constant mu (never estimated)."""

    L_i: tuple[float, ...]
    L: float
    L_max: float
    mu: float | None = None


def _reg_value(reg: str, x: np.ndarray) -> float:
    if reg == "l2":
        return 0.5 * float(x @ x)
    sq = x * x
    return float(np.sum(sq / (1.0 + sq)))


def _reg_grad(reg: str, x: np.ndarray) -> np.ndarray:
    if reg == "l2":
        return x.copy()
    denom = 1.0 + x * x
    return 2.0 * x / (denom * denom)


def _spectral_norm_sq(A: np.ndarray) -> float:
    """Largest eigenvalue of A^T A by power iteration.

    Deterministic start vectors; at most 200 iterations to relative
    tolerance 1e-8. A zero matrix returns 0 without iterating.
    """
    d = A.shape[1]
    starts = (np.full(d, 1.0), np.arange(1.0, d + 1.0))
    for attempt, v0 in enumerate(starts):
        v = v0 / np.linalg.norm(v0)
        lam = 0.0
        degenerate = False
        for _ in range(200):
            w = A.T @ (A @ v)
            norm_w = float(np.linalg.norm(w))
            if norm_w == 0.0:
                # start vector in the null space; retry with the other one
                degenerate = True
                break
            v = w / norm_w
            lam_new = float(v @ (A.T @ (A @ v)))
            if abs(lam_new - lam) <= 1e-8 * max(abs(lam_new), 1e-30):
                return lam_new
            lam = lam_new
        if not degenerate:
            return lam
    return 0.0


class Problem:
    """An evaluatable distributed objective f(x) = (1/n) sum_i f_i(x).

    kind selects the family:
      - "logistic": per-node f_i = (1/m_i) sum_j softplus(-b_ij a_ij.x) + reg
      - "linreg_nonconvex": f_i = (1/m_i) ||A_i x - b_i||^2 + reg
      - "quad_counterexample": n = 2, d = 1, f_1 = (beta/2) x^2 and
        f_2 = -(alpha/2) x^2 with beta > alpha > 0; no shards, no reg
    The regularizer term is lam * r(x) with r either 0.5||x||^2 ("l2") or
    sum_j x_j^2/(1+x_j^2) ("nonconvex").
    """

    def __init__(self, kind, shards=(), reg="l2", lam=0.0, quad_params=None):
        if kind not in KINDS:
            raise ConfigurationError(f"unknown problem kind {kind!r}")
        if reg not in REGULARIZERS:
            raise ConfigurationError(f"unknown regularizer {reg!r}")
        lam = float(lam)
        if not np.isfinite(lam) or lam < 0.0:
            raise ConfigurationError(f"lambda must be a finite non-negative real, got {lam}")
        shards = tuple(shards)
        if kind == "quad_counterexample":
            if shards:
                raise ConfigurationError("quad_counterexample takes no shards")
            if quad_params is None:
                quad_params = (2.0, 1.0)
            beta_q, alpha_q = (float(v) for v in quad_params)
            if not (beta_q > alpha_q > 0.0):
                raise ConfigurationError(
                    f"quad_counterexample requires beta_q > alpha_q > 0, got ({beta_q}, {alpha_q})"
                )
            self.quad_params = (beta_q, alpha_q)
        else:
            if quad_params is not None:
                raise ConfigurationError("quad_params only apply to quad_counterexample")
            if not shards:
                raise ConfigurationError("data problems need at least one shard")
            dims = {s.d for s in shards}
            if len(dims) != 1:
                raise ConfigurationError(f"shards disagree on dimension: {sorted(dims)}")
            for s in shards:
                if s.m < 1:
                    raise ConfigurationError(f"shard {s.node_id} is empty")
            self.quad_params = None
        self.kind = kind
        self.shards = shards
        self.reg = reg
        self.lam = lam
        self._stacked = None

    @property
    def n(self) -> int:
        return 2 if self.kind == "quad_counterexample" else len(self.shards)

    @property
    def d(self) -> int:
        return 1 if self.kind == "quad_counterexample" else self.shards[0].d

    def _check_x(self, x) -> np.ndarray:
        arr = check_vector(x)
        if arr.shape[0] != self.d:
            raise ValueError(f"x has dimension {arr.shape[0]}, problem has {self.d}")
        return arr

    def _check_node(self, i: int) -> int:
        i = int(i)
        if not 0 <= i < self.n:
            raise ValueError(f"node index {i} out of range for n={self.n}")
        return i

    def eval_local(self, i: int, x) -> float:
        i = self._check_node(i)
        x = self._check_x(x)
        if self.kind == "quad_counterexample":
            beta_q, alpha_q = self.quad_params
            coeff = 0.5 * beta_q if i == 0 else -0.5 * alpha_q
            # plain multiplication overflows to inf instead of raising,
            # which lets the run loop report divergence
            value = float(x[0])
            return coeff * value * value
        shard = self.shards[i]
        z = shard.features @ x
        if self.kind == "logistic":
            # logaddexp(0, t) is the stable softplus; no overflow at large |t|
            data_term = float(np.logaddexp(0.0, -shard.labels * z).mean())
        else:
            resid = z - shard.labels
            data_term = float(resid @ resid) / shard.m
        return data_term + self.lam * _reg_value(self.reg, x)

    def grad_local(self, i: int, x) -> np.ndarray:
        i = self._check_node(i)
        x = self._check_x(x)
        if self.kind == "quad_counterexample":
            beta_q, alpha_q = self.quad_params
            coeff = beta_q if i == 0 else -alpha_q
            return coeff * x
        shard = self.shards[i]
        z = shard.features @ x
        if self.kind == "logistic":
            weights = shard.labels * expit(-shard.labels * z)
            data_grad = -(shard.features.T @ weights) / shard.m
        else:
            data_grad = 2.0 * (shard.features.T @ (z - shard.labels)) / shard.m
        return data_grad + self.lam * _reg_grad(self.reg, x)

    def local_grads(self, x) -> np.ndarray:
        """All n local gradients stacked as an (n, d) array."""
        return np.stack([self.grad_local(i, x) for i in range(self.n)])

    def grad_global(self, x) -> np.ndarray:
        """Mean of the local gradients, reduced in fixed node order."""
        return node_mean(self.local_grads(x))

    def eval_global(self, x) -> float:
        return sum(self.eval_local(i, x) for i in range(self.n)) / self.n

    def _stacked_arrays(self):
        # rows of every shard concatenated, with per-row weights 1/(n m_i)
        if self._stacked is None:
            A = np.concatenate([s.features for s in self.shards])
            b = np.concatenate([s.labels for s in self.shards])
            w = np.concatenate([np.full(s.m, 1.0 / (self.n * s.m)) for s in self.shards])
            self._stacked = (A, b, w)
        return self._stacked

    def grad_global_fast(self, x) -> np.ndarray:
        """One-matvec version of grad_global for long presolve loops.

        Agrees with grad_global to rounding error, not bitwise; anything
        that feeds recorded telemetry goes through grad_global instead.
        """
        if self.kind == "quad_counterexample":
            return self.grad_global(x)
        x = self._check_x(x)
        A, b, w = self._stacked_arrays()
        z = A @ x
        if self.kind == "logistic":
            weights = w * b * expit(-b * z)
            data_grad = -(A.T @ weights)
        else:
            data_grad = 2.0 * (A.T @ (w * (z - b)))
        return data_grad + self.lam * _reg_grad(self.reg, x)

    def eval_global_fast(self, x) -> float:
        if self.kind == "quad_counterexample":
            return self.eval_global(x)
        x = self._check_x(x)
        A, b, w = self._stacked_arrays()
        z = A @ x
        if self.kind == "logistic":
            data_term = float(w @ np.logaddexp(0.0, -b * z))
        else:
            resid = z - b
            data_term = float(w @ (resid * resid))
        return data_term + self.lam * _reg_value(self.reg, x)

    def smoothness(self, mu=None) -> SmoothnessInfo:
        """Per-node Lipschitz constants and the aggregate bounds.

        For data problems L defaults to the mean of the L_i, which upper
        bounds the true global constant. mu is passed through untouched.
        """
        if mu is not None:
            mu = float(mu)
            if not np.isfinite(mu) or mu < 0.0:
                raise ConfigurationError(f"mu must be a finite non-negative real, got {mu}")
        if self.kind == "quad_counterexample":
            beta_q, alpha_q = self.quad_params
            return SmoothnessInfo(
                L_i=(beta_q, alpha_q), L=beta_q - alpha_q, L_max=beta_q, mu=mu
            )
        L_i = []
        for s in self.shards:
            spec_sq = _spectral_norm_sq(s.features)
            if self.kind == "logistic":
                c_reg = 1.0 if self.reg == "l2" else 2.0
                L_i.append(spec_sq / (4.0 * s.m) + self.lam * c_reg)
            else:
                L_i.append(2.0 * spec_sq / s.m + 2.0 * self.lam)
        L_i = tuple(L_i)
        return SmoothnessInfo(L_i=L_i, L=sum(L_i) / len(L_i), L_max=max(L_i), mu=mu)
