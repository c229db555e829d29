"""State machines for the six methods and the shared simulation loop.

Plain GD, clipped GD with and without privacy noise, the shifted
clipping iteration for fixed targets, shifted clipping for optimization,
its noisy variant, and its compressed variant all run through one loop
that emits per-iteration telemetry.

Shift semantics: a step observes the iterate x_k, updates the per-node
shifts v (which become the step-k shifts), records telemetry at x_k with
those fresh shifts, and only then moves the iterate.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, DivergenceError
from .ops import Compressor, check_vector, clip, compress, node_mean
from .rng import NoiseStream, gaussian_sample

__all__ = [
    "METHODS",
    "MethodConfig",
    "OptimizerState",
    "StepStats",
    "IterationRecord",
    "clip21_avg_run",
    "gd_step",
    "clip_gd_step",
    "clip21_gd_step",
    "dp_clip21_gd_step",
    "press_clip21_gd_step",
    "run",
]

METHODS = (
    "gd",
    "clip_gd",
    "clip21_avg",
    "clip21_gd",
    "dp_clip_gd",
    "dp_clip21_gd",
    "press_clip21_gd",
)

_DP_METHODS = ("dp_clip_gd", "dp_clip21_gd")


@dataclass(frozen=True)
class MethodConfig:
    method: str
    gamma: float
    iters: int
    tau: float | None = None
    sigma: float = 0.0
    nu: float = 0.0
    compressor: Compressor | None = None
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}")
        gamma = float(self.gamma)
        if not np.isfinite(gamma) or gamma <= 0.0:
            raise ConfigurationError(f"gamma must be a positive real, got {self.gamma}")
        object.__setattr__(self, "gamma", gamma)
        if int(self.iters) < 1:
            raise ConfigurationError(f"iteration count must be >= 1, got {self.iters}")
        object.__setattr__(self, "iters", int(self.iters))
        if int(self.seed) < 0:
            raise ConfigurationError(f"seed must be non-negative, got {self.seed}")
        object.__setattr__(self, "seed", int(self.seed))
        if self.method != "gd":
            if self.tau is None or not np.isfinite(float(self.tau)) or float(self.tau) <= 0.0:
                raise ConfigurationError(
                    f"method {self.method} needs a positive clip threshold, got {self.tau}"
                )
            object.__setattr__(self, "tau", float(self.tau))
        sigma = float(self.sigma)
        if not np.isfinite(sigma) or sigma < 0.0:
            raise ConfigurationError(f"sigma must be a finite non-negative real, got {self.sigma}")
        object.__setattr__(self, "sigma", sigma)
        if self.method in _DP_METHODS:
            nu = float(self.nu)
            if not np.isfinite(nu) or nu <= 0.0:
                raise ConfigurationError(
                    f"method {self.method} needs a positive noise clip bound nu, got {self.nu}"
                )
            object.__setattr__(self, "nu", nu)
            if not (self.tau >= 6.0 * nu and nu >= sigma):
                warnings.warn(
                    "privacy calibration expects tau >= 6*nu >= 6*sigma, got "
                    f"tau={self.tau}, nu={nu}, sigma={sigma}",
                    UserWarning,
                    stacklevel=2,
                )
        if self.method == "press_clip21_gd" and self.compressor is None:
            raise ConfigurationError("press_clip21_gd needs a compressor")


@dataclass
class OptimizerState:
    """Iterate plus per-node shift bookkeeping.

    v_bar is maintained incrementally across steps and re-checked against
    the direct average of the shift rows after each one.
    """

    k: int
    x: np.ndarray
    v: np.ndarray  # (n, d), row i is node i's shift
    v_bar: np.ndarray
    active: np.ndarray  # (n,) bool, clip activity observed at the last step

    @classmethod
    def initial(cls, x0: np.ndarray, n: int) -> "OptimizerState":
        x0 = check_vector(x0)
        d = x0.shape[0]
        return cls(
            k=0,
            x=x0.copy(),
            v=np.zeros((n, d)),
            v_bar=np.zeros(d),
            active=np.zeros(n, dtype=bool),
        )


@dataclass(frozen=True)
class StepStats:
    """Telemetry measured at x_k while stepping to x_{k+1}.

    shift_mean_sq is (1/n) sum_i ||grad_i(x_k) - v_k^i||^2 with the
    post-update shifts; direction_norm is the pre-gamma update direction.
    """

    f: float
    grad_norm_sq: float
    shift_mean_sq: float
    direction_norm: float
    active_count: int


@dataclass(frozen=True)
class IterationRecord:
    k: int
    f: float
    grad_norm_sq: float
    lyapunov: float
    active_nodes: int
    v_norm: float
    gamma: float
    wall_micros: int


def _eval_f(problem, x) -> float:
    # the stacked path agrees with the per-node mean to rounding error
    return problem.eval_global_fast(x)


def gd_step(state: OptimizerState, problem, cfg: MethodConfig):
    grads = problem.local_grads(state.x)
    gbar = node_mean(grads)
    stats = StepStats(
        f=_eval_f(problem, state.x),
        grad_norm_sq=float(gbar @ gbar),
        shift_mean_sq=0.0,
        direction_norm=float(np.linalg.norm(gbar)),
        active_count=0,
    )
    new = OptimizerState(
        k=state.k + 1,
        x=state.x - cfg.gamma * gbar,
        v=state.v,
        v_bar=state.v_bar,
        active=np.zeros(problem.n, dtype=bool),
    )
    return new, stats


def clip_gd_step(state: OptimizerState, problem, cfg: MethodConfig):
    """One step of clipped GD: x' = x - gamma*[(1/n) sum clip(grad_i) + z].

    z is zero for clip_gd; for dp_clip_gd it is one clipped Gaussian
    vector per step, drawn from the stream slot just past the node ids so
    it can never collide with per-node noise.
    """
    n = problem.n
    grads = problem.local_grads(state.x)
    clipped = np.empty_like(grads)
    active = np.empty(n, dtype=bool)
    for i in range(n):
        clipped[i] = clip(grads[i], cfg.tau)
        active[i] = float(np.linalg.norm(grads[i])) > cfg.tau
    direction = node_mean(clipped)
    gbar = node_mean(grads)
    if cfg.method == "dp_clip_gd":
        zeta = gaussian_sample(cfg.seed, n, state.k, problem.d, cfg.sigma)
        direction = direction + clip(zeta, cfg.nu)
    stats = StepStats(
        f=_eval_f(problem, state.x),
        grad_norm_sq=float(gbar @ gbar),
        shift_mean_sq=0.0,
        direction_norm=float(np.linalg.norm(direction)),
        active_count=int(active.sum()),
    )
    new = OptimizerState(
        k=state.k + 1,
        x=state.x - cfg.gamma * direction,
        v=state.v,
        v_bar=state.v_bar,
        active=active,
    )
    return new, stats


def _shifted_clip_step(state, problem, cfg, transmit):
    """Common core of the shifted-clipping methods.

    transmit(i, clipped_residual) is what node i sends; the shift update
    is v^i += transmitted, except that an inactive clip whose message is
    exactly the raw residual lands the shift on the local gradient
    bit-for-bit rather than on v + (g - v), which can differ in the last
    ulp.
    """
    n = problem.n
    grads = problem.local_grads(state.x)
    g = np.empty_like(grads)
    v_new = np.empty_like(state.v)
    active = np.empty(n, dtype=bool)
    for i in range(n):
        resid = grads[i] - state.v[i]
        norm_resid = float(np.linalg.norm(resid))
        if norm_resid <= cfg.tau:
            active[i] = False
            ci = resid.copy()
        else:
            active[i] = True
            ci = (cfg.tau / norm_resid) * resid
        gi = transmit(i, ci)
        g[i] = gi
        if not active[i] and np.array_equal(gi, resid):
            v_new[i] = grads[i].copy()
        else:
            v_new[i] = state.v[i] + gi
    v_bar = state.v_bar + node_mean(g)
    direct = node_mean(v_new)
    drift = float(np.linalg.norm(v_bar - direct))
    if drift > 1e-12:
        raise RuntimeError(
            f"aggregate shift drifted from direct average by {drift:.3e} at step {state.k}"
        )
    gbar = node_mean(grads)
    shift_sq = float(np.sum((grads - v_new) ** 2)) / n
    stats = StepStats(
        f=_eval_f(problem, state.x),
        grad_norm_sq=float(gbar @ gbar),
        shift_mean_sq=shift_sq,
        direction_norm=float(np.linalg.norm(direct)),
        active_count=int(active.sum()),
    )
    new = OptimizerState(
        k=state.k + 1,
        x=state.x - cfg.gamma * direct,
        v=v_new,
        v_bar=v_bar,
        active=active,
    )
    return new, stats


def clip21_gd_step(state: OptimizerState, problem, cfg: MethodConfig):
    return _shifted_clip_step(state, problem, cfg, lambda i, ci: ci)


def dp_clip21_gd_step(state: OptimizerState, problem, cfg: MethodConfig, noise: NoiseStream | None = None):
    if noise is None:
        noise = NoiseStream(cfg.seed, cfg.sigma)
    block = noise.block(state.k, problem.n, problem.d)
    return _shifted_clip_step(
        state, problem, cfg, lambda i, ci: ci + clip(block[i], cfg.nu)
    )


def press_clip21_gd_step(state: OptimizerState, problem, cfg: MethodConfig):
    return _shifted_clip_step(
        state, problem, cfg, lambda i, ci: compress(cfg.compressor, ci)
    )


_STEP_FUNCS = {
    "gd": gd_step,
    "clip_gd": clip_gd_step,
    "dp_clip_gd": clip_gd_step,
    "clip21_gd": clip21_gd_step,
    "dp_clip21_gd": dp_clip21_gd_step,
    "press_clip21_gd": press_clip21_gd_step,
}


def run(cfg: MethodConfig, problem, x0, *, f_inf=0.0, lyapunov_coeff=0.0, hook=None):
    """Execute cfg.iters steps from x0.

    Returns (final state, list of IterationRecord). Record k describes the
    iterate x_k; the final state holds x_K. lyapunov_coeff is the shift
    weight A in phi = f - f_inf + (A/n) sum_i ||grad_i - v^i||^2, zero for
    plain suboptimality telemetry. The hook, if given, sees each record as
    it is produced. Raises DivergenceError the moment an iterate or
    objective value stops being finite.
    """
    if cfg.method == "clip21_avg":
        raise ConfigurationError("clip21_avg targets fixed vectors; use clip21_avg_run")
    if cfg.method == "press_clip21_gd":
        cfg.compressor.alpha(problem.d)  # surfaces k > d now, not mid-run
    x0 = check_vector(x0)
    if x0.shape[0] != problem.d:
        raise ConfigurationError(
            f"x0 has dimension {x0.shape[0]}, problem has {problem.d}"
        )
    step = _STEP_FUNCS[cfg.method]
    state = OptimizerState.initial(x0, problem.n)
    records = []
    noise = NoiseStream(cfg.seed, cfg.sigma) if cfg.method == "dp_clip21_gd" else None
    for k in range(cfg.iters):
        started = time.perf_counter_ns()
        if not np.isfinite(state.x).all():
            raise DivergenceError(f"non-finite iterate at iteration {k}", step=k)
        # blowups surface as inf through the finiteness checks below,
        # so numpy's overflow warnings would only add noise here
        with np.errstate(over="ignore", invalid="ignore"):
            if noise is not None:
                state, stats = step(state, problem, cfg, noise)
            else:
                state, stats = step(state, problem, cfg)
        if not (np.isfinite(stats.f) and np.isfinite(stats.grad_norm_sq)):
            raise DivergenceError(f"non-finite objective at iteration {k}", step=k)
        record = IterationRecord(
            k=k,
            f=stats.f,
            grad_norm_sq=stats.grad_norm_sq,
            lyapunov=(stats.f - f_inf) + lyapunov_coeff * stats.shift_mean_sq,
            active_nodes=stats.active_count,
            v_norm=stats.direction_norm,
            gamma=cfg.gamma,
            wall_micros=(time.perf_counter_ns() - started) // 1000,
        )
        records.append(record)
        if hook is not None:
            hook(record)
    if not np.isfinite(state.x).all():
        raise DivergenceError(
            f"non-finite iterate at iteration {cfg.iters}", step=cfg.iters
        )
    return state, records


def clip21_avg_run(a, tau, v_init=None, iters=1):
    """Shifted clipping toward fixed targets a^i.

    Each step does v^i += clip(a^i - v^i, tau) for every node. Returns a
    list with one (shift rows, aggregate) pair per step; shifts start at
    v_init (zeros when omitted). Once a residual fits inside the clip
    ball the shift lands exactly on the target.
    """
    tau = float(tau)
    if not np.isfinite(tau) or tau <= 0.0:
        raise ConfigurationError(f"clip threshold must be a positive real, got {tau}")
    rows = [check_vector(ai) for ai in a]
    if not rows:
        raise ConfigurationError("need at least one target vector")
    d = rows[0].shape[0]
    if any(r.shape[0] != d for r in rows):
        raise ValueError("target vectors disagree on dimension")
    targets = np.stack(rows)
    n = targets.shape[0]
    if v_init is None:
        v = np.zeros((n, d))
    else:
        init_rows = [check_vector(vi) for vi in v_init]
        if len(init_rows) != n or any(r.shape[0] != d for r in init_rows):
            raise ValueError("v_init shape must match the targets")
        v = np.stack(init_rows)
    iters = int(iters)
    if iters < 1:
        raise ConfigurationError(f"iteration count must be >= 1, got {iters}")
    trace = []
    for _ in range(iters):
        for i in range(n):
            resid = targets[i] - v[i]
            if float(np.linalg.norm(resid)) <= tau:
                v[i] = targets[i]
            else:
                v[i] = v[i] + clip(resid, tau)
        trace.append((v.copy(), node_mean(v)))
    return trace
