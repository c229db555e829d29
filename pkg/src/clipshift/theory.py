"""Executable constants and bounds: stepsize rules for each method
family, Lyapunov bookkeeping, the no-more-clipping horizon, the O(1/K)
rate envelope, and the privacy variance floor with its utility bound.

Each stepsize rule is a minimum over printed branch expressions. One
branch in the multi-node, noisy, and compressed rules has the form
gamma <= phi0/(B - thr)^2 with phi0 itself affine in gamma; that branch
is resolved exactly as a linear inequality (see _implicit_branch) and is
skipped when B <= thr.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InfeasibleStepsizeError

__all__ = [
    "StepsizeInputs",
    "LyapunovParams",
    "SigmaFloor",
    "eta_of",
    "stepsize_single",
    "stepsize_multi",
    "stepsize_dp",
    "stepsize_press",
    "press_contraction_margin",
    "lyapunov",
    "k_star",
    "rate_envelope",
    "sigma_min",
    "dp_utility_bound",
    "estimate_f_inf",
]

_THETA_GRID = tuple(10.0 ** (-3.0 + 4.0 * j / 12.0) for j in range(13))


@dataclass(frozen=True)
class StepsizeInputs:
    """Problem measurements the stepsize rules consume.

    grad0_norms are the per-node gradient norms at the start point; n is
    inferred from them when omitted. The optional scalars are only needed
    by the rules that use them.
    """

    L: float
    L_max: float
    tau: float
    grad0_norms: tuple
    F0: float
    n: int | None = None
    alpha_press: float | None = None
    mu: float | None = None
    sigma: float | None = None
    nu: float | None = None
    eps: float | None = None
    delta: float | None = None

    def __post_init__(self):
        for name in ("L", "L_max"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value <= 0.0:
                raise ConfigurationError(f"{name} must be a positive real, got {value}")
            object.__setattr__(self, name, value)
        tau = float(self.tau)
        if not np.isfinite(tau) or tau <= 0.0:
            raise ConfigurationError(f"tau must be a positive real, got {tau}")
        object.__setattr__(self, "tau", tau)
        norms = tuple(float(g) for g in self.grad0_norms)
        if not norms:
            raise ConfigurationError("grad0_norms must contain at least one entry")
        if any(not np.isfinite(g) or g < 0.0 for g in norms):
            raise ConfigurationError("gradient norms must be finite and non-negative")
        object.__setattr__(self, "grad0_norms", norms)
        F0 = float(self.F0)
        if not np.isfinite(F0) or F0 < 0.0:
            raise ConfigurationError(f"F0 must be a finite non-negative real, got {F0}")
        object.__setattr__(self, "F0", F0)
        n = len(norms) if self.n is None else int(self.n)
        if n != len(norms):
            raise ConfigurationError(
                f"n={n} disagrees with {len(norms)} gradient norms"
            )
        object.__setattr__(self, "n", n)


def eta_of(tau, grad0_norms) -> float:
    """min(1, tau / max_i ||grad_i(x0)||); 1 when every norm is zero."""
    tau = float(tau)
    if not np.isfinite(tau) or tau <= 0.0:
        raise ConfigurationError(f"tau must be a positive real, got {tau}")
    top = max(float(g) for g in grad0_norms)
    if top <= 0.0:
        return 1.0
    return min(1.0, tau / top)


def _shift_gap(eta: float) -> float:
    # 1 - (1-eta)(1-eta/2), the per-step shift-tracking contraction
    return 1.0 - (1.0 - eta) * (1.0 - 0.5 * eta)


def _implicit_branch(F0: float, B: float, threshold: float, slope: float) -> float:
    """Resolve gamma <= phi0(gamma)/(B - threshold)^2 with phi0 = F0 + slope*gamma.

    Vacuous (returns +inf) when B <= threshold or when the slope absorbs
    the whole quadratic coefficient.
    """
    if B <= threshold:
        return math.inf
    coeff = (B - threshold) ** 2 - slope
    if coeff <= 0.0:
        return math.inf
    return F0 / coeff


def _sqrt_sum_sq(F0: float, beta2: float) -> float:
    return (math.sqrt(F0) + math.sqrt(beta2)) ** 2


def stepsize_single(inp: StepsizeInputs) -> float:
    """Largest certified stepsize for the single-node shifted method."""
    if inp.n != 1:
        raise ConfigurationError(f"single-node rule needs n=1, got n={inp.n}")
    norm0 = inp.grad0_norms[0]
    eta = eta_of(inp.tau, inp.grad0_norms)
    gap = _shift_gap(eta)
    beta1 = (1.0 - eta) ** 2 * (1.0 + 2.0 / eta) / gap
    G0 = abs(norm0 - inp.tau)
    beta2 = inp.F0 + inp.tau * G0 / (math.sqrt(2.0 * eta) * inp.L)
    first = (1.0 - 1.0 / math.sqrt(2.0)) / (1.0 + math.sqrt(1.0 + 2.0 * beta1)) / inp.L
    denom = 4.0 * inp.L**2 * _sqrt_sum_sq(inp.F0, beta2)
    second = math.inf if denom == 0.0 else inp.tau**2 / denom
    return min(first, second)


def stepsize_multi(inp: StepsizeInputs) -> float:
    """Largest certified stepsize for the n-node shifted method."""
    norms = np.asarray(inp.grad0_norms)
    eta = eta_of(inp.tau, inp.grad0_norms)
    gap = _shift_gap(eta)
    B = float(norms.max())
    ratio_sq = (inp.L_max / inp.L) ** 2
    beta1 = 2.0 * (1.0 - eta) ** 2 * (1.0 + 2.0 / eta) / gap * ratio_sq
    # signed differences, exactly as printed; entries below tau only
    # inflate beta2, which keeps the bound conservative
    G0 = math.sqrt(float(np.mean((norms - inp.tau) ** 2)))
    beta2 = inp.F0 + G0 * inp.tau / (2.0 * math.sqrt(2.0 * eta) * inp.L_max)
    slope = float(np.mean(np.maximum(0.0, norms - inp.tau) ** 2)) / (2.0 * gap)
    implicit = _implicit_branch(inp.F0, B, inp.tau, slope)
    second = (1.0 - 1.0 / math.sqrt(2.0)) / inp.L / (1.0 + math.sqrt(1.0 + 2.0 * beta1))
    denom = 16.0 * _sqrt_sum_sq(inp.F0, beta2)
    third = math.inf if denom == 0.0 else (inp.tau**2 / inp.L_max**2) / denom
    return min(implicit, second, third)


def stepsize_dp(inp: StepsizeInputs) -> float:
    """Largest certified stepsize for the noisy shifted method.

    Requires the gradient-dominance constant mu; nu defaults to 0, which
    collapses the start gap to its noiseless form.
    """
    if inp.mu is None:
        raise ConfigurationError("the noisy stepsize rule needs mu")
    mu = float(inp.mu)
    if not np.isfinite(mu) or mu <= 0.0:
        raise ConfigurationError(f"mu must be a positive real, got {mu}")
    nu = 0.0 if inp.nu is None else float(inp.nu)
    if not np.isfinite(nu) or nu < 0.0:
        raise ConfigurationError(f"nu must be a finite non-negative real, got {nu}")
    norms = np.asarray(inp.grad0_norms)
    eta = eta_of(inp.tau, inp.grad0_norms)
    B = float(norms.max())
    ratio_sq = (inp.L_max / inp.L) ** 2
    beta1 = (1.0 + 2.0 / eta) * (1.0 - eta) * (1.0 - 0.5 * eta) / eta * ratio_sq
    G0 = math.sqrt(float(np.mean((np.abs(norms - inp.tau) + nu) ** 2)))
    beta2 = inp.F0 + inp.tau * G0 / (2.0 * math.sqrt(2.0 * eta) * inp.L_max)
    first = eta / (4.0 * mu)
    second = 2.0 * mu / inp.L_max**2
    slope = (2.0 / eta) * G0**2
    implicit = _implicit_branch(inp.F0, B, 0.5 * inp.tau, slope)
    fourth = (1.0 - 1.0 / math.sqrt(2.0)) / (
        inp.L * (1.0 + math.sqrt(1.0 + 8.0 * beta1))
    )
    denom = 64.0 * inp.L_max**2 * _sqrt_sum_sq(inp.F0, beta2)
    fifth = math.inf if denom == 0.0 else inp.tau**2 / denom
    return min(first, second, implicit, fourth, fifth)


def press_contraction_margin(alpha: float, eta: float) -> float:
    """Best contraction margin beta over the theta grid.

    beta = 1 - max(B1, B2*(1-eta)^2) where B1 and B2 trade off through
    free parameters theta1, theta2 > 0; both are searched over 13
    log-spaced points in [1e-3, 10], first maximum winning. Raises when
    no grid point gives a positive margin.
    """
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise ConfigurationError(f"contraction alpha must lie in (0, 1], got {alpha}")
    eta = float(eta)
    if not 0.0 < eta <= 1.0:
        raise ConfigurationError(f"eta must lie in (0, 1], got {eta}")
    one_minus = 1.0 - alpha
    miss_sq = (1.0 - eta) ** 2
    best = -math.inf
    for theta1 in _THETA_GRID:
        for theta2 in _THETA_GRID:
            b1 = one_minus + (1.0 + 1.0 / theta1) * (1.0 + theta2) * one_minus
            b2 = (1.0 + theta1) + (1.0 + 1.0 / theta1) * (1.0 + 1.0 / theta2) * one_minus
            beta = 1.0 - max(b1, b2 * miss_sq)
            if beta > best:
                best = beta
    if best <= 0.0:
        raise InfeasibleStepsizeError(
            f"no positive contraction margin for alpha={alpha}, eta={eta}; "
            f"best beta found was {best}",
            best=best,
        )
    return best


def stepsize_press(inp: StepsizeInputs) -> float:
    """Largest certified stepsize for the compressed shifted method."""
    if inp.alpha_press is None:
        raise ConfigurationError("the compressed stepsize rule needs alpha_press")
    alpha = float(inp.alpha_press)
    if not 0.0 < alpha <= 1.0:
        raise ConfigurationError(f"alpha_press must lie in (0, 1], got {alpha}")
    norms = np.asarray(inp.grad0_norms)
    eta = eta_of(inp.tau, inp.grad0_norms)
    beta = press_contraction_margin(alpha, eta)
    B = float(norms.max())
    root = math.sqrt(1.0 - alpha)
    shrink = 1.0 - root  # 1 - sqrt(1-alpha)
    ratio_sq = (inp.L_max / inp.L) ** 2
    beta1 = (
        2.0
        * max((1.0 - beta) * (1.0 + 2.0 / beta), (1.0 - alpha) * (1.0 + 2.0 / alpha))
        / beta
        * ratio_sq
    )
    G0 = math.sqrt(float(np.mean((np.maximum(0.0, norms - inp.tau) + root * inp.tau) ** 2)))
    beta2 = inp.F0 + G0 * shrink * inp.tau / (math.sqrt(2.0 * beta) * inp.L_max)
    first = math.inf if root == 0.0 else shrink / (2.0 * root * inp.L_max)
    slope = G0**2 / beta
    implicit = _implicit_branch(inp.F0, B, shrink * inp.tau, slope)
    third = (1.0 - 1.0 / math.sqrt(2.0)) / (
        inp.L * (1.0 + math.sqrt(1.0 + 2.0 * beta1))
    )
    denom = 16.0 * inp.L_max**2 * _sqrt_sum_sq(inp.F0, beta2)
    fourth = math.inf if denom == 0.0 else shrink**2 * inp.tau**2 / denom
    return min(first, implicit, third, fourth)


@dataclass(frozen=True)
class LyapunovParams:
    """Shift-penalty coefficient A with the inputs it came from."""

    gamma: float
    eta: float
    A: float

    @classmethod
    def for_clip21(cls, gamma: float, eta: float) -> "LyapunovParams":
        _check_gamma_eta(gamma, eta)
        return cls(gamma=gamma, eta=eta, A=gamma / (2.0 * _shift_gap(eta)))

    @classmethod
    def for_dp(cls, gamma: float, eta: float) -> "LyapunovParams":
        _check_gamma_eta(gamma, eta)
        return cls(gamma=gamma, eta=eta, A=2.0 * gamma / eta)

    @classmethod
    def for_press(cls, gamma: float, eta: float, beta: float) -> "LyapunovParams":
        _check_gamma_eta(gamma, eta)
        beta = float(beta)
        if not 0.0 < beta <= 1.0:
            raise ConfigurationError(f"beta must lie in (0, 1], got {beta}")
        return cls(gamma=gamma, eta=eta, A=gamma / beta)

    @classmethod
    def plain(cls, gamma: float) -> "LyapunovParams":
        """A = 0: the Lyapunov value collapses to f - f_inf."""
        return cls(gamma=float(gamma), eta=1.0, A=0.0)


def _check_gamma_eta(gamma, eta):
    gamma = float(gamma)
    if not np.isfinite(gamma) or gamma <= 0.0:
        raise ConfigurationError(f"gamma must be a positive real, got {gamma}")
    eta = float(eta)
    if not 0.0 < eta <= 1.0:
        raise ConfigurationError(f"eta must lie in (0, 1], got {eta}")


def lyapunov(problem, state, params: LyapunovParams, f_inf: float = 0.0) -> float:
    """phi = f(x) - f_inf + (A/n) sum_i ||grad_i(x) - v^i||^2."""
    grads = problem.local_grads(state.x)
    shift_sq = float(np.sum((grads - state.v) ** 2)) / problem.n
    return problem.eval_global(state.x) - float(f_inf) + params.A * shift_sq


def k_star(grad0_norm: float, tau: float) -> int:
    """First iteration index from which clipping stays inactive."""
    grad0_norm = float(grad0_norm)
    tau = float(tau)
    if tau <= 0.0:
        raise ConfigurationError(f"tau must be positive, got {tau}")
    if not np.isfinite(grad0_norm) or grad0_norm < 0.0:
        raise ConfigurationError(
            f"gradient norm must be a finite non-negative real, got {grad0_norm}"
        )
    if grad0_norm <= tau:
        return 0
    return math.ceil((2.0 / tau) * (grad0_norm - tau) + 1.0)


def rate_envelope(phi0: float, gamma: float, K: int) -> float:
    """Certified bound 2*phi0/(gamma*K) on the best squared gradient norm."""
    phi0 = float(phi0)
    if phi0 < 0.0:
        raise ConfigurationError(f"phi0 must be non-negative, got {phi0}")
    gamma = float(gamma)
    if gamma <= 0.0:
        raise ConfigurationError(f"gamma must be positive, got {gamma}")
    K = int(K)
    if K < 1:
        raise ConfigurationError(f"K must be >= 1, got {K}")
    return 2.0 * phi0 / (gamma * K)


@dataclass(frozen=True)
class SigmaFloor:
    """Variance floor plus the caveat that travels with it."""

    value: float
    caveat: str


def sigma_min(tau: float, K: int, eps: float, delta: float, alpha_frac: float) -> SigmaFloor:
    """Closed-form floor on min(nu^2, sigma^2) for the privacy target.

    Only the closed form is evaluated; the separate normalization-based
    feasibility condition on delta is not checked here, and the returned
    caveat says so.
    """
    tau = float(tau)
    if tau <= 0.0:
        raise ConfigurationError(f"tau must be positive, got {tau}")
    K = int(K)
    if K < 1:
        raise ConfigurationError(f"K must be >= 1, got {K}")
    eps = float(eps)
    if not 0.0 < eps < 1.0:
        raise ConfigurationError(f"eps must lie in (0, 1), got {eps}")
    delta = float(delta)
    if not 0.0 < delta < 1.0:
        raise ConfigurationError(f"delta must lie in (0, 1), got {delta}")
    alpha_frac = float(alpha_frac)
    if not 0.0 < alpha_frac < 1.0:
        raise ConfigurationError(f"alpha_frac must lie in (0, 1), got {alpha_frac}")
    value = 12.0 * tau**2 * math.sqrt(2.0 * K * math.log(1.0 / delta)) / (
        (1.0 - alpha_frac) * eps
    )
    return SigmaFloor(
        value=value,
        caveat=(
            "closed-form floor only; the normalization-constant feasibility "
            "condition on delta is not evaluated"
        ),
    )


def dp_utility_bound(phi0, gamma, mu, K, sigma2_min, eta) -> float:
    """(1 - gamma*mu)^K * phi0 + [2(1 + 2/eta)/(eta*mu)] * sigma2_min."""
    phi0 = float(phi0)
    if phi0 < 0.0:
        raise ConfigurationError(f"phi0 must be non-negative, got {phi0}")
    gamma = float(gamma)
    mu = float(mu)
    if gamma <= 0.0 or mu <= 0.0:
        raise ConfigurationError("gamma and mu must be positive")
    if gamma * mu >= 1.0:
        raise ConfigurationError(
            f"need gamma*mu < 1 for the geometric decay, got {gamma * mu}"
        )
    K = int(K)
    if K < 1:
        raise ConfigurationError(f"K must be >= 1, got {K}")
    sigma2_min = float(sigma2_min)
    if sigma2_min < 0.0:
        raise ConfigurationError(f"sigma2_min must be non-negative, got {sigma2_min}")
    eta = float(eta)
    if not 0.0 < eta <= 1.0:
        raise ConfigurationError(f"eta must lie in (0, 1], got {eta}")
    noise_amp = 2.0 * (1.0 + 2.0 / eta) / (eta * mu)
    return (1.0 - gamma * mu) ** K * phi0 + noise_amp * sigma2_min


def estimate_f_inf(problem, x0, iters=100_000, margin=1e-9):
    """Lower estimate of inf f used by suboptimality telemetry.

    The two-node quadratic has inf f = 0 exactly. Data problems run a
    long plain-GD presolve at 1/L and return the best value seen minus a
    small margin; the second element says whether the value is estimated.
    """
    if problem.kind == "quad_counterexample":
        return 0.0, False
    info = problem.smoothness()
    gamma = 1.0 / info.L
    x = np.asarray(x0, dtype=np.float64).copy()
    best = problem.eval_global_fast(x)
    for _ in range(int(iters)):
        x -= gamma * problem.grad_global_fast(x)
        value = problem.eval_global_fast(x)
        if value < best:
            best = value
        if not np.isfinite(value):
            break
    return best - margin, True
