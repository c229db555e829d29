"""Stepsize rules, certificates, and bounds against the independent oracle."""

import numpy as np
import pytest

import oracle_bounds as oracle
from clipshift import (
    Compressor,
    ConfigurationError,
    InfeasibleStepsizeError,
    LyapunovParams,
    MethodConfig,
    Problem,
    StepsizeInputs,
    dp_utility_bound,
    estimate_f_inf,
    eta_of,
    k_star,
    lyapunov,
    press_contraction_margin,
    rate_envelope,
    run,
    sigma_min,
    stepsize_dp,
    stepsize_multi,
    stepsize_press,
    stepsize_single,
)


def test_eta_cases():
    assert eta_of(1.0, (0.0, 0.0)) == 1.0  # vanishing gradients
    assert eta_of(2.0, (1.0, 0.5)) == 1.0  # threshold dominates
    assert eta_of(1.0, (4.0, 2.0)) == 0.25
    with pytest.raises(ConfigurationError):
        eta_of(0.0, (1.0,))


def test_single_node_pinned():
    inputs = StepsizeInputs(L=1.0, L_max=1.0, tau=1.0, grad0_norms=(1.0,), F0=1.0)
    # with eta = 1 the shift penalty disappears and the smoothness branch
    # reduces to (1 - 1/sqrt(2))/(2L); the residual branch gives 1/16
    assert stepsize_single(inputs) == 0.0625


def test_multi_node_pinned():
    inputs = StepsizeInputs(L=1.0, L_max=2.0, tau=1.0, grad0_norms=(2.0, 1.0), F0=0.25)
    assert stepsize_multi(inputs) == pytest.approx(0.011747606429224308, rel=1e-15)


def test_dp_pinned():
    inputs = StepsizeInputs(
        L=1.0, L_max=1.0, tau=1.0, grad0_norms=(2.0, 0.5), F0=1.0, mu=0.1, nu=0.05
    )
    assert stepsize_dp(inputs) == pytest.approx(0.0032541397552843317, rel=1e-12)


def test_press_margin_pinned():
    assert press_contraction_margin(0.9, 0.9) == pytest.approx(0.7876301218409649, rel=1e-12)


def test_press_infeasible_margin_carries_best():
    with pytest.raises(InfeasibleStepsizeError) as err:
        press_contraction_margin(0.5, 1.0)
    assert err.value.best < 0.0


def test_sigma_floor_pinned():
    floor = sigma_min(1.0, 100, 0.5, 1e-5, 0.5)
    assert floor.value == pytest.approx(2303.292437850279, rel=1e-12)
    assert "feasibility" in floor.caveat


def test_dp_utility_pinned():
    assert dp_utility_bound(1.0, 0.1, 1.0, 10, 0.01, 1.0) == pytest.approx(
        0.4086784401, rel=1e-12
    )
    with pytest.raises(ConfigurationError):
        dp_utility_bound(1.0, 2.0, 1.0, 10, 0.01, 1.0)  # gamma*mu >= 1


def test_sigma_floor_validation():
    with pytest.raises(ConfigurationError):
        sigma_min(1.0, 100, 1.5, 1e-5, 0.5)
    with pytest.raises(ConfigurationError):
        sigma_min(1.0, 100, 0.5, 2.0, 0.5)
    with pytest.raises(ConfigurationError):
        sigma_min(1.0, 100, 0.5, 1e-5, 1.0)
    with pytest.raises(ConfigurationError):
        sigma_min(1.0, 0, 0.5, 1e-5, 0.5)
    with pytest.raises(ConfigurationError):
        sigma_min(-1.0, 100, 0.5, 1e-5, 0.5)


def _rel_gap(ours, ref):
    ref = float(ref)
    return abs(ours - ref) / max(abs(ref), 1e-300)


def test_rules_match_oracle_spot_checks():
    single = StepsizeInputs(L=2.0, L_max=2.0, tau=0.5, grad0_norms=(3.0,), F0=1.7)
    assert _rel_gap(stepsize_single(single), oracle.stepsize_single(2.0, 0.5, 3.0, 1.7)) <= 1e-12

    multi = StepsizeInputs(
        L=1.5, L_max=2.5, tau=0.8, grad0_norms=(2.0, 0.3, 1.1), F0=0.9
    )
    assert (
        _rel_gap(stepsize_multi(multi), oracle.stepsize_multi(1.5, 2.5, 0.8, (2.0, 0.3, 1.1), 0.9))
        <= 1e-12
    )

    dp = StepsizeInputs(
        L=1.2, L_max=2.0, tau=1.0, grad0_norms=(1.5, 0.5), F0=0.6, mu=0.05, nu=0.1
    )
    assert (
        _rel_gap(stepsize_dp(dp), oracle.stepsize_dp(1.2, 2.0, 1.0, (1.5, 0.5), 0.6, 0.05, 0.1))
        <= 1e-12
    )

    press = StepsizeInputs(
        L=1.0, L_max=1.0, tau=1.0, grad0_norms=(2.0, 1.0), F0=1.0, alpha_press=1.0
    )
    assert (
        _rel_gap(stepsize_press(press), oracle.stepsize_press(1.0, 1.0, 1.0, (2.0, 1.0), 1.0, 1.0))
        <= 1e-12
    )

    assert _rel_gap(press_contraction_margin(0.95, 0.4), oracle.press_beta(0.95, 0.4)) <= 1e-12
    assert (
        _rel_gap(sigma_min(0.7, 500, 0.3, 1e-6, 0.25).value, oracle.sigma_floor(0.7, 500, 0.3, 1e-6, 0.25))
        <= 1e-12
    )
    assert (
        _rel_gap(dp_utility_bound(2.0, 0.01, 0.5, 300, 0.04, 0.7), oracle.dp_utility(2.0, 0.01, 0.5, 300, 0.04, 0.7))
        <= 1e-12
    )


def test_stepsize_preconditions():
    with pytest.raises(ConfigurationError):
        stepsize_single(
            StepsizeInputs(L=1.0, L_max=1.0, tau=1.0, grad0_norms=(1.0, 2.0), F0=1.0)
        )
    with pytest.raises(ConfigurationError):
        stepsize_dp(StepsizeInputs(L=1.0, L_max=1.0, tau=1.0, grad0_norms=(1.0,), F0=1.0))
    with pytest.raises(ConfigurationError):
        stepsize_press(StepsizeInputs(L=1.0, L_max=1.0, tau=1.0, grad0_norms=(1.0,), F0=1.0))
    with pytest.raises(ConfigurationError):
        StepsizeInputs(L=0.0, L_max=1.0, tau=1.0, grad0_norms=(1.0,), F0=1.0)
    with pytest.raises(ConfigurationError):
        StepsizeInputs(L=1.0, L_max=1.0, tau=1.0, grad0_norms=(), F0=1.0)
    with pytest.raises(ConfigurationError):
        StepsizeInputs(L=1.0, L_max=1.0, tau=1.0, grad0_norms=(1.0,), F0=-0.1)


def test_stepsizes_are_positive_across_regimes():
    rng = np.random.default_rng(55)
    for _ in range(50):
        n = int(rng.integers(1, 6))
        norms = tuple(float(v) for v in np.abs(rng.standard_normal(n)) * 3.0)
        L = float(rng.uniform(0.5, 3.0))
        L_max = L * float(rng.uniform(1.0, 2.0))
        tau = float(rng.uniform(0.05, 2.0))
        F0 = float(rng.uniform(0.0, 4.0))
        inputs = StepsizeInputs(L=L, L_max=L_max, tau=tau, grad0_norms=norms, F0=F0)
        gamma = stepsize_multi(inputs)
        assert np.isfinite(gamma) and gamma > 0.0


def test_k_star_cases():
    assert k_star(0.5, 1.0) == 0
    assert k_star(1.0, 1.0) == 0  # boundary: no clipping needed
    assert k_star(3.0, 1.0) == 5
    assert k_star(1.0 + 1e-9, 1.0) == 2
    with pytest.raises(ConfigurationError):
        k_star(-1.0, 1.0)
    with pytest.raises(ConfigurationError):
        k_star(1.0, 0.0)


def test_rate_envelope_formula():
    assert rate_envelope(2.0, 0.1, 100) == pytest.approx(2.0 * 2.0 / (0.1 * 100))
    with pytest.raises(ConfigurationError):
        rate_envelope(1.0, 0.0, 10)
    with pytest.raises(ConfigurationError):
        rate_envelope(1.0, 0.1, 0)


def test_lyapunov_params_coefficients():
    p = LyapunovParams.for_clip21(0.1, 0.5)
    gap = 1.0 - 0.5 * 0.75  # 1 - (1-eta)(1-eta/2)
    assert p.A == pytest.approx(0.1 / (2.0 * gap))
    assert LyapunovParams.for_dp(0.1, 0.5).A == pytest.approx(2.0 * 0.1 / 0.5)
    assert LyapunovParams.for_press(0.1, 0.5, 0.8).A == pytest.approx(0.1 / 0.8)
    assert LyapunovParams.plain(0.1).A == 0.0


def test_lyapunov_matches_manual_computation(quad_problem):
    cfg = MethodConfig(method="clip21_gd", gamma=0.01, iters=1, tau=1.0)
    state, _ = run(cfg, quad_problem, np.array([1.0]))
    params = LyapunovParams.for_clip21(0.01, 0.5)
    value = lyapunov(quad_problem, state, params, f_inf=0.0)
    grads = quad_problem.local_grads(state.x)
    manual = quad_problem.eval_global(state.x) + params.A * float(
        np.sum((grads - state.v) ** 2)
    ) / quad_problem.n
    assert value == pytest.approx(manual, rel=1e-15)


def test_f_inf_counterexample_is_exact(quad_problem):
    value, is_estimate = estimate_f_inf(quad_problem, np.array([3.0]))
    assert value == 0.0
    assert not is_estimate


def test_f_inf_estimate_lower_bounds_descent(logistic_problem, logistic_x0, logistic_f_inf):
    assert logistic_f_inf < logistic_problem.eval_global(logistic_x0)
    # a short run never dips below the presolved floor
    cfg = MethodConfig(method="gd", gamma=0.5, iters=200)
    _, records = run(cfg, logistic_problem, logistic_x0)
    assert all(r.f >= logistic_f_inf for r in records)


def test_press_stepsize_requires_feasible_margin():
    inputs = StepsizeInputs(
        L=1.0, L_max=1.0, tau=0.05, grad0_norms=(2.0, 1.0), F0=1.0, alpha_press=0.8
    )
    with pytest.raises(InfeasibleStepsizeError):
        stepsize_press(inputs)
