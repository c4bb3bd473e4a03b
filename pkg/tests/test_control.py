import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fowtlab import control
from fowtlab.control import (ControllerState, GainSet, TuningError, apply_saturation,
                             controller_update, gain_schedule, initial_controller_state,
                             is_unstable, pid_step, scheduled_gains, tune_derivative,
                             tune_integral, tune_proportional)


def test_schedule_maximal_at_zero_and_half_at_beta_k(p):
    kp0, ki0 = gain_schedule(0.0, p)
    base = p.J_R_tilde * p.omega_0 * p.omega_phi / (p.eta_G * p.pitch_sensitivity)
    assert kp0 == pytest.approx(p.a_p * 2 * p.zeta_phi * base, rel=1e-15)
    assert ki0 == pytest.approx(p.a_i * base, rel=1e-15)
    kp, ki = gain_schedule(p.beta_k, p)
    assert kp == kp0 / 2 and ki == ki0 / 2


def test_schedule_strictly_decreasing(p):
    betas = np.linspace(0, p.pitch_range[1], 200)
    kp = np.array([gain_schedule(b, p)[0] for b in betas])
    ki = np.array([gain_schedule(b, p)[1] for b in betas])
    assert np.all(np.diff(kp) < 0) and np.all(np.diff(ki) < 0)
    with pytest.raises(ValueError):
        gain_schedule(-0.1, p)


def test_gain_set_validation():
    with pytest.raises(ValueError):
        GainSet(-1.0, 0.0, 0.0)


def test_no_error_no_action(p):
    g = scheduled_gains(0.2, p)
    cs = initial_controller_state(p.omega_0, 0.2)
    for _ in range(50):
        cmd, cs = pid_step(cs, p.omega_0, 0.05, g, p)
        assert cmd == 0.2


def test_overspeed_pitches_to_feather(p):
    g = scheduled_gains(0.2, p)
    cmd, _ = pid_step(initial_controller_state(p.omega_0, 0.2), p.omega_0 * 1.01, 0.05, g, p)
    assert cmd > 0.2


def test_plain_integral_summation(p):
    q = p.with_updates(integral_mode="plain")
    g = GainSet(0.0, 0.37, 0.0)
    e, dt, N = 0.01, 0.05, 40
    cs = ControllerState(0.0, q.omega_0 + e, 0.0)
    for _ in range(N):
        cmd, cs = pid_step(cs, q.omega_0 + e, dt, g, q)
    # with no pitch committed, the last command is K_i times the summed error
    assert cmd == pytest.approx(g.K_i * q.eta_G * e * N * dt, rel=1e-12)


def test_average_mode_divides_by_elapsed_time(p):
    g = GainSet(0.0, 1.0, 0.0)
    e, dt = 0.02, 0.05
    cs = ControllerState(0.0, p.omega_0 + e, 0.0)
    for _ in range(10):
        cmd, cs = pid_step(cs, p.omega_0 + e, dt, g, p)
        cs = control.replace(cs, prev_beta=0.0)
    assert cmd == pytest.approx(p.eta_G * e, rel=1e-12)


def test_saturation(p):
    dt = 0.05
    step = p.pitch_rate_limit * dt
    assert apply_saturation(0.3 + 0.1 * step, 0.3, dt, p) == 0.3 + 0.1 * step
    assert apply_saturation(0.3 + 10 * step, 0.3, dt, p) == pytest.approx(0.3 + step, rel=1e-15)
    assert apply_saturation(-0.1, 0.0, dt, p) == 0.0
    assert apply_saturation(10.0, p.pitch_range[1], dt, p) == p.pitch_range[1]


@given(st.floats(-2, 3), st.floats(0, 1.5), st.floats(1e-3, 0.5))
def test_saturation_respects_limits(cmd, prev, dt):
    from fowtlab import default_parameters
    p = default_parameters()
    b = apply_saturation(cmd, prev, dt, p)
    lo, hi = p.pitch_range
    assert lo <= b <= hi
    if lo <= prev <= hi:
        assert abs(b - prev) <= p.pitch_rate_limit * dt * (1 + 1e-12)


def test_anti_windup_freezes_accumulator(p):
    cs = initial_controller_state(p.omega_0 * 1.2, 0.3)
    beta, cs1 = controller_update(cs, p.omega_0 * 1.2, 0.05, p)
    assert cs1.saturated
    beta, cs2 = controller_update(cs1, p.omega_0 * 1.2, 0.05, p)
    assert cs2.integral == cs1.integral
    q = p.with_updates(anti_windup=False)
    _, c1 = controller_update(initial_controller_state(q.omega_0 * 1.2, 0.3), q.omega_0 * 1.2, 0.05, q)
    _, c2 = controller_update(c1, q.omega_0 * 1.2, 0.05, q)
    assert c2.integral > c1.integral


def test_is_unstable_detects_growth():
    t = np.linspace(0, 300, 6001)
    assert is_unstable(t, 1.2 + 0.01 * np.exp(t / 60) * np.sin(t))
    assert not is_unstable(t, 1.2 + 0.01 * np.exp(-t / 60) * np.sin(t))
    assert is_unstable(t, np.full(t.size, np.nan))


def _threshold_run(critical, seen):
    def run(a):
        seen.append(a)
        t = np.linspace(0, 300, 3001)
        growth = 1 / 60 if a >= critical else -1 / 60
        return t, 1.2 + 0.01 * np.exp(growth * t) * np.sin(t)
    return run


def test_tune_proportional_returns_half_the_critical_gain():
    seen = []
    a = tune_proportional(_threshold_run(3.7, seen), lower=0.01, upper=100.0)
    critical = min(x for x in seen if x >= 3.7)
    assert a == critical / 2
    assert critical == pytest.approx(3.7, rel=0.02)


def test_tune_proportional_bounds():
    with pytest.raises(TuningError, match="no instability"):
        tune_proportional(_threshold_run(1e9, []), lower=0.01, upper=10.0)
    with pytest.raises(TuningError, match="already unstable"):
        tune_proportional(_threshold_run(0.0, []), lower=0.01, upper=10.0)


def test_failed_trial_counts_as_unstable():
    def run(a):
        if a > 2:
            raise RuntimeError("blew up")
        t = np.linspace(0, 300, 301)
        return t, np.full(t.size, 1.2)
    assert tune_proportional(run, lower=0.1, upper=50) == pytest.approx(1.0, rel=0.03)


def test_tune_integral_already_converged():
    calls = []

    def mean_speed(a):
        calls.append(a)
        return 1.26711
    assert tune_integral(mean_speed, 1.26711, 0.42) == 0.42
    assert calls == [0.42]


def test_tune_integral_bracketed_first_order_plant():
    # mean speed error decays with the integral gain: e(a) = 0.05 (1 - a / 0.3)
    w0 = 1.26711

    def mean_speed(a):
        return w0 + 0.05 * (1 - a / 0.3) * w0
    a = tune_integral(mean_speed, w0, 0.2, 0.4, rel_tol=1e-6)
    assert a == pytest.approx(0.3, rel=1e-4)


def test_tune_integral_nonlinear_plant_converges_within_cap():
    w0 = 1.0

    def mean_speed(a):
        return w0 * (1 + 0.1 * math.tanh(2.0 - a))
    a = tune_integral(mean_speed, w0, 0.5, 3.5, rel_tol=1e-4, max_iter=20)
    assert a == pytest.approx(2.0, abs=2e-3)


def test_tune_derivative_synthetic_objectives():
    grid = np.linspace(0.02, 1.0, 50)
    res = tune_derivative(lambda k: 1.0 - k, grid)
    assert res.best == grid[-1] and not res.interior_minimum
    res = tune_derivative(lambda k: (k - 0.1874) ** 2 + 0.01, grid)
    assert abs(res.best - 0.1874) <= (grid[1] - grid[0]) / 2
    assert res.interior_minimum
    assert res.to_text().splitlines()[0] == "K_d,omega_R_std"
    assert len(res.to_text().splitlines()) == 51
