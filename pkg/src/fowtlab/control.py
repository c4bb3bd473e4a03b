"""Gain-scheduled blade-pitch PID controller and its tuning procedures.

The controller is incremental: each step adds

    dbeta = K_p eta_G e + K_i I + K_d eta_G domega_R/dt

to the previously applied pitch, where e = omega_R - omega_0 and I is the
accumulated eta_G e dt, divided by the elapsed time in ``average`` mode.
The command is then rate limited and clamped to the pitch range.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .params import ParameterSet

__all__ = [
    "TuningError",
    "ControllerState",
    "GainSet",
    "gain_schedule",
    "scheduled_gains",
    "initial_controller_state",
    "pid_step",
    "apply_saturation",
    "controller_update",
    "is_unstable",
    "tune_proportional",
    "tune_integral",
    "tune_derivative",
    "SweepResult",
]


class TuningError(RuntimeError):
    pass


@dataclass(frozen=True)
class ControllerState:
    integral: float        # accumulated eta_G (omega_R - omega_0) dt [rad]
    prev_omega_R: float
    prev_beta: float
    t: float = 0.0
    rate_filtered: float = 0.0
    saturated: bool = False


@dataclass(frozen=True)
class GainSet:
    K_p: float
    K_i: float
    K_d: float
    a_p: float = 1.0
    a_i: float = 1.0

    def __post_init__(self):
        for name in ("K_p", "K_i", "K_d", "a_p", "a_i"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and nonnegative")


def gain_schedule(beta: float, p: ParameterSet, a_p: float | None = None,
                  a_i: float | None = None) -> tuple[float, float]:
    """Scheduled (K_p, K_i) at pitch ``beta`` (rad)."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    a_p = p.a_p if a_p is None else a_p
    a_i = p.a_i if a_i is None else a_i
    base = p.J_R_tilde * p.omega_0 * p.omega_phi / (p.eta_G * p.pitch_sensitivity)
    factor = p.beta_k / (p.beta_k + beta)
    return a_p * 2.0 * p.zeta_phi * base * factor, a_i * base * factor


def scheduled_gains(beta: float, p: ParameterSet, a_p: float | None = None,
                    a_i: float | None = None, K_d: float | None = None) -> GainSet:
    a_p = p.a_p if a_p is None else a_p
    a_i = p.a_i if a_i is None else a_i
    K_p, K_i = gain_schedule(max(beta, 0.0), p, a_p, a_i)
    return GainSet(K_p, K_i, p.K_d if K_d is None else K_d, a_p, a_i)


def initial_controller_state(omega_R: float, beta: float) -> ControllerState:
    return ControllerState(0.0, omega_R, beta)


def pid_step(cs: ControllerState, omega_R: float, dt: float, gains: GainSet,
             p: ParameterSet) -> tuple[float, ControllerState]:
    """One controller update; returns the unsaturated command and new state.

    The returned state still carries the previous pitch; use
    :func:`controller_update` to saturate and commit.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    e = omega_R - p.omega_0
    t = cs.t + dt
    frozen = p.anti_windup and cs.saturated
    integral = cs.integral if frozen else cs.integral + p.eta_G * e * dt
    i_term = integral / t if p.integral_mode == "average" else integral

    rate = (omega_R - cs.prev_omega_R) / dt
    tau = p.derivative_filter_tau
    if tau > 0:
        rate = cs.rate_filtered + dt / (tau + dt) * (rate - cs.rate_filtered)

    d_beta = gains.K_p * p.eta_G * e + gains.K_i * i_term + gains.K_d * p.eta_G * rate
    new = replace(cs, integral=integral, prev_omega_R=omega_R, t=t, rate_filtered=rate)
    return cs.prev_beta + d_beta, new


def apply_saturation(beta_command: float, prev_beta: float, dt: float,
                     p: ParameterSet) -> float:
    """Rate limit around ``prev_beta`` first, then clamp to the pitch range."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    step = p.pitch_rate_limit * dt
    beta = min(max(beta_command, prev_beta - step), prev_beta + step)
    lo, hi = p.pitch_range
    return min(max(beta, lo), hi)


def controller_update(cs: ControllerState, omega_R: float, dt: float, p: ParameterSet,
                      gains: GainSet | None = None) -> tuple[float, ControllerState]:
    """Schedule gains at the current pitch, step the PID and saturate."""
    if gains is None:
        gains = scheduled_gains(cs.prev_beta, p)
    cmd, new = pid_step(cs, omega_R, dt, gains, p)
    beta = apply_saturation(cmd, cs.prev_beta, dt, p)
    saturated = beta != cmd
    if saturated and p.anti_windup:
        # hold the accumulator while the actuator cannot follow
        new = replace(new, integral=cs.integral)
    return beta, replace(new, prev_beta=beta, saturated=saturated)


# ---------------------------------------------------------------------------
# tuning


def is_unstable(t, omega_R, window: float = 60.0, n_windows: int = 3,
                min_amplitude: float = 1e-3) -> bool:
    """Peak-to-peak rotor speed grows over the last ``n_windows`` windows.

    ``min_amplitude`` (rad/s) ignores growth that is still negligibly small.
    """
    t = np.asarray(t, dtype=float)
    w = np.asarray(omega_R, dtype=float)
    if not np.all(np.isfinite(w)):
        return True
    end = t[-1]
    ptp = []
    for k in range(n_windows, 0, -1):
        sel = (t > end - k * window) & (t <= end - (k - 1) * window)
        if sel.sum() < 2:
            return False
        ptp.append(float(np.ptp(w[sel])))
    growing = all(b > a for a, b in zip(ptp, ptp[1:]))
    return growing and ptp[-1] > min_amplitude


def tune_proportional(run: Callable[[float], tuple], lower: float = 1e-3,
                      upper: float = 10.0, growth: float = 1.5,
                      rel_tol: float = 0.02, detector: Callable = is_unstable) -> float:
    """Find the critical a_p by ramp then bisection and return half of it.

    ``run(a_p)`` returns ``(t, omega_R)`` of a steady-wind closed-loop run,
    or raises when the simulation fails, which counts as unstable.
    """

    def unstable(a):
        try:
            t, w = run(a)
        except Exception:  # a failed run is an unstable one
            return True
        return detector(t, w)

    if unstable(lower):
        raise TuningError(f"closed loop already unstable at a_p = {lower:g}")
    stable, a = lower, lower
    while True:
        a = min(a * growth, upper)
        if unstable(a):
            break
        stable = a
        if a >= upper:
            raise TuningError(f"no instability found for a_p up to {upper:g}")
    lo, hi = stable, a
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if unstable(mid):
            hi = mid
        else:
            lo = mid
    return hi / 2.0


def tune_integral(mean_speed: Callable[[float], float], omega_0: float, a_i0: float,
                  a_i1: float | None = None, rel_tol: float = 0.005,
                  max_iter: int = 20, bounds: tuple[float, float] = (0.0, math.inf)) -> float:
    """Adjust a_i until the run-mean rotor speed is within ``rel_tol`` of rated.

    ``mean_speed(a_i)`` returns the time-averaged rotor speed.  Secant
    steps are used, falling back to bisection once a sign change is
    bracketed.
    """
    tol = rel_tol * omega_0

    def err(a):
        return mean_speed(a) - omega_0

    x0 = a_i0
    f0 = err(x0)
    if abs(f0) <= tol:
        return x0
    x1 = a_i1 if a_i1 is not None else (x0 * 2.0 if x0 > 0 else 1e-3)
    f1 = err(x1)
    bracket = (x0, f0, x1, f1) if f0 * f1 < 0 else None
    for _ in range(max_iter):
        if abs(f1) <= tol:
            return x1
        if bracket is not None:
            a, fa, b, fb = bracket
            x2 = b - fb * (b - a) / (fb - fa)
            if not (min(a, b) < x2 < max(a, b)):
                x2 = 0.5 * (a + b)
        elif f1 != f0:
            x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
        else:
            x2 = x1 * 2.0
        x2 = min(max(x2, bounds[0]), bounds[1])
        f2 = err(x2)
        if bracket is not None:
            a, fa, b, fb = bracket
            bracket = (a, fa, x2, f2) if fa * f2 < 0 else (x2, f2, b, fb)
        elif f1 * f2 < 0:
            bracket = (x1, f1, x2, f2)
        x0, f0, x1, f1 = x1, f1, x2, f2
    if abs(f1) <= tol:
        return x1
    raise TuningError(f"integral tuning did not converge in {max_iter} iterations "
                      f"(last a_i = {x1:g}, error {f1:g} rad/s)")


@dataclass(frozen=True)
class SweepResult:
    K_d: np.ndarray
    std: np.ndarray
    best: float

    @property
    def interior_minimum(self) -> bool:
        i = int(np.argmin(self.std))
        return 0 < i < self.std.size - 1

    def to_text(self) -> str:
        out = io.StringIO()
        out.write("K_d,omega_R_std\n")
        for k, s in zip(self.K_d, self.std):
            out.write(f"{k!r},{s!r}\n")
        return out.getvalue()


def tune_derivative(objective: Callable[[float], float],
                    grid: Sequence[float] | None = None) -> SweepResult:
    """Sweep K_d and return the grid point minimizing ``objective``.

    ``objective(K_d)`` is the rotor-speed standard deviation of a run.
    The default grid spans [0.02, 1.0].
    """
    grid = np.linspace(0.02, 1.0, 50) if grid is None else np.asarray(grid, dtype=float)
    std = np.array([float(objective(k)) for k in grid])
    return SweepResult(grid, std, float(grid[int(np.argmin(std))]))
