"""Fixed-step closed-loop simulation and steady-state validation runs."""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from . import __version__, aero, control, dynamics
from .dynamics import EnvInputs, SimulationFailure, StateVector
from .environment import (RNG_ALGORITHM, WaveField, WaveSpec, WindSeries, WindSpec,
                          synthesize_waves, synthesize_wind)
from .params import ParameterSet, serialize_parameters, serialize_surface

__all__ = [
    "CHANNELS",
    "STATE_CHANNELS",
    "SimConfig",
    "Trajectory",
    "SteadyStateReport",
    "rk4_step",
    "trim_pitch",
    "initial_state",
    "simulate",
    "steady_state_run",
    "parameter_hash",
    "tuning_trial",
]

STATE_CHANNELS = ("surge", "surge_rate", "heave", "heave_rate", "pitch", "pitch_rate",
                  "rotor_speed")
CHANNELS = ("wind_speed", "wave_elevation") + STATE_CHANNELS + (
    "pitch_accel", "blade_pitch", "gen_torque", "aero_power",
    "wave_force_surge", "wave_force_heave", "wave_moment_pitch")

# reporting frame flips surge, heave and pitch
_RCCS_SIGN = np.array([-1.0, -1.0, -1.0, -1.0, -1.0, -1.0, 1.0])


@dataclass(frozen=True)
class SimConfig:
    """Run description.

    ``wind`` is a constant speed, a :class:`WindSpec` to synthesize or a
    :class:`WindSeries` to replay; ``wave`` is ``None`` (still water), a
    :class:`WaveSpec` or a :class:`WaveField`.  With the controller off the
    pitch is held at ``beta``; with it on ``beta`` is the starting pitch
    (``None`` trims to rated power at the mean wind).  ``torque`` fixes the
    generator torque; ``None`` uses the constant-power law.
    """

    dt: float = 0.05
    duration: float = 1500.0
    initial: StateVector | None = None
    controller: bool = True
    beta: float | None = None
    torque: float | None = None
    wind: float | WindSpec | WindSeries = 20.0
    wave: WaveSpec | WaveField | None = None
    decimation: int = 1
    report_surge: float | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.duration >= self.dt:
            raise ValueError("duration must be at least dt")
        if int(self.decimation) != self.decimation or self.decimation < 1:
            raise ValueError("decimation must be a positive integer")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def with_updates(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


@dataclass(eq=False)
class Trajectory:
    t: np.ndarray
    channels: dict[str, np.ndarray]
    manifest: dict
    failure: dict | None = None

    def __getitem__(self, name: str) -> np.ndarray:
        if name == "time":
            return self.t
        return self.channels[name]

    def __len__(self) -> int:
        return int(self.t.size)

    @property
    def failed(self) -> bool:
        return self.failure is not None

    def identical(self, other: "Trajectory") -> bool:
        """Bit-for-bit equality of every recorded series and the failure record."""
        if self.channels.keys() != other.channels.keys():
            return False
        return (np.array_equal(self.t, other.t)
                and all(np.array_equal(self.channels[k], other.channels[k], equal_nan=True)
                        for k in self.channels)
                and self.failure == other.failure)


@dataclass(frozen=True)
class SteadyStateReport:
    final: dict[str, float]
    settling_time: float
    converged: bool


def rk4_step(x: np.ndarray, t: float, dt: float, f: Callable) -> np.ndarray:
    """Classical fourth-order Runge-Kutta step for ``xdot = f(x, t)``."""
    k1 = f(x, t)
    return _rk4_rest(x, t, dt, f, k1)


def _rk4_rest(x, t, dt, f, k1):
    h = 0.5 * dt
    k2 = f(x + h * k1, t + h)
    k3 = f(x + h * k2, t + h)
    k4 = f(x + dt * k3, t + dt)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# ---------------------------------------------------------------------------
# set-up helpers


def parameter_hash(p: ParameterSet, surfaces=None) -> str:
    h = hashlib.sha256(serialize_parameters(p).encode())
    if surfaces is not None:
        for kind in sorted(surfaces):
            h.update(serialize_surface(surfaces[kind], degrees=False).encode())
    return h.hexdigest()


def trim_pitch(p: ParameterSet, surfaces, v: float, omega_R: float | None = None) -> float:
    """Pitch at which rotor power equals rated power at steady wind ``v``.

    Returns the lower pitch bound when even that pitch gives too little power.
    """
    w = p.omega_0 if omega_R is None else omega_R
    lo, hi = p.pitch_range

    def excess(b):
        return aero.aerodynamic_power(p, surfaces["power"], v, w, b) - p.P_0

    if excess(lo) <= 0:
        return lo
    if excess(hi) >= 0:
        return hi
    return float(optimize.brentq(excess, lo, hi, xtol=1e-12))


def _mean_wind(wind) -> float:
    if isinstance(wind, WindSpec):
        return wind.U_ref
    if isinstance(wind, WindSeries):
        return float(np.mean(wind.v_w))
    return float(wind)


def initial_state(cfg: SimConfig, p: ParameterSet, surfaces) -> tuple[StateVector, float]:
    """Starting state and pitch: static equilibrium at rated rotor speed."""
    v = _mean_wind(cfg.wind)
    if cfg.beta is not None:
        beta = cfg.beta
    elif cfg.controller:
        beta = trim_pitch(p, surfaces, v)
    else:
        beta = 0.0
    if cfg.initial is not None:
        return cfg.initial, beta
    return dynamics.static_equilibrium(p, surfaces, v, beta, omega_R=p.omega_0), beta


def _wind_source(cfg: SimConfig):
    wind = cfg.wind
    if isinstance(wind, WindSpec):
        wind = synthesize_wind(wind)
    if isinstance(wind, WindSeries):
        if wind.t[-1] < wind.t[0] + cfg.duration - 1e-9:
            raise ValueError("wind series is shorter than the simulation")
        return wind.at, wind
    level = float(wind)
    return (lambda t: level), None


def _wave_source(cfg: SimConfig):
    wave = cfg.wave
    if isinstance(wave, WaveSpec):
        wave = synthesize_waves(wave)
    if wave is not None and wave.n_components == 0:
        wave = None
    return wave


def _spec_dict(obj):
    if obj is None:
        return None
    if isinstance(obj, (int, float)):
        return {"constant": float(obj)}
    if isinstance(obj, (WindSpec, WaveSpec)):
        d = dataclasses.asdict(obj)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}
    if isinstance(obj, WindSeries):
        return {"replay": True, "n_samples": int(obj.t.size),
                "sha256": hashlib.sha256(obj.v_w.tobytes()).hexdigest(),
                **({"spec": _spec_dict(obj.spec)} if obj.spec is not None else {})}
    if isinstance(obj, WaveField):
        return {"field": True, "n_components": obj.n_components,
                "sha256": hashlib.sha256(obj.amplitude.tobytes() + obj.phase.tobytes()).hexdigest(),
                **({"spec": _spec_dict(obj.spec)} if obj.spec is not None else {})}
    raise TypeError(f"cannot describe {type(obj).__name__}")


# ---------------------------------------------------------------------------
# main loop


class _Compiled:
    """Packed inputs for the compiled derivative of the default models."""

    def __init__(self, p: ParameterSet, surfaces, field_):
        from . import _kernel
        self._k = _kernel
        self.c, self.lines, self.gn, self.gw = _kernel.pack_parameters(p)
        self.cp = _kernel.pack_surface(surfaces["power"])
        self.ct = _kernel.pack_surface(surfaces["thrust"])
        self.wave = _kernel.pack_waves(field_)
        self.extra = np.empty(5)

    def __call__(self, x, v_w, t, beta, T_E):
        out = np.empty(7)
        status = self._k.derivative(x, v_w, t, beta, math.nan if T_E is None else T_E,
                                    self.c, self.lines, self.gn, self.gw, *self.cp, *self.ct,
                                    *self.wave, out, self.extra)
        if status:
            cause = self._k.STATUS_CAUSE[status]
            raise SimulationFailure(f"derivative evaluation failed: {cause}", x, cause)
        return out


def _python_stage(p, surfaces, field_, models):
    extra = np.empty(5)

    def stage(x, v_w, t, beta, T_E):
        xdot, bd, P_A, T_used = dynamics.state_derivative(
            x, EnvInputs(v_w, field_, t), beta, p, surfaces, T_E, models, details=True)
        extra[:] = (P_A, T_used, *bd.wave)
        return xdot

    stage.extra = extra
    return stage


def simulate(cfg: SimConfig, p: ParameterSet, surfaces,
             models: dynamics.ForceModels = dynamics.DEFAULT_MODELS,
             compiled: bool | None = None) -> Trajectory:
    """Integrate the closed loop; failures truncate the trajectory and are recorded.

    ``compiled`` selects the numba derivative (default when the standard
    force models are in use) or the pure-Python reference.
    """
    wind_at, _ = _wind_source(cfg)
    field_ = _wave_source(cfg)
    x0, beta = initial_state(cfg, p, surfaces)
    beta0 = beta
    x = x0.as_array()
    report_surge = -x[0] if cfg.report_surge is None else float(cfg.report_surge)
    torque = cfg.torque
    dt = cfg.dt
    h = 0.5 * dt
    n_steps = cfg.n_steps
    dec = int(cfg.decimation)
    n_rec = n_steps // dec + 1
    if compiled is None:
        compiled = models == dynamics.DEFAULT_MODELS
    if compiled and models != dynamics.DEFAULT_MODELS:
        raise ValueError("the compiled derivative only covers the default force models")
    deriv = _Compiled(p, surfaces, field_) if compiled else _python_stage(p, surfaces, field_, models)
    extra = deriv.extra

    rec = {name: np.full(n_rec, np.nan) for name in CHANNELS}
    t_rec = np.arange(n_rec) * (dt * dec)
    cs = control.initial_controller_state(x[6], beta)
    report_x = np.array([report_surge])

    failure = None
    n_done = 0
    for n in range(n_steps + 1):
        t = n * dt
        try:
            k1 = deriv(x, wind_at(t), t, beta, torque)
        except SimulationFailure as exc:
            failure = _failure_record(exc, t, x, p)
            break
        if n % dec == 0:
            i = n // dec
            rep = _RCCS_SIGN * x + 0.0  # no negative zeros in reports
            rep[2] = p.heave_offset - x[2]
            for name, value in zip(STATE_CHANNELS, rep):
                rec[name][i] = value
            rec["wind_speed"][i] = wind_at(t)
            rec["wave_elevation"][i] = (float(field_.elevation(report_x, t)[0])
                                        if field_ is not None else 0.0)
            rec["pitch_accel"][i] = -k1[5]
            rec["blade_pitch"][i] = beta
            rec["gen_torque"][i] = extra[1]
            rec["aero_power"][i] = extra[0]
            rec["wave_force_surge"][i] = -extra[2]
            rec["wave_force_heave"][i] = -extra[3]
            rec["wave_moment_pitch"][i] = -extra[4]
            n_done = i + 1
        if n == n_steps:
            break
        try:
            v_mid = wind_at(t + h)
            k2 = deriv(x + h * k1, v_mid, t + h, beta, torque)
            k3 = deriv(x + h * k2, v_mid, t + h, beta, torque)
            k4 = deriv(x + dt * k3, wind_at(t + dt), t + dt, beta, torque)
            x_new = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            dynamics._check_state(x_new)
            if x_new[6] < 0.0:
                raise SimulationFailure("rotor reversed direction", x_new, "rotor_reversal")
        except SimulationFailure as exc:
            failure = _failure_record(exc, t + dt, x, p)
            break
        x = x_new
        if cfg.controller:
            beta, cs = control.controller_update(cs, x[6], dt, p)

    if n_done < n_rec:
        t_rec = t_rec[:n_done]
        rec = {k: v[:n_done] for k, v in rec.items()}

    manifest = {
        "version": __version__,
        "integrator": "rk4",
        "dt": dt,
        "duration": cfg.duration,
        "decimation": dec,
        "rng": RNG_ALGORITHM,
        "wind": _spec_dict(cfg.wind),
        "wave": _spec_dict(cfg.wave),
        "controller": bool(cfg.controller),
        "integral_mode": p.integral_mode,
        "anti_windup": bool(p.anti_windup),
        "derivative_filter_tau": p.derivative_filter_tau,
        "initial_beta": float(beta0),
        "torque": "region3" if torque is None else float(torque),
        "report_surge": report_surge,
        "initial_state": [float(v) for v in x0.as_array()],
        "parameter_hash": parameter_hash(p, surfaces),
    }
    return Trajectory(t_rec, rec, manifest, failure)


def _failure_record(exc: SimulationFailure, t: float, x, p: ParameterSet) -> dict:
    state = exc.state if exc.state is not None else np.asarray(x)
    return {"cause": exc.cause, "time": float(t), "message": str(exc),
            "state": [float(v) for v in state]}


# ---------------------------------------------------------------------------
# steady-state validation

_FLOORS = {"surge": 1e-3, "heave": 1e-3, "pitch": 1e-4, "rotor_speed": 1e-3,
           "surge_rate": 1e-4, "heave_rate": 1e-4, "pitch_rate": 1e-5}


def steady_state_run(cfg: SimConfig, p: ParameterSet, surfaces, band: float = 0.01,
                     rate_tol: float = 1e-3, tail: float | None = None
                     ) -> tuple[Trajectory, SteadyStateReport]:
    """Constant-wind, still-water run with fixed controls.

    The settling time is the last instant any state lies outside a band of
    ``band`` times its final magnitude (with a small absolute floor per
    channel).  The run counts as converged when it settles before the final
    ``tail`` seconds (default 10% of the duration) and all rates end below
    ``rate_tol``.
    """
    if not isinstance(cfg.wind, (int, float)):
        raise ValueError("steady-state runs need a constant wind speed")
    if cfg.wave is not None or cfg.controller:
        raise ValueError("steady-state runs use still water and fixed controls")
    traj = simulate(cfg, p, surfaces)
    tail = 0.1 * cfg.duration if tail is None else tail
    final = {name: float(traj[name][-1]) for name in STATE_CHANNELS}
    settle = float(traj.t[0])
    for name in STATE_CHANNELS:
        series = traj[name]
        tol = max(band * abs(final[name]), _FLOORS[name])
        outside = np.nonzero(np.abs(series - final[name]) > tol)[0]
        if outside.size:
            settle = max(settle, float(traj.t[min(outside[-1] + 1, len(traj) - 1)]))
    rates_ok = all(abs(final[k]) < rate_tol for k in ("surge_rate", "heave_rate", "pitch_rate"))
    converged = bool(not traj.failed and rates_ok and settle <= traj.t[-1] - tail)
    return traj, SteadyStateReport(final, settle, converged)


# ---------------------------------------------------------------------------
# closed-loop trials for the tuning procedures


def tuning_trial(cfg: SimConfig, p: ParameterSet, surfaces, name: str,
                 perturb: float = 0.02, **fixed) -> Callable[[float], Trajectory]:
    """Return ``trial(value)`` running ``cfg`` with parameter ``name`` set.

    ``fixed`` holds further parameter overrides (e.g. ``K_d=0``).  The rotor
    starts ``perturb`` (relative) above its equilibrium speed so a steady
    wind still excites the loop.
    """
    base = p.with_updates(**fixed)
    x0, beta = initial_state(cfg.with_updates(initial=None), base, surfaces)
    x0 = dataclasses.replace(x0, omega_R=x0.omega_R * (1.0 + perturb))
    run_cfg = cfg.with_updates(initial=x0, beta=beta)

    def trial(value: float) -> Trajectory:
        return simulate(run_cfg, base.with_updates(**{name: value}), surfaces)

    return trial
