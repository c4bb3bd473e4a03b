"""Seeded hub-height turbulence and linear ocean waves.

Wind: Von Karman longitudinal spectrum, synthesized by inverse FFT with
random phases and deterministic amplitudes, so the sample variance over
the record equals the discretized spectral integral exactly.

Waves: Pierson-Moskowitz spectrum split into log-spaced harmonics with
deep-water Airy kinematics.

All randomness comes from ``numpy.random.PCG64`` seeded with the spec's
64-bit seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RNG_ALGORITHM",
    "PM_ALPHA",
    "PM_BETA",
    "WindSpec",
    "WindSeries",
    "WaveSpec",
    "WaveField",
    "von_karman_psd",
    "synthesize_wind",
    "constant_wind",
    "pierson_moskowitz_psd",
    "pm_peak_frequency",
    "pm_variance",
    "synthesize_waves",
    "still_water",
    "wave_kinematics",
    "write_series",
    "read_series",
]

RNG_ALGORITHM = "numpy.PCG64"
G = 9.81
PM_ALPHA = 8.1e-3
PM_BETA = 0.74


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


# ---------------------------------------------------------------------------
# wind


@dataclass(frozen=True)
class WindSpec:
    U_ref: float = 20.0
    sigma_u: float = 2.884       # IEC class B normal turbulence at 20 m/s
    L_u: float = 147.0           # 3.5 x 42 m
    dt: float = 0.05
    duration: float = 1500.0
    seed: int = 0

    def __post_init__(self):
        if not self.U_ref > 0:
            raise ValueError("U_ref must be positive")
        if not self.sigma_u >= 0:
            raise ValueError("sigma_u must be nonnegative")
        if not self.L_u > 0:
            raise ValueError("L_u must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.duration >= self.dt:
            raise ValueError("duration must be at least dt")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration / self.dt)) + 1


@dataclass(frozen=True, eq=False)
class WindSeries:
    t: np.ndarray
    v_w: np.ndarray
    spec: WindSpec | None = None

    def __post_init__(self):
        if self.t.shape != self.v_w.shape or self.t.ndim != 1 or self.t.size < 2:
            raise ValueError("wind series needs matching 1-D time and speed arrays")
        if not np.all(np.isfinite(self.v_w)):
            raise ValueError("wind samples must be finite")
        object.__setattr__(self, "_t0", float(self.t[0]))
        object.__setattr__(self, "_dt", float(self.t[1] - self.t[0]))
        object.__setattr__(self, "_v", self.v_w.tolist())

    @property
    def dt(self) -> float:
        return self._dt

    def at(self, t: float) -> float:
        """Linear interpolation; held constant beyond either end."""
        v = self._v
        u = (t - self._t0) / self._dt
        if u <= 0.0:
            return v[0]
        i = int(u)
        if i >= len(v) - 1:
            return v[-1]
        f = u - i
        return v[i] + f * (v[i + 1] - v[i])


def von_karman_psd(f, spec: WindSpec):
    """One-sided longitudinal Von Karman spectrum [(m/s)^2/Hz]."""
    f = np.asarray(f, dtype=float)
    tau = spec.L_u / spec.U_ref
    return 4.0 * spec.sigma_u**2 * tau / (1.0 + 70.8 * (f * tau) ** 2) ** (5.0 / 6.0)


def synthesize_wind(spec: WindSpec) -> WindSeries:
    if spec.duration < 10.0 * spec.L_u / spec.U_ref:
        raise ValueError(
            f"duration {spec.duration:g} s shorter than 10 integral time scales "
            f"({10.0 * spec.L_u / spec.U_ref:g} s)")
    n = spec.n_samples
    t = np.arange(n) * spec.dt
    if spec.sigma_u == 0:
        return WindSeries(t, np.full(n, float(spec.U_ref)), spec)
    freqs = np.fft.rfftfreq(n, spec.dt)
    df = 1.0 / (n * spec.dt)
    amp = np.sqrt(2.0 * von_karman_psd(freqs, spec) * df)
    amp[0] = 0.0
    if n % 2 == 0:
        amp[-1] = 0.0
    phase = _rng(spec.seed).uniform(0.0, 2.0 * np.pi, size=freqs.size)
    coeff = 0.5 * n * amp * np.exp(1j * phase)
    v = spec.U_ref + np.fft.irfft(coeff, n)
    return WindSeries(t, v, spec)


def constant_wind(level: float, duration: float, dt: float = 0.05) -> WindSeries:
    n = int(round(duration / dt)) + 1
    return WindSeries(np.arange(n) * dt, np.full(n, float(level)))


# ---------------------------------------------------------------------------
# waves


@dataclass(frozen=True)
class WaveSpec:
    U_wave: float = 20.0
    n_components: int = 128
    omega_range: tuple[float, float] | None = None   # default [0.1, 10] x peak
    deep_water: bool = True
    seed: int = 0
    g: float = G

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError("n_components must be at least 1")
        if not self.U_wave > 0:
            raise ValueError("U_wave must be positive")
        if not self.deep_water:
            raise ValueError("only deep-water dispersion is supported")
        lo, hi = self.band
        if not (0 < lo < hi):
            raise ValueError("omega band must be positive and increasing")

    @property
    def band(self) -> tuple[float, float]:
        if self.omega_range is not None:
            return tuple(float(w) for w in self.omega_range)
        wp = pm_peak_frequency(self.U_wave, self.g)
        return 0.1 * wp, 10.0 * wp


def pierson_moskowitz_psd(omega, spec: WaveSpec):
    """Pierson-Moskowitz elevation spectrum [m^2 s] for wind speed U_wave."""
    omega = np.asarray(omega, dtype=float)
    g = spec.g
    with np.errstate(over="ignore", divide="ignore"):
        return PM_ALPHA * g**2 / omega**5 * np.exp(-PM_BETA * (g / (spec.U_wave * omega)) ** 4)


def pm_peak_frequency(U: float, g: float = G) -> float:
    return (0.8 * PM_BETA) ** 0.25 * g / U


def pm_variance(U: float, g: float = G) -> float:
    """Closed-form integral of the spectrum over (0, inf)."""
    return PM_ALPHA * U**4 / (4.0 * PM_BETA * g**2)


@dataclass(frozen=True, eq=False)
class WaveField:
    amplitude: np.ndarray
    omega: np.ndarray
    k: np.ndarray
    phase: np.ndarray
    spec: WaveSpec | None = None
    g: float = G

    def __post_init__(self):
        for name in ("amplitude", "omega", "k", "phase"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if np.any(self.amplitude < 0):
            raise ValueError("wave amplitudes must be nonnegative")
        aw = self.amplitude * self.omega
        aw2 = aw * self.omega
        object.__setattr__(self, "_aw", aw)
        object.__setattr__(self, "_aw2", aw2)
        # cosine-weighted channels (u, -a_z, head) and sine-weighted (w, a_x)
        object.__setattr__(self, "_ccoef", np.column_stack([aw, aw2, self.amplitude]))
        object.__setattr__(self, "_scoef", np.column_stack([aw, aw2]))

    @property
    def n_components(self) -> int:
        return int(self.amplitude.size)

    def elevation(self, x, t):
        x = np.asarray(x, dtype=float)
        theta = np.multiply.outer(x, self.k) - self.omega * t + self.phase
        return np.cos(theta) @ self.amplitude

    def kinematics_batch(self, x, z, t):
        """Vectorized Airy kinematics at points (x[i], z[i]), z up from SWL.

        Returns ``(u, w, a_x, a_z, head)`` where ``head`` is the dynamic
        pressure divided by rho g.
        """
        theta = np.multiply.outer(np.asarray(x, dtype=float), self.k) - self.omega * t + self.phase
        decay = np.exp(np.multiply.outer(np.minimum(z, 0.0), self.k))
        c = np.cos(theta) * decay
        s = np.sin(theta) * decay
        rc = c @ self._ccoef
        rs = s @ self._scoef
        return rc[:, 0], rs[:, 0], rs[:, 1], -rc[:, 1], rc[:, 2]

    def column_kinematics(self, x0: float, z, t):
        """Kinematics along a vertical line at horizontal station ``x0``.

        Same outputs as :meth:`kinematics_batch`; the phase is shared by all
        depths, which makes this much cheaper for slender-column loads.
        """
        theta = self.k * x0 - self.omega * t + self.phase
        decay = np.exp(np.multiply.outer(np.minimum(z, 0.0), self.k))
        rc = decay @ (np.cos(theta)[:, None] * self._ccoef)
        rs = decay @ (np.sin(theta)[:, None] * self._scoef)
        return rc[:, 0], rs[:, 0], rs[:, 1], -rc[:, 1], rc[:, 2]


def synthesize_waves(spec: WaveSpec) -> WaveField:
    lo, hi = spec.band
    n = spec.n_components
    if n == 1:
        omega = np.array([math.sqrt(lo * hi)])
        domega = np.array([hi - lo])
    else:
        omega = np.geomspace(lo, hi, n)
        edges = np.sqrt(omega[:-1] * omega[1:])
        ratio = omega[1] / omega[0]
        edges = np.concatenate([[omega[0] / math.sqrt(ratio)], edges, [omega[-1] * math.sqrt(ratio)]])
        domega = np.diff(edges)
    amp = np.sqrt(2.0 * pierson_moskowitz_psd(omega, spec) * domega)
    phase = _rng(spec.seed).uniform(0.0, 2.0 * np.pi, size=n)
    return WaveField(amp, omega, omega**2 / spec.g, phase, spec, spec.g)


def still_water() -> WaveField:
    empty = np.zeros(0)
    return WaveField(empty, empty, empty, empty)


def wave_kinematics(field: WaveField, x: float, z: float, t: float):
    """Elevation, (u, w) and (a_x, a_z) at one point; ``z`` <= 0 is depth."""
    if z > 0:
        raise ValueError("kinematics are defined below the mean surface (z <= 0)")
    u, w, ax, az, _ = field.kinematics_batch(np.array([x]), np.array([z]), t)
    elev = float(field.elevation(np.array([x]), t)[0]) if field.n_components else 0.0
    return elev, (float(u[0]), float(w[0])), (float(ax[0]), float(az[0]))


# ---------------------------------------------------------------------------
# text export / import


def write_series(path, t, values, name: str = "value") -> None:
    data = np.column_stack([np.asarray(t, float), np.asarray(values, float)])
    np.savetxt(path, data, delimiter=",", header=f"time,{name}", comments="", fmt="%.17g")


def read_series(path) -> WindSeries:
    """Load a two-column (time, speed) delimited file as a wind series."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t, v = data[:, 0], data[:, 1]
    steps = np.diff(t)
    if steps.size == 0 or np.any(np.abs(steps - steps[0]) > 1e-9 * max(1.0, abs(t[-1]))):
        raise ValueError("imported series must be uniformly sampled")
    return WindSeries(t, v)
