"""Planar surge/heave/pitch mainframe with a one-mass drivetrain.

Model frame: x horizontal pointing upwind, z vertical pointing down from
the still-water level.  ``(zeta, eta)`` locate the structure's reference
point, which sits ``heave_offset`` metres below the waterline in the
undisplaced configuration; ``alpha`` is the pitch of the tower axis.  A
body point at (s, l) -- s along the platform's horizontal axis, l up the
tower axis -- sits at

    x = zeta + l sin(alpha) + s cos(alpha)
    z = eta  - l cos(alpha) + s sin(alpha)

The equations of motion are E(alpha) xdot = F(x) for the six mainframe
states, with the rotor speed appended as a seventh state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize
from scipy.linalg import lapack

from . import aero
from .params import ParameterSet

__all__ = [
    "SimulationFailure",
    "StateVector",
    "ReportedState",
    "ForceBreakdown",
    "EnvInputs",
    "ForceModels",
    "mass_matrix",
    "weight_forces",
    "buoyancy_forces",
    "wind_forces",
    "tie_rod_linear_weight",
    "tie_rod_forces",
    "tie_rod_tensions",
    "wave_hydro_forces",
    "assemble",
    "state_derivative",
    "to_rccs",
    "from_rccs",
    "static_equilibrium",
    "STATE_NAMES",
]

STATE_NAMES = ("zeta", "v_zeta", "eta", "v_eta", "alpha", "omega", "omega_R")
COND_LIMIT = 1e12


class SimulationFailure(RuntimeError):
    """Raised when the model leaves its domain of validity."""

    def __init__(self, message: str, state=None, cause: str = "failure"):
        super().__init__(message)
        self.state = None if state is None else np.array(state, dtype=float)
        self.cause = cause


@dataclass(frozen=True)
class StateVector:
    zeta: float
    v_zeta: float
    eta: float
    v_eta: float
    alpha: float
    omega: float
    omega_R: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_array()):
            raise SimulationFailure("non-finite state", self.as_array(), "nonfinite")
        if abs(self.alpha) >= math.pi / 2:
            raise SimulationFailure("pitch beyond +/- 90 deg", self.as_array(), "capsize")

    def as_array(self) -> np.ndarray:
        return np.array([self.zeta, self.v_zeta, self.eta, self.v_eta,
                         self.alpha, self.omega, self.omega_R])

    @classmethod
    def from_array(cls, x) -> "StateVector":
        return cls(*(float(v) for v in x[:7]))


@dataclass(frozen=True)
class ReportedState:
    """State in the reporting frame: surge downwind positive, heave up
    positive and zero at the reference point's nominal depth, pitch
    positive nose-down-wind."""

    surge: float
    surge_rate: float
    heave: float
    heave_rate: float
    pitch: float
    pitch_rate: float
    rotor_speed: float


def to_rccs(state: StateVector, heave_offset: float = 37.55) -> ReportedState:
    return ReportedState(-state.zeta, -state.v_zeta, heave_offset - state.eta,
                         -state.v_eta, -state.alpha, -state.omega, state.omega_R)


def from_rccs(rep: ReportedState, heave_offset: float = 37.55) -> StateVector:
    return StateVector(-rep.surge, -rep.surge_rate, heave_offset - rep.heave,
                       -rep.heave_rate, -rep.pitch, -rep.pitch_rate, rep.rotor_speed)


@dataclass
class ForceBreakdown:
    """Generalized forces per source, each a (Q_zeta, Q_eta, Q_alpha) array."""

    weight: np.ndarray
    buoyancy: np.ndarray
    wind: np.ndarray
    tie_rod: np.ndarray
    wave: np.ndarray
    hydro_drag: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return (self.weight + self.buoyancy + self.wind + self.tie_rod
                + self.wave + self.hydro_drag)


@dataclass(frozen=True)
class EnvInputs:
    """Exogenous forcing at one instant: wind speed and an optional wave field."""

    v_w: float
    wave_field: object = None
    t: float = 0.0


# ---------------------------------------------------------------------------
# mass matrix and force sources


def mass_matrix(state, p: ParameterSet) -> np.ndarray:
    alpha = state[4] if not isinstance(state, StateVector) else state.alpha
    c = p.M_d * math.cos(alpha)
    s = p.M_d * math.sin(alpha)
    E = np.eye(6)
    E[1, 1] = p.M_X
    E[3, 3] = p.M_Y
    E[5, 5] = p.J_TOT
    E[1, 5] = E[5, 1] = c
    E[3, 5] = E[5, 3] = s
    return E


def _x(state) -> np.ndarray:
    if isinstance(state, StateVector):
        return state.as_array()
    return np.asarray(state, dtype=float)


def weight_forces(state, p: ParameterSet) -> np.ndarray:
    alpha = _x(state)[4]
    return np.array([
        0.0,
        (p.M_n + p.M_p + p.M_s) * p.g,
        (p.M_n * p.d_nv + p.M_p * p.d_pv) * p.g * math.sin(alpha)
        + (p.M_n * p.d_nh + p.M_p * p.d_ph) * p.g * math.cos(alpha),
    ])


def buoyancy_forces(state, p: ParameterSet) -> np.ndarray:
    alpha = _x(state)[4]
    b = p.rho_water * p.V_g * p.g
    return np.array([0.0, -b, b * p.d_G * math.sin(alpha)])


def wind_forces(state, v_w: float, beta: float, p: ParameterSet, surfaces) -> np.ndarray:
    wf = aero.total_wind_force(p, surfaces, _x(state), v_w, beta)
    return np.array([wf.total, 0.0, wf.moment])


def tie_rod_linear_weight(lambda_l: float, r_l: float, rho_w: float, g: float) -> float:
    """Net submerged weight per unit length of a tendon [N/m]."""
    return lambda_l * g - rho_w * g * math.pi * r_l**2


def _line_geometry(x, line):
    zeta, _, eta, _, alpha = x[:5]
    s, l = line.attach
    ca, sa = math.cos(alpha), math.sin(alpha)
    xa = zeta + l * sa + s * ca
    za = eta - l * ca + s * sa
    dx = line.anchor[0] - xa
    dz = line.anchor[1] - za
    return dx, dz, math.hypot(dx, dz), ca, sa, s, l


def tie_rod_tensions(state, p: ParameterSet) -> np.ndarray:
    """Axial tension in each line [N] (never negative)."""
    x = _x(state)
    out = []
    for line in p.lines:
        L = _line_geometry(x, line)[2]
        out.append(max(0.0, line.k * (L - line.L0)))
    return np.array(out)


def tie_rod_forces(state, p: ParameterSet) -> np.ndarray:
    """Taut elastic tendons (no compression) plus their net submerged weight."""
    x = _x(state)
    qz = qe = qa = 0.0
    for line in p.lines:
        dx, dz, L, ca, sa, s, l = _line_geometry(x, line)
        T = line.k * (L - line.L0)
        if T < 0.0:
            T = 0.0
        fx = T * dx / L
        fz = T * dz / L + tie_rod_linear_weight(line.lambda_l, line.r_l, p.rho_water, p.g) * line.L0
        qz += fx
        qe += fz
        qa += fx * (l * ca - s * sa) + fz * (l * sa + s * ca)
    return np.array([qz, qe, qa])


_GAUSS_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss(n: int):
    if n not in _GAUSS_CACHE:
        _GAUSS_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GAUSS_CACHE[n]


def wave_hydro_forces(state, wave_field, t: float, p: ParameterSet) -> tuple[np.ndarray, np.ndarray]:
    """Morison loads on the submerged column plus keel pressure and drag.

    Returns ``(wave, hydro_drag)``: the inertia/Froude-Krylov part driven by
    fluid acceleration and pressure, and the viscous part (quadratic drag on
    relative velocity plus linear damping).  Waves travel downwind.  The
    column is treated as slender: fluid kinematics for every depth are taken
    at the horizontal station of the waterline crossing.
    """
    zeta, v_zeta, eta, v_eta, alpha, omega = _x(state)[:6]
    ca, sa = math.cos(alpha), math.sin(alpha)
    l_keel = p.heave_offset - p.draft
    l_wl = eta / ca
    D = p.platform_diameter
    area = 0.25 * math.pi * D * D
    rho = p.rho_water

    nodes, weights = _gauss(p.n_strips)
    half = 0.5 * (l_wl - l_keel)
    ell = [l_keel + half * (xi + 1.0) for xi in nodes.tolist()]
    w = [wi * half for wi in weights.tolist()]
    zk = eta - l_keel * ca
    body_wk = v_eta + l_keel * omega * sa    # downward keel velocity

    if wave_field is not None and wave_field.n_components:
        n = len(ell)
        Zup = np.empty(n + 1)
        for i, li in enumerate(ell):
            Zup[i] = li * ca - eta
        Zup[n] = -zk
        x_wl = zeta + l_wl * sa
        # propagation coordinate points downwind
        u, wv, ax, _, head = wave_field.column_kinematics(-x_wl, Zup, t)
        fluid_u = (-u[:n]).tolist()
        fluid_a = (-ax[:n]).tolist()
        keel_w = -float(wv[n])               # downward fluid velocity at keel
        keel_p = rho * p.g * float(head[n])
    else:
        fluid_u = fluid_a = None
        keel_w = 0.0
        keel_p = 0.0

    c_in = rho * p.C_m * area
    c_dr = 0.5 * rho * p.C_d * D
    fx_wave = ma_wave = fx_drag = ma_drag = 0.0
    for i, li in enumerate(ell):
        arm = w[i] * li * ca
        rel = -(v_zeta + li * omega * ca)
        if fluid_u is not None:
            rel += fluid_u[i]
            f_in = w[i] * c_in * fluid_a[i]
            fx_wave += f_in
            ma_wave += f_in * li * ca
        f_dr = c_dr * abs(rel) * rel
        fx_drag += w[i] * f_dr
        ma_drag += arm * f_dr

    fz_wave = -keel_p * area
    wrel = keel_w - body_wk
    fz_drag = 0.5 * rho * p.C_d_heave * area * abs(wrel) * wrel

    wave = np.array([fx_wave, fz_wave, ma_wave + fz_wave * l_keel * sa])
    drag = np.array([
        fx_drag - p.B_surge * v_zeta,
        fz_drag - p.B_heave * v_eta,
        ma_drag + fz_drag * l_keel * sa - p.B_pitch * omega,
    ])
    return wave, drag


@dataclass(frozen=True)
class ForceModels:
    """Pluggable providers for the tendon and wave/hydrodynamic loads."""

    tie_rod: Callable = tie_rod_forces
    wave_hydro: Callable = wave_hydro_forces


DEFAULT_MODELS = ForceModels()


# ---------------------------------------------------------------------------
# assembly and derivative


def assemble(state, env: EnvInputs, beta: float, p: ParameterSet, surfaces,
             models: ForceModels = DEFAULT_MODELS):
    """Return ``(E, F, breakdown)`` for the mainframe equations."""
    x = _x(state)
    alpha, omega = x[4], x[5]
    wave, drag = models.wave_hydro(x, env.wave_field, env.t, p)
    bd = ForceBreakdown(
        weight=weight_forces(x, p),
        buoyancy=buoyancy_forces(x, p),
        wind=wind_forces(x, env.v_w, beta, p, surfaces),
        tie_rod=models.tie_rod(x, p),
        wave=wave,
        hydro_drag=drag,
    )
    Q = bd.total
    cent = p.M_d * omega * omega
    F = np.array([
        x[1],
        Q[0] + cent * math.sin(alpha),
        x[3],
        Q[1] - cent * math.cos(alpha),
        omega,
        Q[2],
    ])
    return mass_matrix(x, p), F, bd


def _check_state(x):
    if not math.isfinite(math.fsum(x)):
        raise SimulationFailure("non-finite state", x, "nonfinite")
    if abs(x[4]) >= math.pi / 2:
        raise SimulationFailure("pitch beyond +/- 90 deg", x, "capsize")


def _condition(E: np.ndarray) -> float:
    """2-norm condition number of E, or an upper bound on it when that
    bound is already below the failure limit.

    E is a permutation of diag(I, B) with B the symmetric 3x3 inertia block,
    so its singular values are 1 and those of B.  The bound
    cond(B) <= |B|_F^3 / |det B| avoids an SVD when it is already small.
    """
    B = E[1::2, 1::2]
    det = (B[0, 0] * (B[1, 1] * B[2, 2] - B[1, 2] * B[2, 1])
           - B[0, 1] * (B[1, 0] * B[2, 2] - B[1, 2] * B[2, 0])
           + B[0, 2] * (B[1, 0] * B[2, 1] - B[1, 1] * B[2, 0]))
    fro = math.sqrt(float((B * B).sum()))
    if det > 0 and fro > 0:
        # extend the bound to E: singular value 1 joins the spectrum
        lam_min_lb = det / (fro * fro)
        if max(fro, 1.0) / min(lam_min_lb, 1.0) <= COND_LIMIT:
            return max(fro, 1.0) / min(lam_min_lb, 1.0)
    return float(np.linalg.cond(E))


def state_derivative(state, env: EnvInputs, beta: float, p: ParameterSet, surfaces,
                     T_E: float | None = None, models: ForceModels = DEFAULT_MODELS,
                     check_condition: bool = True, details: bool = False):
    """Time derivative of the 7-state vector.

    ``T_E`` is the generator torque on the high-speed side; ``None`` uses
    the constant-power law.  The rotor shaft sees ``eta_G * T_E``.  With
    ``details`` returns ``(xdot, breakdown, P_A, T_E)``.
    """
    x = _x(state)
    _check_state(x)
    E, F, bd = assemble(x, env, beta, p, surfaces, models)
    if check_condition and _condition(E) > COND_LIMIT:
        raise SimulationFailure("ill-conditioned mass matrix", x, "singular")
    # dense LU solve (LAPACK gesv) without numpy's per-call wrapper cost
    _, _, xdot6, info = lapack.dgesv(E, F)
    if info != 0:
        raise SimulationFailure("singular mass matrix", x, "singular")

    omega_R = x[6]
    v_hub = aero.relative_inflow(env.v_w, x[1], x[5], x[4], p.d)
    P_A = aero.aerodynamic_power(p, surfaces["power"], v_hub, omega_R, beta)
    if T_E is None:
        T_E = aero.generator_torque_region3(p.P_0, p.eta_G, omega_R, p.stall_floor)
    wdot = aero.rotor_derivative(omega_R, P_A, p.eta_G * T_E, p)
    out = np.empty(7)
    out[:6] = xdot6
    out[6] = wdot
    if details:
        return out, bd, P_A, T_E
    return out


# ---------------------------------------------------------------------------
# static equilibrium


def static_equilibrium(p: ParameterSet, surfaces, v_w: float = 0.0, beta: float = 0.0,
                       omega_R: float | None = None, T_E: float | None = None,
                       solve_rotor: bool = False, guess=None) -> StateVector:
    """Positions at which the mainframe is at rest under steady wind.

    With ``solve_rotor`` the rotor speed is also solved for torque balance
    (``T_E`` given or the constant-power law); otherwise it is held at
    ``omega_R`` (default rated).
    """
    w0 = p.omega_0 if omega_R is None else omega_R
    env = EnvInputs(v_w)
    if guess is None:
        guess = (0.0, p.heave_offset, 0.0)

    def residual(u):
        zeta, eta, alpha = u[:3]
        wr = u[3] if solve_rotor else w0
        x = np.array([zeta, 0.0, eta, 0.0, alpha, 0.0, wr])
        _, F, _ = assemble(x, env, beta, p, surfaces)
        scale = p.total_mass * p.g
        res = [F[1] / scale, F[3] / scale, F[5] / (scale * p.heave_offset)]
        if solve_rotor:
            res.append(state_derivative(x, env, beta, p, surfaces, T_E)[6])
        return res

    u0 = list(guess) + ([w0] if solve_rotor else [])
    sol = optimize.root(residual, u0, method="hybr", options={"xtol": 1e-13})
    if not sol.success:
        raise SimulationFailure(f"equilibrium solve failed: {sol.message}", cause="equilibrium")
    zeta, eta, alpha = sol.x[:3]
    wr = sol.x[3] if solve_rotor else w0
    return StateVector(float(zeta), 0.0, float(eta), 0.0, float(alpha), 0.0, float(wr))
