"""Wind thrust on tower, nacelle and rotor, aerodynamic power and drivetrain.

Sign convention: the surge axis points upwind, so wind loads are negative.
Relative inflow at a point ``l`` metres up the tower axis is
``v_w + v_zeta + l * omega * cos(alpha)`` (the point's upwind velocity adds
to the oncoming wind).
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .params import CoefficientSurface, ParameterSet

__all__ = [
    "DegenerateInflowError",
    "RotorState",
    "WindForceBreakdown",
    "tip_speed_ratio",
    "interp_coefficient",
    "thrust_parasitic",
    "thrust_blade",
    "total_wind_force",
    "aerodynamic_power",
    "generator_torque_region3",
    "rotor_derivative",
    "relative_inflow",
    "analytic_cp",
    "analytic_ct",
    "constant_surface",
    "desk_surfaces",
    "operating_lambda",
]

# Below this inflow speed the tip-speed ratio is treated as degenerate.
_V_EPS = 1e-9


class DegenerateInflowError(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class RotorState:
    omega_R: float
    beta: float


@dataclass(frozen=True)
class WindForceBreakdown:
    Q_tower: float
    Q_nacelle: float
    Q_blade: float
    total: float
    moment: float = 0.0  # pitch moment about the reference point [N m]


def tip_speed_ratio(omega_R: float, R: float, v_blade: float) -> float:
    if v_blade == 0:
        raise DegenerateInflowError("tip-speed ratio undefined for zero inflow")
    return omega_R * R / v_blade


def _bracket(axis: tuple, x: float) -> tuple[int, float, bool]:
    n = len(axis)
    if x <= axis[0]:
        return 0, 0.0, x < axis[0]
    if x >= axis[-1]:
        return n - 2, 1.0, x > axis[-1]
    i = bisect_right(axis, x) - 1
    x0 = axis[i]
    return i, (x - x0) / (axis[i + 1] - x0), False


def interp_coefficient(surface: CoefficientSurface, lam: float, beta: float,
                       with_flag: bool = False):
    """Bilinear lookup; out-of-grid queries clamp to the boundary.

    With ``with_flag=True`` returns ``(value, clamped)``.
    """
    i, tx, cl = _bracket(surface._lam, lam)
    j, ty, cb = _bracket(surface._beta, beta)
    v = surface.values
    if tx == 0.0 and ty == 0.0:
        value = float(v[i, j])
    elif ty == 0.0:
        value = float(v[i, j] * (1.0 - tx) + v[i + 1, j] * tx)
    elif tx == 0.0:
        value = float(v[i, j] * (1.0 - ty) + v[i, j + 1] * ty)
    elif tx == 1.0 and ty == 1.0:
        value = float(v[i + 1, j + 1])
    else:
        value = float((v[i, j] * (1.0 - tx) + v[i + 1, j] * tx) * (1.0 - ty)
                      + (v[i, j + 1] * (1.0 - tx) + v[i + 1, j + 1] * tx) * ty)
    if with_flag:
        return value, (cl or cb)
    return value


def thrust_parasitic(p: ParameterSet, v_e: float, element: str) -> float:
    """Drag on the tower or nacelle, -1/2 rho C A v^2 (sign follows the inflow)."""
    if element == "tower":
        C, A = p.C_tower, p.A_tower
    elif element == "nacelle":
        C, A = p.C_nacelle, p.A_nacelle
    else:
        raise ValueError(f"unknown element {element!r}")
    return -0.5 * p.rho_air * C * A * v_e * abs(v_e)


def _lambda_or_clamp(surface, omega_R, R, v_blade):
    if abs(v_blade) < _V_EPS:
        return surface._lam[-1]
    return omega_R * R / v_blade


def thrust_blade(p: ParameterSet, surface_t: CoefficientSurface, v_blade: float,
                 omega_R: float, beta: float) -> float:
    """Rotor thrust -1/2 rho A C_t(lambda, beta) v^2."""
    if surface_t.kind != "thrust":
        raise ValueError("thrust_blade needs a thrust surface")
    if abs(v_blade) < _V_EPS:
        return 0.0
    ct = interp_coefficient(surface_t, _lambda_or_clamp(surface_t, omega_R, p.R, v_blade), beta)
    return -0.5 * p.rho_air * p.A_blade * ct * v_blade * abs(v_blade)


def aerodynamic_power(p: ParameterSet, surface_p: CoefficientSurface, v_blade: float,
                      omega_R: float, beta: float) -> float:
    """Rotor shaft power 1/2 rho A C_p(lambda, beta) v^3.

    The rotor disc area is included so the result is in watts.
    """
    if surface_p.kind != "power":
        raise ValueError("aerodynamic_power needs a power surface")
    if v_blade <= _V_EPS:
        return 0.0
    cp = interp_coefficient(surface_p, _lambda_or_clamp(surface_p, omega_R, p.R, v_blade), beta)
    return 0.5 * p.rho_air * p.A_blade * cp * v_blade**3


def relative_inflow(v_w: float, v_zeta: float, omega: float, alpha: float, arm: float) -> float:
    # Printed form is v_w + v_eta + d*omega*cos(alpha); the streamwise
    # (surge) rate is used here since the load acts along the surge axis.
    return v_w + v_zeta + arm * omega * math.cos(alpha)


def total_wind_force(p: ParameterSet, surfaces: dict, state, v_w: float,
                     beta: float) -> WindForceBreakdown:
    """Sum of tower, nacelle and rotor thrust for the current motion state.

    ``state`` is any sequence ordered (zeta, v_zeta, eta, v_eta, alpha,
    omega, omega_R).
    """
    _, v_zeta, _, _, alpha, omega, omega_R = state[:7]
    ca = math.cos(alpha)
    v_tower = v_w + v_zeta + p.d_tower * omega * ca
    v_hub = v_w + v_zeta + p.d * omega * ca
    q_t = thrust_parasitic(p, v_tower, "tower")
    q_n = thrust_parasitic(p, v_hub, "nacelle")
    q_b = thrust_blade(p, surfaces["thrust"], v_hub, omega_R, beta)
    moment = (q_t * p.d_tower + (q_n + q_b) * p.d) * ca
    return WindForceBreakdown(q_t, q_n, q_b, q_t + q_n + q_b, moment)


def generator_torque_region3(P_0: float, eta_G: float, omega_R: float,
                             floor: float = 0.1, with_flag: bool = False):
    """Constant-power generator torque P_0 / (eta_G omega_R).

    Speeds at or below ``floor`` use the torque at the floor.
    """
    clamped = omega_R <= floor
    torque = P_0 / (eta_G * (floor if clamped else omega_R))
    if with_flag:
        return torque, clamped
    return torque


def rotor_derivative(omega_R: float, P_A: float, T_E_tilde: float, p: ParameterSet) -> float:
    """One-mass drivetrain: (P_A / omega_R - T_E_tilde) / (J_R + eta_G^2 J_G).

    ``T_E_tilde`` is the generator reaction torque referred to the rotor
    shaft.
    """
    w = omega_R if omega_R > p.stall_floor else p.stall_floor
    return (P_A / w - T_E_tilde) / p.J_R_tilde


# ---------------------------------------------------------------------------
# analytic desk surfaces
#
# C_p uses the common exponential fit
#   c1 (c2/li - c3 beta - c4) exp(-c5/li) + c6 lambda,
#   1/li = 1/(lambda + 0.08 beta) - 0.035/(beta^3 + 1),   beta in degrees,
# with constants refitted so that the fixed-torque 11 m/s operating point
# settles near 12.1 rpm and 18 deg at 20 m/s balances rated torque.
# C_t = (1 - exp(-CT_RATE lambda)) exp(-CT_PITCH beta), beta in degrees.  The
# lambda dependence keeps lambda dC_t/dlambda < C_t, so rotor thrust always
# grows with relative wind at fixed pitch and speed (no negative damping).
# These are synthetic stand-ins for AeroDyn tables.

CP_CONSTANTS = (0.5734104306, 108.0881048366, 0.5434951355, 5.2088364636,
                18.6819460653, -0.0009018550)
CT_RATE = 0.2035988358
CT_PITCH = 0.0935388559

# Paper operating points on the thrust surface at 12.1 rpm.
CT_OPERATING_POINTS = ((11.0, 0.0, 0.7718), (20.0, 18.0, 0.1033))


def analytic_cp(lam, beta):
    """Analytic power coefficient; ``beta`` in radians; clipped to [0, 0.593]."""
    c1, c2, c3, c4, c5, c6 = CP_CONSTANTS
    lam = np.asarray(lam, dtype=float)
    b = np.rad2deg(np.asarray(beta, dtype=float))
    inv_li = 1.0 / (lam + 0.08 * b) - 0.035 / (b**3 + 1.0)
    cp = c1 * (c2 * inv_li - c3 * b - c4) * np.exp(-c5 * inv_li) + c6 * lam
    return np.clip(cp, 0.0, 0.593)


def analytic_ct(lam, beta):
    """Analytic thrust coefficient; ``beta`` in radians."""
    lam = np.asarray(lam, dtype=float)
    b = np.rad2deg(np.asarray(beta, dtype=float))
    return (1.0 - np.exp(-CT_RATE * np.maximum(lam, 0.0))) * np.exp(-CT_PITCH * b)


def constant_surface(value: float, kind: str, lam=(0.0, 30.0), beta=(0.0, math.pi / 2)):
    lam = np.asarray(lam, dtype=float)
    beta = np.asarray(beta, dtype=float)
    return CoefficientSurface(lam, beta, np.full((lam.size, beta.size), value), kind)


def operating_lambda(p: ParameterSet, wind_speed: float) -> float:
    """Tip-speed ratio at rated rotor speed for a given wind speed."""
    return p.omega_0 * p.R / wind_speed


def desk_surfaces(p: ParameterSet, lam_step: float = 0.25, lam_max: float = 20.0,
                  beta_step_deg: float = 1.0) -> dict[str, CoefficientSurface]:
    """Tabulate the analytic surfaces on a grid that contains the rated
    operating points, with the thrust nodes set to their reference values."""
    ops = [(operating_lambda(p, v), math.radians(b), ct) for v, b, ct in CT_OPERATING_POINTS]
    lam = np.arange(lam_step, lam_max + 0.5 * lam_step, lam_step)
    lam = np.unique(np.concatenate([lam, [o[0] for o in ops]]))
    beta = np.deg2rad(np.arange(0.0, 90.0 + 0.5 * beta_step_deg, beta_step_deg))
    L, B = np.meshgrid(lam, beta, indexing="ij")
    cp = np.round(analytic_cp(L, B), 6)
    ct = np.round(analytic_ct(L, B), 6)
    for lam_op, beta_op, ct_op in ops:
        i = int(np.searchsorted(lam, lam_op))
        j = int(np.argmin(np.abs(beta - beta_op)))
        ct[i, j] = ct_op
        cp[i, j] = float(analytic_cp(lam_op, beta_op))
    return {"power": CoefficientSurface(lam, beta, cp, "power"),
            "thrust": CoefficientSurface(lam, beta, ct, "thrust")}
