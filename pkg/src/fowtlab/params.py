"""Turbine, platform and controller constants, plus coefficient surfaces.

Parameter files are flat ``key = value [unit]`` text.  Angles and angular
rates may carry a unit token (``deg``, ``rad``, ``rpm``, ``deg/s``,
``rad/s``); everything is stored internally in SI with radians.  Vector
values are comma separated.  ``#`` starts a comment.

Surface files are delimited grids: the first row holds the pitch axis (the
corner cell names the pitch unit, e.g. ``lambda\\beta[deg]``), the first
column holds the tip-speed-ratio axis.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources

import numpy as np

__all__ = [
    "ParameterError",
    "SurfaceError",
    "TieRod",
    "ParameterSet",
    "CoefficientSurface",
    "load_parameters",
    "serialize_parameters",
    "load_surface",
    "serialize_surface",
    "validate",
    "default_parameters",
    "default_surfaces",
    "BETZ_LIMIT",
]

BETZ_LIMIT = 16.0 / 27.0
_SURFACE_BOUNDS = {"power": (0.0, 0.593), "thrust": (0.0, 2.0)}

_UNITS = {
    "rad": 1.0,
    "deg": math.pi / 180.0,
    "rad/s": 1.0,
    "deg/s": math.pi / 180.0,
    "rpm": 2.0 * math.pi / 60.0,
}


class ParameterError(ValueError):
    """Raised for missing, malformed or invalid parameter entries."""


class SurfaceError(ValueError):
    """Raised for malformed coefficient surface tables."""


@dataclass(frozen=True)
class TieRod:
    """One taut tendon.

    ``attach`` is (s, l) in the body frame: s along the platform's
    horizontal axis (upwind positive), l along the tower axis (up
    positive) measured from the reference point.  ``anchor`` is (x, z) in
    the world frame with z pointing down from the still-water level.
    """

    attach: tuple[float, float]
    anchor: tuple[float, float]
    L0: float
    k: float
    lambda_l: float
    r_l: float


# Keys that are plain floats.  Order here is the serialization order.
_FLOAT_KEYS = (
    # masses [kg], inertia [kg m^2]
    "M_X", "M_Y", "M_d", "M_n", "M_p", "M_s", "J_TOT",
    # lever arms and geometry [m], areas [m^2], volume [m^3]
    "d_nv", "d_nh", "d_pv", "d_ph", "d_G", "d", "d_tower", "R",
    "A_blade", "A_tower", "A_nacelle", "V_g",
    # environment
    "rho_air", "rho_water", "g",
    # drag coefficients
    "C_tower", "C_nacelle",
    # hydrodynamics of the submerged column
    "platform_diameter", "draft", "C_m", "C_d", "C_d_heave",
    "B_surge", "B_heave", "B_pitch",
    # drivetrain
    "J_R", "J_G", "eta_G", "P_0", "T_E_rated",
    # controller
    "omega_0", "omega_phi", "zeta_phi", "beta_k", "a_p", "a_i", "K_d",
    "pitch_sensitivity", "pitch_rate_limit",
    "heave_offset", "stall_floor", "derivative_filter_tau",
)
_INT_KEYS = ("n_strips",)
_STR_KEYS = ("integral_mode",)
_BOOL_KEYS = ("anti_windup",)
_OPTIONAL = {
    "stall_floor": 0.1,
    "derivative_filter_tau": 0.0,
    "n_strips": 12,
    "integral_mode": "average",
    "anti_windup": True,
    "heave_offset": 37.55,
}
_ANGLE_KEYS = {"omega_0": "rad/s", "omega_phi": "rad/s", "beta_k": "rad",
               "pitch_rate_limit": "rad/s", "pitch_range": "rad"}
_LINE_KEYS = ("attach", "anchor", "L0", "k", "lambda_l", "r_l")

# Quantities that must be strictly positive (signed lever arms excluded).
_POSITIVE = (
    "M_X", "M_Y", "M_n", "M_p", "M_s", "J_TOT", "d", "R", "A_blade",
    "A_tower", "A_nacelle", "V_g", "rho_air", "rho_water", "g",
    "platform_diameter", "draft", "J_R", "J_G", "eta_G", "P_0", "T_E_rated",
    "omega_0", "omega_phi", "zeta_phi", "beta_k", "pitch_sensitivity",
    "pitch_rate_limit", "stall_floor",
)
_NONNEGATIVE = ("C_tower", "C_nacelle", "C_m", "C_d", "C_d_heave", "B_surge",
                "B_heave", "B_pitch", "a_p", "a_i", "K_d",
                "derivative_filter_tau")


@dataclass(frozen=True)
class ParameterSet:
    M_X: float
    M_Y: float
    M_d: float
    M_n: float
    M_p: float
    M_s: float
    J_TOT: float
    d_nv: float
    d_nh: float
    d_pv: float
    d_ph: float
    d_G: float
    d: float
    d_tower: float
    R: float
    A_blade: float
    A_tower: float
    A_nacelle: float
    V_g: float
    rho_air: float
    rho_water: float
    g: float
    C_tower: float
    C_nacelle: float
    platform_diameter: float
    draft: float
    C_m: float
    C_d: float
    C_d_heave: float
    B_surge: float
    B_heave: float
    B_pitch: float
    J_R: float
    J_G: float
    eta_G: float
    P_0: float
    T_E_rated: float
    omega_0: float
    omega_phi: float
    zeta_phi: float
    beta_k: float
    a_p: float
    a_i: float
    K_d: float
    pitch_sensitivity: float
    pitch_rate_limit: float
    pitch_range: tuple[float, float]
    lines: tuple[TieRod, ...]
    heave_offset: float = 37.55
    stall_floor: float = 0.1
    derivative_filter_tau: float = 0.0
    n_strips: int = 12
    integral_mode: str = "average"
    anti_windup: bool = True

    @property
    def J_R_tilde(self) -> float:
        """Drivetrain inertia seen by the rotor, J_R + eta_G^2 J_G."""
        return self.J_R + self.eta_G**2 * self.J_G

    @property
    def total_mass(self) -> float:
        return self.M_n + self.M_p + self.M_s

    def with_updates(self, **changes) -> "ParameterSet":
        return replace(self, **changes)


# ---------------------------------------------------------------------------
# parameter files


def _parse_lines(text: str) -> dict[str, tuple[str, int]]:
    entries: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ParameterError(f"line {lineno}: empty key")
        if key in entries:
            raise ParameterError(f"duplicate key: {key}")
        entries[key] = (value, lineno)
    return entries


def _numbers(key: str, value: str) -> tuple[float, ...]:
    """Parse 'a, b [unit]' into SI floats."""
    tokens = value.replace(",", " ").split()
    scale = 1.0
    if tokens and tokens[-1] in _UNITS:
        scale = _UNITS[tokens.pop()]
    if not tokens:
        raise ParameterError(f"{key}: no value")
    try:
        vals = tuple(float(t) * scale for t in tokens)
    except ValueError:
        raise ParameterError(f"{key}: cannot parse {value!r}") from None
    for v in vals:
        if not math.isfinite(v):
            raise ParameterError(f"{key} must be finite")
    return vals


def _scalar(key: str, value: str) -> float:
    vals = _numbers(key, value)
    if len(vals) != 1:
        raise ParameterError(f"{key}: expected one value, got {len(vals)}")
    return vals[0]


def load_parameters(source: str, overrides: dict[str, str] | None = None) -> ParameterSet:
    """Parse parameter text into a validated :class:`ParameterSet`.

    ``overrides`` maps keys to replacement value strings (same syntax as
    the file); unknown override keys are rejected.
    """
    entries = _parse_lines(source)
    raw = {k: v for k, (v, _) in entries.items()}
    if overrides:
        for key, value in overrides.items():
            if not _is_known_key(key):
                raise ParameterError(f"unknown key: {key}")
            raw[key] = str(value)

    unknown = [k for k in raw if not _is_known_key(k)]
    if unknown:
        raise ParameterError(f"unknown key: {unknown[0]}")

    kwargs: dict = {}
    for key in _FLOAT_KEYS:
        if key in raw:
            kwargs[key] = _scalar(key, raw[key])
        elif key in _OPTIONAL:
            kwargs[key] = _OPTIONAL[key]
        else:
            raise ParameterError(f"missing key: {key}")
    for key in _INT_KEYS:
        kwargs[key] = int(_scalar(key, raw[key])) if key in raw else _OPTIONAL[key]
    for key in _STR_KEYS:
        kwargs[key] = raw.get(key, _OPTIONAL[key]).strip()
    for key in _BOOL_KEYS:
        if key in raw:
            text = raw[key].strip().lower()
            if text not in ("true", "false", "1", "0", "yes", "no"):
                raise ParameterError(f"{key}: expected a boolean, got {raw[key]!r}")
            kwargs[key] = text in ("true", "1", "yes")
        else:
            kwargs[key] = _OPTIONAL[key]

    if "pitch_range" not in raw:
        raise ParameterError("missing key: pitch_range")
    pr = _numbers("pitch_range", raw["pitch_range"])
    if len(pr) != 2:
        raise ParameterError("pitch_range: expected two values (lower, upper)")
    kwargs["pitch_range"] = pr

    if "n_lines" not in raw:
        raise ParameterError("missing key: n_lines")
    n_lines = int(_scalar("n_lines", raw["n_lines"]))
    lines = []
    for i in range(1, n_lines + 1):
        vals = {}
        for lk in _LINE_KEYS:
            key = f"line{i}.{lk}"
            if key not in raw:
                raise ParameterError(f"missing key: {key}")
            if lk in ("attach", "anchor"):
                v = _numbers(key, raw[key])
                if len(v) != 2:
                    raise ParameterError(f"{key}: expected two values")
                vals[lk] = v
            else:
                vals[lk] = _scalar(key, raw[key])
        lines.append(TieRod(**vals))
    kwargs["lines"] = tuple(lines)

    p = ParameterSet(**kwargs)
    problems = validate(p)
    if problems:
        raise ParameterError(problems[0])
    return p


def _is_known_key(key: str) -> bool:
    if key in _FLOAT_KEYS or key in _INT_KEYS or key in _STR_KEYS or key in _BOOL_KEYS:
        return True
    if key in ("pitch_range", "n_lines"):
        return True
    if key.startswith("line") and "." in key:
        head, tail = key.split(".", 1)
        return head[4:].isdigit() and tail in _LINE_KEYS
    return False


def serialize_parameters(p: ParameterSet) -> str:
    """Render ``p`` in the parameter file format (SI, radians, full precision)."""
    out = io.StringIO()
    for key in _FLOAT_KEYS:
        unit = _ANGLE_KEYS.get(key)
        out.write(f"{key} = {getattr(p, key)!r}{' ' + unit if unit else ''}\n")
    for key in _INT_KEYS + _STR_KEYS:
        out.write(f"{key} = {getattr(p, key)}\n")
    for key in _BOOL_KEYS:
        out.write(f"{key} = {str(getattr(p, key)).lower()}\n")
    out.write(f"pitch_range = {p.pitch_range[0]!r}, {p.pitch_range[1]!r} rad\n")
    out.write(f"n_lines = {len(p.lines)}\n")
    for i, line in enumerate(p.lines, start=1):
        out.write(f"line{i}.attach = {line.attach[0]!r}, {line.attach[1]!r}\n")
        out.write(f"line{i}.anchor = {line.anchor[0]!r}, {line.anchor[1]!r}\n")
        for lk in ("L0", "k", "lambda_l", "r_l"):
            out.write(f"line{i}.{lk} = {getattr(line, lk)!r}\n")
    return out.getvalue()


def validate(p: ParameterSet) -> list[str]:
    """Return one diagnostic string per violated invariant (empty if valid)."""
    problems = []
    for f in fields(p):
        v = getattr(p, f.name)
        if isinstance(v, float) and not math.isfinite(v):
            problems.append(f"{f.name} must be finite")
    for key in _POSITIVE:
        v = getattr(p, key)
        if math.isfinite(v) and not v > 0:
            problems.append(f"{key} must be positive")
    for key in _NONNEGATIVE:
        v = getattr(p, key)
        if math.isfinite(v) and v < 0:
            problems.append(f"{key} must be nonnegative")
    lo, hi = p.pitch_range
    if not (0.0 <= lo < hi <= math.pi / 2 + 1e-12):
        problems.append("pitch_range must satisfy 0 <= lower < upper <= pi/2")
    if p.n_strips < 1:
        problems.append("n_strips must be at least 1")
    if p.integral_mode not in ("average", "plain"):
        problems.append("integral_mode must be 'average' or 'plain'")
    if not p.lines:
        problems.append("at least one tie rod is required")
    for i, line in enumerate(p.lines, start=1):
        for name in ("L0", "k", "lambda_l", "r_l"):
            v = getattr(line, name)
            if not (math.isfinite(v) and v > 0):
                problems.append(f"line{i}.{name} must be positive")
    return problems


# ---------------------------------------------------------------------------
# coefficient surfaces


@dataclass(frozen=True)
class CoefficientSurface:
    """Gridded C_p or C_t over tip-speed ratio (rows) and pitch (columns, rad)."""

    lambda_grid: np.ndarray
    beta_grid: np.ndarray
    values: np.ndarray
    kind: str
    _lam: tuple = field(init=False, repr=False, compare=False)
    _beta: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lam = np.array(self.lambda_grid, dtype=float)
        beta = np.array(self.beta_grid, dtype=float)
        vals = np.array(self.values, dtype=float)
        for a in (lam, beta, vals):
            a.setflags(write=False)
        object.__setattr__(self, "lambda_grid", lam)
        object.__setattr__(self, "beta_grid", beta)
        object.__setattr__(self, "values", vals)
        _check_surface(lam, beta, vals, self.kind)
        # plain lists make the scalar lookup in interp_coefficient cheap
        object.__setattr__(self, "_lam", tuple(lam.tolist()))
        object.__setattr__(self, "_beta", tuple(beta.tolist()))

    def __eq__(self, other):
        if not isinstance(other, CoefficientSurface):
            return NotImplemented
        return (self.kind == other.kind
                and np.array_equal(self.lambda_grid, other.lambda_grid)
                and np.array_equal(self.beta_grid, other.beta_grid)
                and np.array_equal(self.values, other.values))

    __hash__ = None


def _check_surface(lam, beta, vals, kind):
    if kind not in _SURFACE_BOUNDS:
        raise SurfaceError(f"unknown surface kind {kind!r} (expected power or thrust)")
    if lam.ndim != 1 or beta.ndim != 1 or lam.size < 2 or beta.size < 2:
        raise SurfaceError("surface axes need at least two nodes each")
    if vals.shape != (lam.size, beta.size):
        raise SurfaceError(f"value grid has shape {vals.shape}, expected {(lam.size, beta.size)}")
    if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(beta))):
        raise SurfaceError("surface axes must be finite")
    if np.any(np.diff(lam) <= 0):
        raise SurfaceError("lambda axis must be strictly increasing")
    if np.any(np.diff(beta) <= 0):
        raise SurfaceError("beta axis must be strictly increasing")
    if not np.all(np.isfinite(vals)):
        raise SurfaceError("surface values must be finite")
    lo, hi = _SURFACE_BOUNDS[kind]
    if vals.min() < lo or vals.max() > hi:
        raise SurfaceError(f"{kind} coefficient outside [{lo}, {hi}]: "
                           f"range [{vals.min():g}, {vals.max():g}]")


def load_surface(source: str, kind: str) -> CoefficientSurface:
    """Parse a delimited grid (comma, semicolon, tab or whitespace)."""
    rows = []
    for raw in source.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in (",", ";", "\t"):
            line = line.replace(sep, " ")
        rows.append(line.split())
    if len(rows) < 3:
        raise SurfaceError("surface needs a header row and at least two data rows")
    corner, *beta_tokens = rows[0]
    scale = math.pi / 180.0 if "deg" in corner.lower() else 1.0
    try:
        beta = np.array([float(t) for t in beta_tokens]) * scale
        lam, body = [], []
        for i, row in enumerate(rows[1:], start=2):
            if len(row) != len(beta_tokens) + 1:
                raise SurfaceError(f"ragged row {i}: {len(row) - 1} values, "
                                   f"expected {len(beta_tokens)}")
            lam.append(float(row[0]))
            body.append([float(t) for t in row[1:]])
    except ValueError as exc:
        raise SurfaceError(f"non-numeric entry: {exc}") from None
    return CoefficientSurface(np.array(lam), beta, np.array(body), kind)


def serialize_surface(surface: CoefficientSurface, degrees: bool = True) -> str:
    out = io.StringIO()
    corner = "lambda\\beta[deg]" if degrees else "lambda\\beta[rad]"
    beta = np.rad2deg(surface.beta_grid) if degrees else surface.beta_grid
    out.write(",".join([corner] + [repr(float(b)) for b in beta]) + "\n")
    for lam, row in zip(surface.lambda_grid, surface.values):
        out.write(",".join([repr(float(lam))] + [repr(float(v)) for v in row]) + "\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# shipped defaults


def _read_data(name: str) -> str:
    return resources.files("fowtlab").joinpath("data", name).read_text()


def default_parameters() -> ParameterSet:
    """The shipped 5-MW TLP desk configuration."""
    return load_parameters(_read_data("nrel5mw_tlp.cfg"))


def default_surfaces() -> dict[str, CoefficientSurface]:
    """Shipped desk C_p / C_t tables, keyed ``power`` and ``thrust``."""
    return {
        "power": load_surface(_read_data("cp_surface.csv"), "power"),
        "thrust": load_surface(_read_data("ct_surface.csv"), "thrust"),
    }
