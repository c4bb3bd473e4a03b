import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fowtlab import params
from fowtlab.params import (ParameterError, SurfaceError, load_parameters, load_surface,
                            serialize_parameters, serialize_surface, validate)
from fowtlab import aero


def _shipped_text():
    return params._read_data("nrel5mw_tlp.cfg")


def _without(text, key):
    return "\n".join(l for l in text.splitlines() if not l.strip().startswith(f"{key} ")
                     and not l.strip().startswith(f"{key}="))


def test_missing_key_reported():
    with pytest.raises(ParameterError, match="missing key: g"):
        load_parameters(_without(_shipped_text(), "g"))


def test_negative_density_rejected():
    with pytest.raises(ParameterError, match="rho_water must be positive"):
        load_parameters(_shipped_text(), {"rho_water": "-1"})


def test_rated_speed_converted_from_rpm(p):
    assert p.omega_0 == pytest.approx(12.1 * 2 * math.pi / 60, rel=1e-15)
    assert p.omega_0 == pytest.approx(1.26711, abs=5e-6)


def test_unknown_key_rejected():
    with pytest.raises(ParameterError, match="unknown key"):
        load_parameters(_shipped_text() + "\nbogus = 1\n")
    with pytest.raises(ParameterError, match="unknown key"):
        load_parameters(_shipped_text(), {"bogus": "1"})


def test_duplicate_and_malformed_lines():
    with pytest.raises(ParameterError, match="duplicate"):
        load_parameters(_shipped_text() + "\ng = 9.81\n")
    with pytest.raises(ParameterError, match="expected 'key = value'"):
        load_parameters(_shipped_text() + "\nnonsense\n")


def test_serialization_round_trip_is_exact(p):
    again = load_parameters(serialize_parameters(p))
    assert again == p


def test_validate_clean_and_violations(p):
    assert validate(p) == []
    assert validate(p.with_updates(J_TOT=0.0)) == ["J_TOT must be positive"]
    diag = validate(p.with_updates(pitch_range=(0.5, 0.1)))
    assert len(diag) == 1 and "pitch_range" in diag[0]


def test_constant_surface_and_bounds():
    s = load_surface("lambda\\beta[rad],0,1\n0,0.5,0.5\n1,0.5,0.5\n", "power")
    for lam in (0.0, 0.3, 1.0):
        for b in (0.0, 0.7, 1.0):
            assert aero.interp_coefficient(s, lam, b) == 0.5
    with pytest.raises(SurfaceError):
        load_surface("lambda\\beta[rad],0,1\n0,0.5,3.0\n1,0.5,0.5\n", "thrust")
    with pytest.raises(SurfaceError):
        load_surface("lambda\\beta[rad],0,1\n0,0.7,0.5\n1,0.5,0.5\n", "power")  # above Betz


def test_surface_structure_errors():
    with pytest.raises(SurfaceError, match="ragged"):
        load_surface("x,0,1\n0,0.5\n1,0.5,0.5\n", "power")
    with pytest.raises(SurfaceError, match="increasing"):
        load_surface("x,0,1\n1,0.5,0.5\n0,0.5,0.5\n", "power")
    with pytest.raises(SurfaceError, match="kind"):
        load_surface("x,0,1\n0,0.5,0.5\n1,0.5,0.5\n", "lift")


def test_operating_point_nodes_round_trip(p, surfaces):
    ct = surfaces["thrust"]
    for v, b_deg, value in aero.CT_OPERATING_POINTS:
        lam = aero.operating_lambda(p, v)
        i = int(np.argmin(np.abs(ct.lambda_grid - lam)))
        j = int(np.argmin(np.abs(ct.beta_grid - math.radians(b_deg))))
        assert ct.values[i, j] == value
        assert aero.interp_coefficient(ct, ct.lambda_grid[i], ct.beta_grid[j]) == value
    again = load_surface(serialize_surface(ct, degrees=False), "thrust")
    assert again == ct


@given(st.lists(st.floats(0, 0.59, allow_nan=False), min_size=4, max_size=4))
def test_surface_text_round_trip(vals):
    s = params.CoefficientSurface(np.array([1.0, 2.0]), np.array([0.0, 0.25]),
                                  np.array(vals).reshape(2, 2), "power")
    assert load_surface(serialize_surface(s, degrees=False), "power") == s
