"""Compiled derivative for the default force models.

Mirrors :func:`fowtlab.dynamics.state_derivative` operation by operation so
results agree with the reference to rounding; ``simulate`` uses it when no
custom force providers are plugged in.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .dynamics import COND_LIMIT, _gauss

# indices into the packed constant vector
(_MX, _MY, _MD, _MN, _MP, _MS, _JT, _DNV, _DNH, _DPV, _DPH, _DG, _D, _DT, _R,
 _AB, _AT, _AN, _VG, _RA, _RW, _G, _CT, _CN, _DIA, _DRAFT, _CM, _CD, _CDH,
 _BS, _BH, _BP, _JRT, _ETA, _P0, _FLOOR, _HOFF) = range(37)

OK, NONFINITE, CAPSIZE, SINGULAR = 0, 1, 2, 3
STATUS_CAUSE = {NONFINITE: "nonfinite", CAPSIZE: "capsize", SINGULAR: "singular"}


def pack_parameters(p) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    c = np.array([
        p.M_X, p.M_Y, p.M_d, p.M_n, p.M_p, p.M_s, p.J_TOT, p.d_nv, p.d_nh, p.d_pv,
        p.d_ph, p.d_G, p.d, p.d_tower, p.R, p.A_blade, p.A_tower, p.A_nacelle, p.V_g,
        p.rho_air, p.rho_water, p.g, p.C_tower, p.C_nacelle, p.platform_diameter,
        p.draft, p.C_m, p.C_d, p.C_d_heave, p.B_surge, p.B_heave, p.B_pitch,
        p.J_R_tilde, p.eta_G, p.P_0, p.stall_floor, p.heave_offset,
    ], dtype=float)
    lines = np.array([[ln.attach[0], ln.attach[1], ln.anchor[0], ln.anchor[1], ln.L0, ln.k,
                       ln.lambda_l * p.g - p.rho_water * p.g * math.pi * ln.r_l**2]
                      for ln in p.lines], dtype=float)
    nodes, weights = _gauss(p.n_strips)
    return c, lines, np.ascontiguousarray(nodes), np.ascontiguousarray(weights)


def pack_surface(s):
    return (np.ascontiguousarray(s.lambda_grid), np.ascontiguousarray(s.beta_grid),
            np.ascontiguousarray(s.values))


def pack_waves(field):
    if field is None or field.n_components == 0:
        z = np.zeros(0)
        return z, z, z, z
    return (np.ascontiguousarray(field.amplitude), np.ascontiguousarray(field.omega),
            np.ascontiguousarray(field.k), np.ascontiguousarray(field.phase))


@njit(cache=True)
def _bracket(axis, x):
    n = axis.size
    if x <= axis[0]:
        return 0, 0.0
    if x >= axis[n - 1]:
        return n - 2, 1.0
    lo, hi = 0, n - 1
    while hi - lo > 1:          # largest i with axis[i] <= x
        mid = (lo + hi) // 2
        if axis[mid] <= x:
            lo = mid
        else:
            hi = mid
    x0 = axis[lo]
    return lo, (x - x0) / (axis[lo + 1] - x0)


@njit(cache=True)
def _interp(lam_g, beta_g, v, lam, beta):
    i, tx = _bracket(lam_g, lam)
    j, ty = _bracket(beta_g, beta)
    if tx == 0.0 and ty == 0.0:
        return v[i, j]
    if ty == 0.0:
        return v[i, j] * (1.0 - tx) + v[i + 1, j] * tx
    if tx == 0.0:
        return v[i, j] * (1.0 - ty) + v[i, j + 1] * ty
    if tx == 1.0 and ty == 1.0:
        return v[i + 1, j + 1]
    return ((v[i, j] * (1.0 - tx) + v[i + 1, j] * tx) * (1.0 - ty)
            + (v[i, j + 1] * (1.0 - tx) + v[i + 1, j + 1] * tx) * ty)


@njit(cache=True)
def derivative(x, v_w, t, beta, T_E, c, lines, gn, gw,
               cpl, cpb, cpv, ctl, ctb, ctv, wa, wom, wk, wph, out, extra):
    """Fill ``out`` (7) and ``extra`` = (P_A, T_E, wave_zeta, wave_eta,
    wave_alpha); ``T_E`` NaN selects the constant-power law.  Returns a
    status code."""
    for i in range(7):
        if not math.isfinite(x[i]):
            return NONFINITE
    zeta, vz, eta, ve, alpha, om, wr = x[0], x[1], x[2], x[3], x[4], x[5], x[6]
    if abs(alpha) >= math.pi / 2:
        return CAPSIZE
    ca = math.cos(alpha)
    sa = math.sin(alpha)
    g = c[_G]

    # weight and buoyancy
    qz = 0.0
    qe = (c[_MN] + c[_MP] + c[_MS]) * g
    qa = ((c[_MN] * c[_DNV] + c[_MP] * c[_DPV]) * g * sa
          + (c[_MN] * c[_DNH] + c[_MP] * c[_DPH]) * g * ca)
    b = c[_RW] * c[_VG] * g
    qe += -b
    qa += b * c[_DG] * sa

    # wind
    v_tower = v_w + vz + c[_DT] * om * ca
    v_hub = v_w + vz + c[_D] * om * ca
    q_t = -0.5 * c[_RA] * c[_CT] * c[_AT] * v_tower * abs(v_tower)
    q_n = -0.5 * c[_RA] * c[_CN] * c[_AN] * v_hub * abs(v_hub)
    if abs(v_hub) < 1e-9:
        q_b = 0.0
    else:
        lam = wr * c[_R] / v_hub
        ct = _interp(ctl, ctb, ctv, lam, beta)
        q_b = -0.5 * c[_RA] * c[_AB] * ct * v_hub * abs(v_hub)
    qz += q_t + q_n + q_b
    qa += (q_t * c[_DT] + (q_n + q_b) * c[_D]) * ca

    # tendons
    for r in range(lines.shape[0]):
        s_, l_ = lines[r, 0], lines[r, 1]
        xa = zeta + l_ * sa + s_ * ca
        za = eta - l_ * ca + s_ * sa
        dx = lines[r, 2] - xa
        dz = lines[r, 3] - za
        L = math.hypot(dx, dz)
        T = lines[r, 5] * (L - lines[r, 4])
        if T < 0.0:
            T = 0.0
        fx = T * dx / L
        fz = T * dz / L + lines[r, 6] * lines[r, 4]
        qz += fx
        qe += fz
        qa += fx * (l_ * ca - s_ * sa) + fz * (l_ * sa + s_ * ca)

    # submerged column
    l_keel = c[_HOFF] - c[_DRAFT]
    l_wl = eta / ca
    D = c[_DIA]
    area = 0.25 * math.pi * D * D
    rho = c[_RW]
    half = 0.5 * (l_wl - l_keel)
    zk = eta - l_keel * ca
    body_wk = ve + l_keel * om * sa
    n = gn.size
    nw = wa.size
    c_in = rho * c[_CM] * area
    c_dr = 0.5 * rho * c[_CD] * D
    fx_wave = 0.0
    ma_wave = 0.0
    fx_drag = 0.0
    ma_drag = 0.0
    keel_w = 0.0
    keel_p = 0.0
    if nw > 0:
        x0 = -(zeta + l_wl * sa)
        cth = np.empty(nw)
        sth = np.empty(nw)
        for j in range(nw):
            th = wk[j] * x0 - wom[j] * t + wph[j]
            cth[j] = math.cos(th)
            sth[j] = math.sin(th)
    for i in range(n + 1):
        if i < n:
            li = l_keel + half * (gn[i] + 1.0)
            zup = li * ca - eta
        else:
            li = l_keel
            zup = -zk
        if zup > 0.0:
            zup = 0.0
        u = 0.0
        w = 0.0
        ax = 0.0
        head = 0.0
        for j in range(nw):
            dec = math.exp(zup * wk[j])
            aw = wa[j] * wom[j]
            cc = cth[j] * dec
            ss = sth[j] * dec
            u += cc * aw
            w += ss * aw
            ax += ss * aw * wom[j]
            head += cc * wa[j]
        if i < n:
            wi = gw[i] * half
            rel = -(vz + li * om * ca) - u
            f_in = wi * c_in * (-ax)
            fx_wave += f_in
            ma_wave += f_in * li * ca
            f_dr = c_dr * abs(rel) * rel
            fx_drag += wi * f_dr
            ma_drag += wi * li * ca * f_dr
        else:
            keel_w = -w
            keel_p = rho * g * head
    fz_wave = -keel_p * area
    wrel = keel_w - body_wk
    fz_drag = 0.5 * rho * c[_CDH] * area * abs(wrel) * wrel
    wz = fx_wave
    we = fz_wave
    wal = ma_wave + fz_wave * l_keel * sa
    qz += wz + fx_drag - c[_BS] * vz
    qe += we + fz_drag - c[_BH] * ve
    qa += wal + ma_drag + fz_drag * l_keel * sa - c[_BP] * om

    # mass matrix and solve
    E = np.eye(6)
    E[1, 1] = c[_MX]
    E[3, 3] = c[_MY]
    E[5, 5] = c[_JT]
    E[1, 5] = c[_MD] * ca
    E[5, 1] = E[1, 5]
    E[3, 5] = c[_MD] * sa
    E[5, 3] = E[3, 5]
    B00, B11, B22, B02, B12 = E[1, 1], E[3, 3], E[5, 5], E[1, 5], E[3, 5]
    det = B00 * (B11 * B22 - B12 * B12) - B02 * B02 * B11
    fro = math.sqrt(B00 * B00 + B11 * B11 + B22 * B22 + 2.0 * (B02 * B02 + B12 * B12))
    ok = False
    if det > 0.0 and fro > 0.0:
        lb = det / (fro * fro)
        ok = max(fro, 1.0) / min(lb, 1.0) <= COND_LIMIT
    if not ok and np.linalg.cond(E) > COND_LIMIT:
        return SINGULAR
    cent = c[_MD] * om * om
    F = np.empty(6)
    F[0] = vz
    F[1] = qz + cent * sa
    F[2] = ve
    F[3] = qe - cent * ca
    F[4] = om
    F[5] = qa
    sol = np.linalg.solve(E, F)
    for i in range(6):
        out[i] = sol[i]

    # rotor
    if v_hub <= 1e-9:
        P_A = 0.0
    else:
        if abs(v_hub) < 1e-9:
            lam = cpl[cpl.size - 1]
        else:
            lam = wr * c[_R] / v_hub
        cp = _interp(cpl, cpb, cpv, lam, beta)
        P_A = 0.5 * c[_RA] * c[_AB] * cp * v_hub ** 3
    if math.isnan(T_E):
        w_eff = c[_FLOOR] if wr <= c[_FLOOR] else wr
        T_E = c[_P0] / (c[_ETA] * w_eff)
    w_div = wr if wr > c[_FLOOR] else c[_FLOOR]
    out[6] = (P_A / w_div - c[_ETA] * T_E) / c[_JRT]
    extra[0] = P_A
    extra[1] = T_E
    extra[2] = wz
    extra[3] = we
    extra[4] = wal
    return OK
