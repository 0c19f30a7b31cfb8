"""Pure-Python simulation kernel (reference backend).

Implements exactly the same flat-array interface as the compiled extension
`gfmlab._core`; the two are interchangeable and parity-tested.  This version
favors clarity over speed and is the ground truth for the Cython port.

Status codes returned by integrate_segment:
    0 ok, 1 divergence, 2 step-size underflow (stiffness), 3 voltage collapse.
"""

from __future__ import annotations

import cmath

import numpy as np

V_COLLAPSE = 0.05

# per-DER packed parameter row (see _kernel.pack_der_params):
# 0..14 : r_f l_f c_f r_c l_c x_virt v_nom v_dc J D psi eta k_iv omega_n p_nom
# GFM   : 15..34 = k_hat row-major (2x10)
# droop : 15..22 = m_p_rad n_q omega_c k_pv k_iv k_pc k_ic k_f

# Dormand-Prince 5(4) tableau
_C = (0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0)
_A = (
    (),
    (1.0 / 5.0,),
    (3.0 / 40.0, 9.0 / 40.0),
    (44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0),
    (19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0),
    (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0),
    (35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0),
)
_B5 = (35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0)
_B4 = (
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
)


def rhs(
    t,
    y,
    dy,
    line_r,
    line_l,
    line_from,
    line_to,
    line_active,
    node_g,
    node_c,
    zip_z,
    zip_i,
    zip_s,
    off_src,
    off_nodes,
    src_bus,
    src_r,
    src_l,
    src_v,
    src_omega,
    src_active,
    der_kind,
    der_bus,
    der_off,
    der_has_ib,
    der_par,
):
    """Full-system derivative; returns 0 or 3 (voltage collapse)."""
    m = len(line_r)
    n = len(node_g)
    inj = [0j] * n

    # node voltages
    v = [complex(y[off_nodes + 2 * k], y[off_nodes + 2 * k + 1]) for k in range(n)]

    # R-L lines (ground encoded as node index n, held at 0 V)
    for e in range(m):
        cur = complex(y[2 * e], y[2 * e + 1])
        if not line_active[e]:
            dy[2 * e] = dy[2 * e + 1] = 0.0
            continue
        vf = v[line_from[e]] if line_from[e] < n else 0j
        vt = v[line_to[e]] if line_to[e] < n else 0j
        di = (-line_r[e] * cur + vf - vt) / line_l[e]
        dy[2 * e], dy[2 * e + 1] = di.real, di.imag
        inj[line_from[e]] -= cur
        if line_to[e] < n:
            inj[line_to[e]] += cur

    # source tie (infinite bus behind an R-L segment)
    if src_bus >= 0:
        i_s = complex(y[off_src], y[off_src + 1])
        if src_active:
            v_src = src_v * cmath.exp(1j * src_omega * t)
            di = (-src_r * i_s + v_src - v[src_bus]) / src_l
            dy[off_src], dy[off_src + 1] = di.real, di.imag
            inj[src_bus] += i_s
        else:
            dy[off_src] = dy[off_src + 1] = 0.0

    # DERs
    for d in range(len(der_kind)):
        par = der_par[d]
        o = der_off[d]
        bus = der_bus[d]
        has_ib = der_has_ib[d]
        r_f, l_f, c_f, r_c, l_c = par[0], par[1], par[2], par[3], par[4]
        x_virt, v_nom, v_dc = par[5], par[6], par[7]
        j_in, d_damp, psi, eta, k_iv, omega_n, p_nom = (
            par[8],
            par[9],
            par[10],
            par[11],
            par[12],
            par[13],
            par[14],
        )
        if has_ib:
            i_b_state = complex(y[o], y[o + 1])
            o2 = o + 2
        else:
            i_b_state = 0j
            o2 = o
        v_o = complex(y[o2], y[o2 + 1])
        i_t = complex(y[o2 + 2], y[o2 + 3])
        theta = y[o2 + 8]
        e_mth = cmath.exp(-1j * theta)
        v_b_int = v[bus] * e_mth
        i_b = i_b_state if has_ib else (v_o - v_b_int) / r_c

        if der_kind[d] == 0:  # proposed GFM
            beta = complex(y[o2 + 4], y[o2 + 5])
            xi = complex(y[o2 + 6], y[o2 + 7])
            omega = y[o2 + 9]
            w_dev = omega - omega_n
            # modulation m = K_hat [i_b, v_o, i_t, beta, xi - eta]^{ri}
            reg = (
                i_b.real,
                i_b.imag,
                v_o.real,
                v_o.imag,
                i_t.real,
                i_t.imag,
                beta.real,
                beta.imag,
                xi.real - eta,
                xi.imag,
            )
            mr = sum(par[15 + j] * reg[j] for j in range(10))
            mi = sum(par[25 + j] * reg[j] for j in range(10))
            mod = complex(mr, mi)

            d_vo = (-1j * omega * c_f * v_o + i_t - i_b) / c_f
            d_it = (-1j * omega * l_f * i_t - r_f * i_t + 0.5 * v_dc * mod - v_o) / l_f
            d_beta = -1j * omega * beta - v_o - 1j * x_virt * i_t
            d_xi = -1j * w_dev * xi + k_iv * (beta - 1j * psi)
            d_omega = (-d_damp * w_dev - psi * i_t.real + p_nom / omega_n) / j_in
            if has_ib:
                d_ib = (-1j * omega * l_c * i_b_state - r_c * i_b_state + v_o - v_b_int) / l_c
                dy[o], dy[o + 1] = d_ib.real, d_ib.imag
            dy[o2], dy[o2 + 1] = d_vo.real, d_vo.imag
            dy[o2 + 2], dy[o2 + 3] = d_it.real, d_it.imag
            dy[o2 + 4], dy[o2 + 5] = d_beta.real, d_beta.imag
            dy[o2 + 6], dy[o2 + 7] = d_xi.real, d_xi.imag
            dy[o2 + 8] = omega
            dy[o2 + 9] = d_omega
        else:  # baseline droop
            phi_v = complex(y[o2 + 4], y[o2 + 5])
            phi_c = complex(y[o2 + 6], y[o2 + 7])
            p_f, q_f = y[o2 + 9], y[o2 + 10]
            m_p, n_q, omega_c = par[15], par[16], par[17]
            k_pv, k_ivd, k_pc, k_ic, k_f = par[18], par[19], par[20], par[21], par[22]

            sv = v_o * i_b.conjugate()
            omega = omega_n - m_p * p_f
            v_ref = v_nom - n_q * q_f
            e_v = complex(v_ref, 0.0) - v_o
            i_t_ref = k_f * i_b + 1j * omega_n * c_f * v_o + k_pv * e_v + k_ivd * phi_v
            e_c = i_t_ref - i_t
            v_t = 1j * omega_n * l_f * i_t + k_pc * e_c + k_ic * phi_c

            d_vo = (-1j * omega * c_f * v_o + i_t - i_b) / c_f
            d_it = (-1j * omega * l_f * i_t - r_f * i_t + v_t - v_o) / l_f
            if has_ib:
                d_ib = (-1j * omega * l_c * i_b_state - r_c * i_b_state + v_o - v_b_int) / l_c
                dy[o], dy[o + 1] = d_ib.real, d_ib.imag
            dy[o2], dy[o2 + 1] = d_vo.real, d_vo.imag
            dy[o2 + 2], dy[o2 + 3] = d_it.real, d_it.imag
            dy[o2 + 4], dy[o2 + 5] = e_v.real, e_v.imag
            dy[o2 + 6], dy[o2 + 7] = e_c.real, e_c.imag
            dy[o2 + 8] = omega
            dy[o2 + 9] = omega_c * (sv.real - p_f)
            dy[o2 + 10] = omega_c * (sv.imag - q_f)

        inj[bus] += i_b * cmath.exp(1j * theta)

    # shunted nodes with ZIP loads
    for k in range(n):
        vk = v[k]
        ups = 0j
        if zip_z[k] != 0:
            ups -= vk / zip_z[k]
        if zip_i[k] != 0:
            mag = abs(vk)
            if mag < 1e-12:
                return 3
            ups -= zip_i[k] * vk / mag
        if zip_s[k] != 0:
            mag = abs(vk)
            if mag <= V_COLLAPSE:
                return 3
            ups -= (zip_s[k] / vk).conjugate()
        dv = (-node_g[k] * vk + inj[k] + ups) / node_c[k]
        dy[off_nodes + 2 * k], dy[off_nodes + 2 * k + 1] = dv.real, dv.imag
    return 0


def integrate_segment(
    t0,
    t1,
    dt,
    record_every,
    y0,
    line_r,
    line_l,
    line_from,
    line_to,
    line_active,
    node_g,
    node_c,
    zip_z,
    zip_i,
    zip_s,
    off_src,
    off_nodes,
    src_bus,
    src_r,
    src_l,
    src_v,
    src_omega,
    src_active,
    der_kind,
    der_bus,
    der_off,
    der_has_ib,
    der_par,
    atol=1e-9,
    rtol=1e-6,
    divergence=1e3,
    min_dt=1e-9,
):
    """Integrate [t0, t1] with nominal step dt; record every record_every steps.

    Returns (status, t_end, times, states); on failure the arrays hold what
    was recorded before the failing step.
    """
    args = (
        line_r,
        line_l,
        line_from,
        line_to,
        line_active,
        node_g,
        node_c,
        zip_z,
        zip_i,
        zip_s,
        off_src,
        off_nodes,
        src_bus,
        src_r,
        src_l,
        src_v,
        src_omega,
        src_active,
        der_kind,
        der_bus,
        der_off,
        der_has_ib,
        der_par,
    )
    y = np.array(y0, dtype=float)
    nst = len(y)
    n_nominal = int(round((t1 - t0) / dt))
    n_rec = n_nominal // record_every + 2  # +1 initial, +1 final (always recorded)
    times = np.zeros(n_rec)
    states = np.zeros((n_rec, nst))
    times[0] = t0
    states[0] = y
    n_out = 1

    stages = [np.zeros(nst) for _ in range(7)]

    def try_step(t, yv, h):
        """One DP5 step; returns (status, y_new, err_ratio)."""
        st = rhs(t, yv, stages[0], *args)
        if st:
            return st, yv, 0.0
        for i in range(1, 7):
            acc = np.array(yv)
            for j, a in enumerate(_A[i]):
                if a != 0.0:
                    acc += (h * a) * stages[j]
            st = rhs(t + _C[i] * h, acc, stages[i], *args)
            if st:
                return st, yv, 0.0
        y5 = np.array(yv)
        err = np.zeros(nst)
        for i in range(7):
            if _B5[i] != 0.0:
                y5 += (h * _B5[i]) * stages[i]
            d = _B5[i] - _B4[i]
            if d != 0.0:
                err += (h * d) * stages[i]
        scale = atol + rtol * np.maximum(np.abs(yv), np.abs(y5))
        ratio = float(np.max(np.abs(err) / scale))
        return 0, y5, ratio

    def advance(t, yv, h):
        """Advance exactly h, halving the sub-step on error (and growing it
        back when the estimate is far below tolerance); returns (status, y)."""
        t_loc, t_end, h_cur = t, t + h, h
        ycur = np.array(yv)
        while t_loc < t_end - 1e-15 * (1.0 + abs(t_end)):
            if h_cur < min_dt:
                return 2, ycur
            if t_loc + h_cur > t_end:
                h_cur = t_end - t_loc
            st, y_new, ratio = try_step(t_loc, ycur, h_cur)
            if st:
                return st, ycur
            if ratio <= 1.0:
                ycur = y_new
                t_loc += h_cur
                if ratio < 0.05 and h_cur * 2.0 <= h:
                    h_cur *= 2.0
            else:
                h_cur *= 0.5
        return 0, ycur

    t = t0
    theta_slots = [der_off[d] + (2 if der_has_ib[d] else 0) + 8 for d in range(len(der_kind))]
    two_pi = 2.0 * np.pi

    for k in range(n_nominal):
        status, y = advance(t, y, dt)
        t = t0 + (k + 1) * dt
        if status:
            return status, t, times[:n_out], states[:n_out]
        for s in theta_slots:
            # keep angles bounded; dynamics only see exp(j theta)
            if y[s] > two_pi:
                y[s] -= two_pi
            elif y[s] < -two_pi:
                y[s] += two_pi
        if np.max(np.abs(y)) > divergence:
            return 1, t, times[:n_out], states[:n_out]
        if (k + 1) % record_every == 0 or k + 1 == n_nominal:
            times[n_out] = t
            states[n_out] = y
            n_out += 1
    return 0, t1, times[:n_out], states[:n_out]
