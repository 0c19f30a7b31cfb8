# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled simulation kernel; byte-for-byte port of gfmlab._fallback.

Same flat-array interface and status codes (0 ok, 1 divergence, 2 stiffness,
3 voltage collapse).  Keep the two implementations in lockstep: every change
here must be mirrored in _fallback.py and covered by the parity tests.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, fabs, sin, sqrt

cnp.import_array()

cdef double V_COLLAPSE = 0.05

cdef double[7] _C = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0]
cdef double[7][6] _A = [
    [0, 0, 0, 0, 0, 0],
    [1.0 / 5.0, 0, 0, 0, 0, 0],
    [3.0 / 40.0, 9.0 / 40.0, 0, 0, 0, 0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0, 0, 0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0, 0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
]
cdef double[7] _B5 = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0,
                      -2187.0 / 6784.0, 11.0 / 84.0, 0.0]
cdef double[7] _B4 = [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0,
                      -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0]


cdef inline double complex _expj(double a) noexcept:
    return cos(a) + 1j * sin(a)


cdef int _rhs(
    double t,
    double[::1] y,
    double[::1] dy,
    double[::1] line_r,
    double[::1] line_l,
    long[::1] line_from,
    long[::1] line_to,
    unsigned char[::1] line_active,
    double[::1] node_g,
    double[::1] node_c,
    double complex[::1] zip_z,
    double complex[::1] zip_i,
    double complex[::1] zip_s,
    long off_src,
    long off_nodes,
    long src_bus,
    double src_r,
    double src_l,
    double complex src_v,
    double src_omega,
    int src_active,
    long[::1] der_kind,
    long[::1] der_bus,
    long[::1] der_off,
    long[::1] der_has_ib,
    double[:, ::1] der_par,
    double complex[::1] inj,
    double complex[::1] v,
) noexcept:
    cdef Py_ssize_t m = line_r.shape[0]
    cdef Py_ssize_t n = node_g.shape[0]
    cdef Py_ssize_t e, k, d, o, o2, bus, j
    cdef double complex cur, vf, vt, di, i_s, v_src
    cdef double complex v_o, i_t, i_b, i_b_state, v_b_int, mod, beta, xi
    cdef double complex d_vo, d_it, d_beta, d_xi, d_ib, e_v, e_c, i_t_ref, v_t
    cdef double complex phi_v, phi_c, sv, ups, vk, dv
    cdef double r_f, l_f, c_f, r_c, l_c, x_virt, v_nom, v_dc
    cdef double j_in, d_damp, psi, eta, k_iv, omega_n, p_nom
    cdef double theta, omega, w_dev, d_omega, mr, mi, mag
    cdef double m_p, n_q, omega_c, k_pv, k_ivd, k_pc, k_ic, k_f, p_f, q_f
    cdef double[10] reg

    for k in range(n):
        v[k] = y[off_nodes + 2 * k] + 1j * y[off_nodes + 2 * k + 1]
        inj[k] = 0

    for e in range(m):
        cur = y[2 * e] + 1j * y[2 * e + 1]
        if not line_active[e]:
            dy[2 * e] = 0.0
            dy[2 * e + 1] = 0.0
            continue
        vf = v[line_from[e]] if line_from[e] < n else 0
        vt = v[line_to[e]] if line_to[e] < n else 0
        di = (-line_r[e] * cur + vf - vt) / line_l[e]
        dy[2 * e] = di.real
        dy[2 * e + 1] = di.imag
        inj[line_from[e]] = inj[line_from[e]] - cur
        if line_to[e] < n:
            inj[line_to[e]] = inj[line_to[e]] + cur

    if src_bus >= 0:
        i_s = y[off_src] + 1j * y[off_src + 1]
        if src_active:
            v_src = src_v * _expj(src_omega * t)
            di = (-src_r * i_s + v_src - v[src_bus]) / src_l
            dy[off_src] = di.real
            dy[off_src + 1] = di.imag
            inj[src_bus] = inj[src_bus] + i_s
        else:
            dy[off_src] = 0.0
            dy[off_src + 1] = 0.0

    for d in range(der_kind.shape[0]):
        o = der_off[d]
        bus = der_bus[d]
        r_f = der_par[d, 0]
        l_f = der_par[d, 1]
        c_f = der_par[d, 2]
        r_c = der_par[d, 3]
        l_c = der_par[d, 4]
        x_virt = der_par[d, 5]
        v_nom = der_par[d, 6]
        v_dc = der_par[d, 7]
        j_in = der_par[d, 8]
        d_damp = der_par[d, 9]
        psi = der_par[d, 10]
        eta = der_par[d, 11]
        k_iv = der_par[d, 12]
        omega_n = der_par[d, 13]
        p_nom = der_par[d, 14]
        if der_has_ib[d]:
            i_b_state = y[o] + 1j * y[o + 1]
            o2 = o + 2
        else:
            i_b_state = 0
            o2 = o
        v_o = y[o2] + 1j * y[o2 + 1]
        i_t = y[o2 + 2] + 1j * y[o2 + 3]
        theta = y[o2 + 8]
        v_b_int = v[bus] * _expj(-theta)
        if der_has_ib[d]:
            i_b = i_b_state
        else:
            i_b = (v_o - v_b_int) / r_c

        if der_kind[d] == 0:
            beta = y[o2 + 4] + 1j * y[o2 + 5]
            xi = y[o2 + 6] + 1j * y[o2 + 7]
            omega = y[o2 + 9]
            w_dev = omega - omega_n
            reg[0] = i_b.real
            reg[1] = i_b.imag
            reg[2] = v_o.real
            reg[3] = v_o.imag
            reg[4] = i_t.real
            reg[5] = i_t.imag
            reg[6] = beta.real
            reg[7] = beta.imag
            reg[8] = xi.real - eta
            reg[9] = xi.imag
            mr = 0.0
            mi = 0.0
            for j in range(10):
                mr += der_par[d, 15 + j] * reg[j]
                mi += der_par[d, 25 + j] * reg[j]
            mod = mr + 1j * mi

            d_vo = (-1j * omega * c_f * v_o + i_t - i_b) / c_f
            d_it = (-1j * omega * l_f * i_t - r_f * i_t + 0.5 * v_dc * mod - v_o) / l_f
            d_beta = -1j * omega * beta - v_o - 1j * x_virt * i_t
            d_xi = -1j * w_dev * xi + k_iv * (beta - 1j * psi)
            d_omega = (-d_damp * w_dev - psi * i_t.real + p_nom / omega_n) / j_in
            if der_has_ib[d]:
                d_ib = (-1j * omega * l_c * i_b_state - r_c * i_b_state + v_o - v_b_int) / l_c
                dy[o] = d_ib.real
                dy[o + 1] = d_ib.imag
            dy[o2] = d_vo.real
            dy[o2 + 1] = d_vo.imag
            dy[o2 + 2] = d_it.real
            dy[o2 + 3] = d_it.imag
            dy[o2 + 4] = d_beta.real
            dy[o2 + 5] = d_beta.imag
            dy[o2 + 6] = d_xi.real
            dy[o2 + 7] = d_xi.imag
            dy[o2 + 8] = omega
            dy[o2 + 9] = d_omega
        else:
            phi_v = y[o2 + 4] + 1j * y[o2 + 5]
            phi_c = y[o2 + 6] + 1j * y[o2 + 7]
            p_f = y[o2 + 9]
            q_f = y[o2 + 10]
            m_p = der_par[d, 15]
            n_q = der_par[d, 16]
            omega_c = der_par[d, 17]
            k_pv = der_par[d, 18]
            k_ivd = der_par[d, 19]
            k_pc = der_par[d, 20]
            k_ic = der_par[d, 21]
            k_f = der_par[d, 22]

            sv = v_o * i_b.conjugate()
            omega = omega_n - m_p * p_f
            e_v = (v_nom - n_q * q_f) - v_o
            i_t_ref = k_f * i_b + 1j * omega_n * c_f * v_o + k_pv * e_v + k_ivd * phi_v
            e_c = i_t_ref - i_t
            v_t = 1j * omega_n * l_f * i_t + k_pc * e_c + k_ic * phi_c

            d_vo = (-1j * omega * c_f * v_o + i_t - i_b) / c_f
            d_it = (-1j * omega * l_f * i_t - r_f * i_t + v_t - v_o) / l_f
            if der_has_ib[d]:
                d_ib = (-1j * omega * l_c * i_b_state - r_c * i_b_state + v_o - v_b_int) / l_c
                dy[o] = d_ib.real
                dy[o + 1] = d_ib.imag
            dy[o2] = d_vo.real
            dy[o2 + 1] = d_vo.imag
            dy[o2 + 2] = d_it.real
            dy[o2 + 3] = d_it.imag
            dy[o2 + 4] = e_v.real
            dy[o2 + 5] = e_v.imag
            dy[o2 + 6] = e_c.real
            dy[o2 + 7] = e_c.imag
            dy[o2 + 8] = omega
            dy[o2 + 9] = omega_c * (sv.real - p_f)
            dy[o2 + 10] = omega_c * (sv.imag - q_f)

        inj[bus] = inj[bus] + i_b * _expj(theta)

    for k in range(n):
        vk = v[k]
        ups = 0
        if zip_z[k] != 0:
            ups = ups - vk / zip_z[k]
        if zip_i[k] != 0:
            mag = sqrt(vk.real * vk.real + vk.imag * vk.imag)
            if mag < 1e-12:
                return 3
            ups = ups - zip_i[k] * vk / mag
        if zip_s[k] != 0:
            mag = sqrt(vk.real * vk.real + vk.imag * vk.imag)
            if mag <= V_COLLAPSE:
                return 3
            ups = ups - (zip_s[k] / vk).conjugate()
        dv = (-node_g[k] * vk + inj[k] + ups) / node_c[k]
        dy[off_nodes + 2 * k] = dv.real
        dy[off_nodes + 2 * k + 1] = dv.imag
    return 0


def rhs(t, y, dy, line_r, line_l, line_from, line_to, line_active, node_g,
        node_c, zip_z, zip_i, zip_s, off_src, off_nodes, src_bus, src_r,
        src_l, src_v, src_omega, src_active, der_kind, der_bus, der_off,
        der_has_ib, der_par):
    """Python-visible wrapper around the compiled derivative (for tests)."""
    n = len(node_g)
    inj = np.zeros(n, dtype=complex)
    v = np.zeros(n, dtype=complex)
    return _rhs(t, y, dy, line_r, line_l, line_from, line_to, line_active,
                node_g, node_c, zip_z, zip_i, zip_s, off_src, off_nodes,
                src_bus, src_r, src_l, src_v, src_omega, src_active,
                der_kind, der_bus, der_off, der_has_ib, der_par, inj, v)


def integrate_segment(
    double t0,
    double t1,
    double dt,
    long record_every,
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
    long off_src,
    long off_nodes,
    long src_bus,
    double src_r,
    double src_l,
    double complex src_v,
    double src_omega,
    int src_active,
    der_kind,
    der_bus,
    der_off,
    der_has_ib,
    der_par,
    double atol=1e-9,
    double rtol=1e-6,
    double divergence=1e3,
    double min_dt=1e-9,
):
    cdef double[::1] _line_r = np.ascontiguousarray(line_r, dtype=np.float64)
    cdef double[::1] _line_l = np.ascontiguousarray(line_l, dtype=np.float64)
    cdef long[::1] _line_from = np.ascontiguousarray(line_from, dtype=np.int64)
    cdef long[::1] _line_to = np.ascontiguousarray(line_to, dtype=np.int64)
    cdef unsigned char[::1] _line_active = np.ascontiguousarray(line_active, dtype=np.uint8)
    cdef double[::1] _node_g = np.ascontiguousarray(node_g, dtype=np.float64)
    cdef double[::1] _node_c = np.ascontiguousarray(node_c, dtype=np.float64)
    cdef double complex[::1] _zip_z = np.ascontiguousarray(zip_z, dtype=np.complex128)
    cdef double complex[::1] _zip_i = np.ascontiguousarray(zip_i, dtype=np.complex128)
    cdef double complex[::1] _zip_s = np.ascontiguousarray(zip_s, dtype=np.complex128)
    cdef long[::1] _der_kind = np.ascontiguousarray(der_kind, dtype=np.int64)
    cdef long[::1] _der_bus = np.ascontiguousarray(der_bus, dtype=np.int64)
    cdef long[::1] _der_off = np.ascontiguousarray(der_off, dtype=np.int64)
    cdef long[::1] _der_has_ib = np.ascontiguousarray(der_has_ib, dtype=np.int64)
    cdef double[:, ::1] _der_par = np.ascontiguousarray(der_par, dtype=np.float64)

    cdef Py_ssize_t nst = len(y0)
    cdef Py_ssize_t n = _node_g.shape[0]
    cdef cnp.ndarray y_arr = np.array(y0, dtype=np.float64)
    cdef double[::1] y = y_arr
    cdef double complex[::1] inj = np.zeros(n, dtype=np.complex128)
    cdef double complex[::1] vbuf = np.zeros(n, dtype=np.complex128)
    cdef double[:, ::1] stages = np.zeros((7, nst))
    cdef double[::1] acc = np.zeros(nst)
    cdef double[::1] y5 = np.zeros(nst)
    cdef double[::1] ycur = np.zeros(nst)
    cdef double[::1] ynext = np.zeros(nst)

    cdef long n_nominal = <long> (0.5 + (t1 - t0) / dt)
    cdef long n_rec = n_nominal // record_every + 2  # +1 initial, +1 final (always recorded)
    times_arr = np.zeros(n_rec)
    states_arr = np.zeros((n_rec, nst))
    cdef double[::1] times = times_arr
    cdef double[:, ::1] states = states_arr
    cdef Py_ssize_t n_out = 1, i, k2
    cdef long k, nd = _der_kind.shape[0]
    cdef long[::1] theta_slots = np.zeros(nd, dtype=np.int64)
    for i in range(nd):
        theta_slots[i] = _der_off[i] + (2 if _der_has_ib[i] else 0) + 8
    cdef double two_pi = 2.0 * 3.14159265358979323846
    cdef double t, ymax

    times[0] = t0
    for i in range(nst):
        states[0, i] = y[i]

    cdef int status

    t = t0
    status = 0
    for k in range(n_nominal):
        status = _advance(
            t, dt, y, min_dt, atol, rtol, stages, acc, y5, ycur, ynext,
            _line_r, _line_l, _line_from, _line_to, _line_active, _node_g,
            _node_c, _zip_z, _zip_i, _zip_s, off_src, off_nodes, src_bus,
            src_r, src_l, src_v, src_omega, src_active, _der_kind, _der_bus,
            _der_off, _der_has_ib, _der_par, inj, vbuf,
        )
        t = t0 + (k + 1) * dt
        if status:
            return status, t, times_arr[:n_out], states_arr[:n_out]
        for i in range(nd):
            # keep angles bounded; dynamics only see exp(j theta)
            if y[theta_slots[i]] > two_pi:
                y[theta_slots[i]] -= two_pi
            elif y[theta_slots[i]] < -two_pi:
                y[theta_slots[i]] += two_pi
        ymax = 0.0
        for i in range(nst):
            if fabs(y[i]) > ymax:
                ymax = fabs(y[i])
        if ymax > divergence:
            return 1, t, times_arr[:n_out], states_arr[:n_out]
        if (k + 1) % record_every == 0 or k + 1 == n_nominal:
            times[n_out] = t
            for i in range(nst):
                states[n_out, i] = y[i]
            n_out += 1
    return 0, t1, times_arr[:n_out], states_arr[:n_out]


cdef int _try_step(
    double t,
    double h,
    double[::1] yv,
    double[::1] y_out,
    double* ratio_out,
    double atol,
    double rtol,
    double[:, ::1] stages,
    double[::1] acc,
    double[::1] line_r,
    double[::1] line_l,
    long[::1] line_from,
    long[::1] line_to,
    unsigned char[::1] line_active,
    double[::1] node_g,
    double[::1] node_c,
    double complex[::1] zip_z,
    double complex[::1] zip_i,
    double complex[::1] zip_s,
    long off_src,
    long off_nodes,
    long src_bus,
    double src_r,
    double src_l,
    double complex src_v,
    double src_omega,
    int src_active,
    long[::1] der_kind,
    long[::1] der_bus,
    long[::1] der_off,
    long[::1] der_has_ib,
    double[:, ::1] der_par,
    double complex[::1] inj,
    double complex[::1] vbuf,
) noexcept:
    cdef Py_ssize_t nst = yv.shape[0]
    cdef Py_ssize_t i, j, st_i
    cdef int st
    cdef double a, d, err_i, scale, ratio, ya, yb

    st = _rhs(t, yv, stages[0], line_r, line_l, line_from, line_to,
              line_active, node_g, node_c, zip_z, zip_i, zip_s, off_src,
              off_nodes, src_bus, src_r, src_l, src_v, src_omega, src_active,
              der_kind, der_bus, der_off, der_has_ib, der_par, inj, vbuf)
    if st:
        return st
    for st_i in range(1, 7):
        for i in range(nst):
            acc[i] = yv[i]
        for j in range(st_i):
            a = _A[st_i][j]
            if a != 0.0:
                for i in range(nst):
                    acc[i] += h * a * stages[j, i]
        st = _rhs(t + _C[st_i] * h, acc, stages[st_i], line_r, line_l,
                  line_from, line_to, line_active, node_g, node_c, zip_z,
                  zip_i, zip_s, off_src, off_nodes, src_bus, src_r, src_l,
                  src_v, src_omega, src_active, der_kind, der_bus, der_off,
                  der_has_ib, der_par, inj, vbuf)
        if st:
            return st
    ratio = 0.0
    for i in range(nst):
        ya = yv[i]
        for j in range(7):
            if _B5[j] != 0.0:
                ya += h * _B5[j] * stages[j, i]
        err_i = 0.0
        for j in range(7):
            d = _B5[j] - _B4[j]
            if d != 0.0:
                err_i += h * d * stages[j, i]
        y_out[i] = ya
        yb = fabs(yv[i])
        if fabs(ya) > yb:
            yb = fabs(ya)
        scale = atol + rtol * yb
        err_i = fabs(err_i) / scale
        if err_i > ratio:
            ratio = err_i
    ratio_out[0] = ratio
    return 0


cdef int _advance(
    double t,
    double h,
    double[::1] y,
    double min_dt,
    double atol,
    double rtol,
    double[:, ::1] stages,
    double[::1] acc,
    double[::1] y5,
    double[::1] ycur,
    double[::1] ynext,
    double[::1] line_r,
    double[::1] line_l,
    long[::1] line_from,
    long[::1] line_to,
    unsigned char[::1] line_active,
    double[::1] node_g,
    double[::1] node_c,
    double complex[::1] zip_z,
    double complex[::1] zip_i,
    double complex[::1] zip_s,
    long off_src,
    long off_nodes,
    long src_bus,
    double src_r,
    double src_l,
    double complex src_v,
    double src_omega,
    int src_active,
    long[::1] der_kind,
    long[::1] der_bus,
    long[::1] der_off,
    long[::1] der_has_ib,
    double[:, ::1] der_par,
    double complex[::1] inj,
    double complex[::1] vbuf,
):
    """Advance exactly h from t, iteratively halving the sub-step on error."""
    cdef Py_ssize_t nst = y.shape[0]
    cdef Py_ssize_t i
    cdef int st
    cdef double ratio = 0.0
    cdef double t_loc = t
    cdef double t_end = t + h
    cdef double h_cur = h

    for i in range(nst):
        ycur[i] = y[i]
    while t_loc < t_end - 1e-15 * (1.0 + fabs(t_end)):
        if h_cur < min_dt:
            return 2
        if t_loc + h_cur > t_end:
            h_cur = t_end - t_loc
        st = _try_step(t_loc, h_cur, ycur, ynext, &ratio, atol, rtol, stages,
                       acc, line_r, line_l, line_from, line_to, line_active,
                       node_g, node_c, zip_z, zip_i, zip_s, off_src, off_nodes,
                       src_bus, src_r, src_l, src_v, src_omega, src_active,
                       der_kind, der_bus, der_off, der_has_ib, der_par, inj,
                       vbuf)
        if st:
            return st
        if ratio <= 1.0:
            for i in range(nst):
                ycur[i] = ynext[i]
            t_loc += h_cur
            if ratio < 0.05 and h_cur * 2.0 <= h:
                h_cur *= 2.0
        else:
            h_cur *= 0.5
    for i in range(nst):
        y[i] = ycur[i]
    return 0
