"""Per-edge dynamics: R-L line, shunt capacitor with ZIP load, the
rotating-frame grid-forming (GFM) DER, and the baseline cascaded droop DER.

These are the reference (readable, scalar) implementations.  The simulation
kernels re-implement the same equations over packed arrays; kernel/edge parity
is enforced by tests.

All DER controller states live in the internal rotating frame attached to the
DER angle theta: a complex internal quantity x corresponds to x*e^{j*theta}
in the common network frame.  The bus voltage input V_b is always passed in
the external frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import VoltageCollapse
from .network import ZipLoad
from .params import DerParams, DerGains, SystemDroopGains

V_COLLAPSE = 0.05  # pu; constant-power load is meaningless below this


# ---------------------------------------------------------------------------
# passive edges


@dataclass(frozen=True)
class RlLineState:
    i: complex  # pu
    r: float  # pu
    l: float  # pu-s


def rl_line_rhs(s: RlLineState, v: complex) -> complex:
    """L dI/dt = -R I + V, with V the voltage across the line (from - to)."""
    return (-s.r * s.i + v) / s.l


def zip_current(v: complex, zp: ZipLoad) -> complex:
    """Load disturbance current Upsilon(V); negative of the drawn current.

    Upsilon(V) = -(V/Z + I_ld * V/|V| + (S/V)^*), entering the shunt equation
    additively.  The constant-power branch is unbounded as |V| -> 0, so below
    V_COLLAPSE it raises VoltageCollapse rather than feeding garbage into the
    integrator.
    """
    mag = abs(v)
    out = 0j
    if zp.z_ld != 0:
        out -= v / zp.z_ld
    if zp.i_ld != 0:
        if mag < 1e-12:
            raise VoltageCollapse("constant-current load with zero bus voltage")
        out -= zp.i_ld * v / mag
    if zp.s_ld != 0:
        if mag <= V_COLLAPSE:
            raise VoltageCollapse(
                f"bus voltage {mag:.4f} pu at/below {V_COLLAPSE} pu with constant-power load"
            )
        out -= np.conj(zp.s_ld / v)
    return out


@dataclass(frozen=True)
class ShuntState:
    v: complex  # pu
    g: float  # pu
    c: float  # pu-s
    zip_load: ZipLoad = ZipLoad()


def shunt_rhs(s: ShuntState, i_in: complex) -> complex:
    """C dV/dt = -G V + I_in + Upsilon(V)."""
    return (-s.g * s.v + i_in + zip_current(s.v, s.zip_load)) / s.c


# ---------------------------------------------------------------------------
# proposed grid-forming DER


@dataclass(frozen=True)
class GfmDerState:
    """Internal-frame states plus the frame angle/frequency.

    omega is the absolute internal frequency (rad/s); theta in rad, external.
    With l_c = 0 the bridge current i_b is algebraic and the field is ignored
    by the dynamics (kept for uniform shape).
    """

    i_b: complex
    v_o: complex
    i_t: complex
    beta: complex
    xi: complex
    theta: float
    omega: float


def gfm_bridge_current(s: GfmDerState, p: DerParams, v_b: complex) -> complex:
    """Bridge current: the l_c = 0 algebraic value, or the state itself."""
    if p.l_c == 0.0:
        return (s.v_o - v_b * np.exp(-1j * s.theta)) / p.r_c
    return s.i_b


def gfm_modulation(s: GfmDerState, p: DerParams, k: DerGains, i_b: complex) -> complex:
    """m = K_hat [I_b, V_o, I_t, beta, xi - eta]^{ri} as a complex pair."""
    reg = np.array(
        [
            i_b.real,
            i_b.imag,
            s.v_o.real,
            s.v_o.imag,
            s.i_t.real,
            s.i_t.imag,
            s.beta.real,
            s.beta.imag,
            s.xi.real - p.eta,
            s.xi.imag,
        ]
    )
    mr, mi = k.k_hat @ reg
    return complex(mr, mi)


def gfm_der_rhs(
    s: GfmDerState,
    p: DerParams,
    k: DerGains,
    v_b: complex,
    include_freq_input: bool = False,
) -> GfmDerState:
    """Time derivative of every GFM DER state (internal-frame coordinates).

    include_freq_input adds the (omega - omega_n) input to the current
    integrator; it is omitted in simulation by default and kept as an option
    for energy-balance audits.
    """
    w_hat = s.omega
    w_dev = w_hat - p.omega_n
    v_b_int = v_b * np.exp(-1j * s.theta)
    i_b = gfm_bridge_current(s, p, v_b)
    m = gfm_modulation(s, p, k, i_b)

    d_vo = (-1j * w_hat * p.c_f * s.v_o + s.i_t - i_b) / p.c_f
    d_it = (-1j * w_hat * p.l_f * s.i_t - p.r_f * s.i_t + 0.5 * p.v_dc * m - s.v_o) / p.l_f
    d_ib = 0j
    if p.l_c > 0.0:
        d_ib = (-1j * w_hat * p.l_c * s.i_b - p.r_c * s.i_b + s.v_o - v_b_int) / p.l_c

    d_beta = -1j * w_hat * s.beta - s.v_o - 1j * p.x_virt * s.i_t
    d_xi = -1j * w_dev * s.xi + p.k_iv * (s.beta - 1j * p.psi)
    if include_freq_input:
        d_xi += 1j * w_dev

    # swing: J dw/dt = -D (w - w_n) - psi*Re{I_t} + T0 with the frame at w_n
    d_omega = (-p.damping_d * w_dev - p.psi * s.i_t.real + p.p_nom / p.omega_n) / p.inertia_j
    return GfmDerState(
        i_b=d_ib, v_o=d_vo, i_t=d_it, beta=d_beta, xi=d_xi, theta=w_hat, omega=d_omega
    )


def gfm_injection(s: GfmDerState, p: DerParams, v_b: complex) -> complex:
    """External-frame current injected into the bus."""
    return gfm_bridge_current(s, p, v_b) * np.exp(1j * s.theta)


# ---------------------------------------------------------------------------
# baseline droop DER


@dataclass(frozen=True)
class DroopDerState:
    i_b: complex
    v_o: complex
    i_t: complex
    phi_v: complex  # voltage-PI integrator
    phi_c: complex  # current-PI integrator
    theta: float
    p_f: float  # filtered active power (pu)
    q_f: float  # filtered reactive power (pu)


def droop_frequency(s: DroopDerState, p: DerParams, g: SystemDroopGains) -> float:
    return p.omega_n - g.m_p_rad * s.p_f


def droop_der_rhs(
    s: DroopDerState, p: DerParams, g: SystemDroopGains, v_b: complex
) -> DroopDerState:
    """Conventional cascaded droop/PI controller with the same power circuit."""
    v_b_int = v_b * np.exp(-1j * s.theta)
    if p.l_c == 0.0:
        i_b = (s.v_o - v_b_int) / p.r_c
    else:
        i_b = s.i_b

    pw = (s.v_o * np.conj(i_b)).real
    qw = (s.v_o * np.conj(i_b)).imag
    omega = droop_frequency(s, p, g)
    v_ref = p.v_nom - g.n_q * s.q_f

    e_v = complex(v_ref, 0.0) - s.v_o
    i_t_ref = g.k_f * i_b + 1j * p.omega_n * p.c_f * s.v_o + g.k_pv * e_v + g.k_iv * s.phi_v
    e_c = i_t_ref - s.i_t
    v_t = 1j * p.omega_n * p.l_f * s.i_t + g.k_pc * e_c + g.k_ic * s.phi_c

    d_vo = (-1j * omega * p.c_f * s.v_o + s.i_t - i_b) / p.c_f
    d_it = (-1j * omega * p.l_f * s.i_t - p.r_f * s.i_t + v_t - s.v_o) / p.l_f
    d_ib = 0j
    if p.l_c > 0.0:
        d_ib = (-1j * omega * p.l_c * s.i_b - p.r_c * s.i_b + s.v_o - v_b_int) / p.l_c
    return DroopDerState(
        i_b=d_ib,
        v_o=d_vo,
        i_t=d_it,
        phi_v=e_v,
        phi_c=e_c,
        theta=omega,
        p_f=g.omega_c * (pw - s.p_f),
        q_f=g.omega_c * (qw - s.q_f),
    )


def droop_injection(s: DroopDerState, p: DerParams, v_b: complex) -> complex:
    if p.l_c == 0.0:
        i_b = (s.v_o - v_b * np.exp(-1j * s.theta)) / p.r_c
    else:
        i_b = s.i_b
    return i_b * np.exp(1j * s.theta)


# ---------------------------------------------------------------------------
# pH lift (analysis only; simulation integrates the coordinates above)


def lift_to_ph(
    s: GfmDerState,
    p: DerParams,
    k: DerGains,
    eps: float,
    phi: float = 0.0,
    v_b: complex = 0j,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Lifted pH state x in C^12, input u in C^5, natural output y in C^5.

    phi is the angle of the swing reference frame, omega_0*(t - t0); the
    swing pair lives at theta_1 = theta - phi.  v_b (external frame) fixes
    the bus-voltage entries of u and the bridge-current entries of y.  The
    input u is built with the internal-model term scaled by eta so that the
    pH representation reproduces the simulated dynamics exactly with the true
    gradient of H (see analysis.gradient).
    """
    e_th = np.exp(1j * s.theta)
    e_th1 = np.exp(1j * (s.theta - phi))
    w_dev = s.omega - p.omega_n
    xi_t = s.xi - p.eta
    v_b_int = v_b * np.exp(-1j * s.theta)
    i_b = gfm_bridge_current(s, p, v_b)
    x = np.array(
        [
            p.l_c * s.i_b.real * e_th,
            p.l_c * s.i_b.imag * e_th,
            p.c_f * s.v_o.real * e_th,
            p.c_f * s.v_o.imag * e_th,
            p.l_f * s.i_t.real * e_th,
            p.l_f * s.i_t.imag * e_th,
            s.beta.real * e_th,
            s.beta.imag * e_th,
            s.xi.real * e_th,
            s.xi.imag * e_th,
            1j * eps * p.inertia_j * w_dev * e_th1,
            eps * e_th1,
        ],
        dtype=complex,
    )
    t0 = p.torque_t0()
    u = np.array(
        [
            v_b_int.real * e_th,
            v_b_int.imag * e_th,
            0j,  # (j*w_dev)^r = 0
            w_dev * e_th,
            1j * eps * t0 * e_th1 - p.eta / eps * xi_t * e_th1,
        ],
        dtype=complex,
    )
    y = np.array(
        [
            -i_b.real * e_th,
            -i_b.imag * e_th,
            xi_t.real * e_th,
            xi_t.imag * e_th,
            1j * eps * w_dev * e_th1,
        ],
        dtype=complex,
    )
    return x, u, y
