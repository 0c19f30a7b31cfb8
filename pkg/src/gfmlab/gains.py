"""Feedback-gain synthesis and verification for the bridge controller.

The controller design is posed as a small semidefinite program over the
per-unit converter model written in energy (costate) coordinates.  State
ordering throughout (complex pairs expanded to interleaved re/im slots):

    0:2   bridge current I_b
    2:4   filter capacitor voltage V_o
    4:6   filter inductor current I_t
    6:8   voltage integrator beta
    8:10  auxiliary integrator xi
    10    frequency slot (swing)
    11    phase slot

The "primed" matrices drop the last two (swing/phase) slots; the design LMI
lives entirely in the primed coordinates, while `verify_gain` reinstates the
frequency slot and sweeps the phase angle phi.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import sdp
from .errors import ConfigError, DimensionError, SolverFailure
from .params import DerGains, DerParams

_J2 = np.array([[0.0, -1.0], [1.0, 0.0]])  # multiplication by j on a re/im pair

#: default Problem-1 weights (alpha, zeta, gamma)
DEFAULT_WEIGHTS = (1.0, 1.0e2, 1.0e5)

#: strict-definiteness margin used when posing "< 0" constraints
LMI_MARGIN = 1e-6

#: negative-definite verdict tolerance after symmetrization
NEG_DEF_TOL = -1e-9


# ---------------------------------------------------------------------------
# matrix assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DerMatrices:
    """Structure matrices of one converter in energy coordinates."""

    f0: np.ndarray  # 12x12 complex (depends on phi through the coupling row)
    f1: np.ndarray  # 12x12 complex, frequency-proportional part
    g1: np.ndarray  # 12x5 complex input map
    b: np.ndarray  # 12x2 real modulation map
    q1: np.ndarray  # length-12 real weight vector (swing/phase slots zero)
    phi: float
    eps: float

    @property
    def f0_prime(self) -> np.ndarray:
        """Real 10x10 block with the swing/phase slots removed."""
        return self.f0[:10, :10].real.copy()

    @property
    def b_prime(self) -> np.ndarray:
        return self.b[:10, :].copy()


def _pair_block(m12: np.ndarray, row: int, col: int, block: np.ndarray) -> None:
    m12[2 * row : 2 * row + 2, 2 * col : 2 * col + 2] = block


def assemble_der_matrices(p: DerParams, eps: float, phi: float = 0.0) -> DerMatrices:
    """Assemble F0(phi), F1, G1, B and the weight vector Q1.

    The only phi-dependence is the frequency-row coupling to the real part of
    the inductor current, scaled by eps*psi.
    """
    i2 = np.eye(2)
    f0 = np.zeros((12, 12), dtype=complex)
    _pair_block(f0, 0, 0, -p.r_c * i2)
    _pair_block(f0, 0, 1, i2)
    _pair_block(f0, 1, 0, -i2)
    _pair_block(f0, 1, 2, i2)
    _pair_block(f0, 2, 1, -i2)
    _pair_block(f0, 2, 2, -p.r_f * i2)
    _pair_block(f0, 3, 1, -i2)
    _pair_block(f0, 3, 2, -p.x_virt * _J2)
    _pair_block(f0, 4, 3, p.k_iv * i2)
    _pair_block(f0, 4, 4, p.omega_n * _J2)
    # frequency row: couples to the real-axis inductor-current slot, plus the
    # 2x2 swing block [-D, -1; 1, 0] shared with the phase row
    f0[10, 4] = -1j * eps * p.psi * np.exp(-1j * phi)
    f0[10, 10] = -p.damping_d
    f0[10, 11] = -1.0
    f0[11, 10] = 1.0

    f1 = np.zeros((12, 12), dtype=complex)
    blk = 1j * i2 - _J2
    for r in range(5):
        _pair_block(f1, r, r, blk)

    g1 = np.zeros((12, 5), dtype=complex)
    g1[0:2, 0:2] = -i2
    g1[8:10, 2:4] = i2
    g1[10, 4] = 1.0

    b = np.zeros((12, 2))
    b[4:6, :] = 0.5 * p.v_dc * np.eye(2)

    q1 = np.zeros(12)
    q1[0:2] = 1.0 / p.l_c if p.l_c > 0.0 else 0.0
    q1[2:4] = 1.0 / p.c_f
    q1[4:6] = 1.0 / p.l_f
    q1[6:10] = 1.0
    return DerMatrices(f0=f0, f1=f1, g1=g1, b=b, q1=q1, phi=phi, eps=eps)


def struct_inner12(p_vec: np.ndarray, q_vec: np.ndarray) -> float:
    """Structured inner product on the 12-slot energy coordinates."""
    sp = np.empty(7, dtype=complex)
    sq = np.empty(7, dtype=complex)
    for r in range(5):
        sp[r] = p_vec[2 * r] + 1j * p_vec[2 * r + 1]
        sq[r] = q_vec[2 * r] + 1j * q_vec[2 * r + 1]
    sp[5:] = p_vec[10:12]
    sq[5:] = q_vec[10:12]
    return float(np.real(np.vdot(sp, sq)))


# ---------------------------------------------------------------------------
# structure bases for the SDP decision variables
# ---------------------------------------------------------------------------


def _l_basis() -> np.ndarray:
    """10 generators of the 2x10 complex-structure feedback matrices."""
    basis = np.zeros((10, 2, 10))
    for r in range(5):
        re = basis[2 * r]
        re[0, 2 * r] = 1.0
        re[1, 2 * r + 1] = 1.0
        im = basis[2 * r + 1]
        im[0, 2 * r + 1] = 1.0
        im[1, 2 * r] = -1.0
    return basis


def _q_basis() -> np.ndarray:
    """16 generators of symmetric 8x8 complex-structure (Hermitian) matrices."""
    mats = []
    for k in range(4):
        m = np.zeros((8, 8))
        m[2 * k : 2 * k + 2, 2 * k : 2 * k + 2] = np.eye(2)
        mats.append(m)
    for k in range(4):
        for l in range(k + 1, 4):
            m = np.zeros((8, 8))
            m[2 * k : 2 * k + 2, 2 * l : 2 * l + 2] = np.eye(2)
            m[2 * l : 2 * l + 2, 2 * k : 2 * k + 2] = np.eye(2)
            mats.append(m)
            m = np.zeros((8, 8))
            m[2 * k : 2 * k + 2, 2 * l : 2 * l + 2] = _J2
            m[2 * l : 2 * l + 2, 2 * k : 2 * k + 2] = _J2.T
            mats.append(m)
    return np.stack(mats)


_W_SLOTS = slice(2, 10)


def _weight_diag(p: DerParams) -> np.ndarray:
    """Diagonal of Q1 restricted to the non-bridge primed slots."""
    return np.array([1.0 / p.c_f] * 2 + [1.0 / p.l_f] * 2 + [1.0] * 4)


def _p_matrix(p: DerParams, q22_inv: np.ndarray) -> np.ndarray:
    """Scaling matrix P = diag(I2, W * q22_inv): bridge slots pinned to I."""
    out = np.zeros((10, 10))
    out[0:2, 0:2] = np.eye(2)
    out[_W_SLOTS, _W_SLOTS] = np.diag(_weight_diag(p)) @ q22_inv
    return out


def _he(m: np.ndarray) -> np.ndarray:
    return m + m.T


# ---------------------------------------------------------------------------
# Problem-1 synthesis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GainDesign:
    status: str
    gains: DerGains | None
    l_mat: np.ndarray | None
    q22_inv: np.ndarray | None
    alpha: float | None
    zeta: float | None
    gamma: float | None
    objective: float | None
    eig_q_tilde_1: np.ndarray | None  # spectrum of diag(I2, inv(q22_inv))
    eig_closed_loop: np.ndarray | None  # spectrum of 0.5*He{F0'P + B'L}
    certificate: dict

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"


def _stage_a_start(p: DerParams, bound: float = 1e7) -> tuple[np.ndarray, np.ndarray] | None:
    """Max-margin joint feasibility solve used to seed the design SDP.

    Finds (L, Q22^{-1}) maximizing t subject to 0.5*He{F0'P + B'L} <= -t I
    with box bounds on Q22^{-1} and a norm bound on L.  The returned pair is
    strictly feasible for the design LMIs whenever t > 0, and anchoring the
    main solve at it is what lets the interior-point method survive the
    ~10-decade dynamic range of the optimal point.
    """
    mats = assemble_der_matrices(p, eps=1.0, phi=0.0)
    f0p, bp = mats.f0_prime, mats.b_prime
    lb = _l_basis()
    qb = _q_basis()
    wdiag = np.diag(_weight_diag(p))
    qscale = np.array([np.abs(wdiag @ b).max() for b in qb])
    n = 27  # 10 L coords, 16 scaled q coords, margin t
    p0 = np.zeros((10, 10))
    p0[0:2, 0:2] = np.eye(2)
    const1 = -0.5 * _he(f0p @ p0)
    coeffs1 = np.zeros((n, 10, 10))
    for i in range(10):
        coeffs1[i] = -0.5 * _he(bp @ lb[i])
    for i in range(16):
        pq = np.zeros((10, 10))
        pq[_W_SLOTS, _W_SLOTS] = (wdiag @ qb[i]) / qscale[i]
        coeffs1[10 + i] = -0.5 * _he(f0p @ pq)
    coeffs1[26] = -np.eye(10)
    lo = np.zeros((n, 8, 8))
    hi = np.zeros((n, 8, 8))
    for i in range(16):
        lo[10 + i] = qb[i] / qscale[i]
        hi[10 + i] = -qb[i] / qscale[i]
    const_norm = np.zeros((12, 12))
    const_norm[0:10, 0:10] = bound * np.eye(10)
    const_norm[10:12, 10:12] = np.eye(2)
    coeffs_norm = np.zeros((n, 12, 12))
    for i in range(10):
        coeffs_norm[i, 0:10, 10:12] = lb[i].T
        coeffs_norm[i, 10:12, 0:10] = lb[i]
    c = np.zeros(n)
    c[26] = -1.0  # maximize the margin
    prob = sdp.SdpProblem(
        c=c,
        blocks=(
            sdp.SdpBlock(const1, coeffs1),
            sdp.SdpBlock(-1e-9 * np.eye(8), lo),
            sdp.SdpBlock(bound * np.eye(8), hi),
            sdp.SdpBlock(const_norm, coeffs_norm),
        ),
    )
    sol = sdp.sdp_solve(prob)
    if not sol.is_optimal or sol.x[26] <= 0.0:
        return None
    l0 = np.tensordot(sol.x[0:10], _l_basis(), axes=1)
    q0 = np.tensordot(sol.x[10:26] / qscale, qb, axes=1)
    return l0, q0


def _design_start(p: DerParams, margin: float, depth: float = 8.0) -> np.ndarray | None:
    """Build a strictly feasible design-SDP point from the stage-A solution."""
    seed = _stage_a_start(p)
    if seed is None:
        return None
    l0, q0 = seed
    p0 = _p_matrix(p, q0)
    mats = assemble_der_matrices(p, eps=1.0, phi=0.0)
    lam = np.linalg.eigvalsh(0.5 * _he(mats.f0_prime @ p0 + mats.b_prime @ l0)).max()
    if lam >= -2.0 * margin:
        return None
    qb = _q_basis()
    x0 = np.zeros(29)
    for r in range(5):
        x0[2 * r] = l0[0, 2 * r]
        x0[2 * r + 1] = l0[0, 2 * r + 1]
    for i in range(16):
        x0[10 + i] = np.tensordot(qb[i], q0) / np.tensordot(qb[i], qb[i])
    x0[26] = depth * np.linalg.eigvalsh(l0 @ l0.T).max() + 1.0
    x0[27] = depth * np.linalg.eigvalsh(np.linalg.inv(q0)).max() + 1.0
    x0[28] = depth * np.linalg.norm(p0, 2) ** 2 / (-lam)
    return x0


def solve_gain_sdp(
    p: DerParams,
    weights: tuple[float, float, float] = DEFAULT_WEIGHTS,
    k_iv: float | None = None,
    margin: float = LMI_MARGIN,
) -> GainDesign:
    """Pose and solve the gain-synthesis SDP, recovering K from L and P.

    Decision variables: L (2x10, complex structure), q = vec of the 8x8
    symmetric complex-structure Q22^{-1}, and scalars alpha, zeta, gamma.
    Objective: k1*alpha + k2*zeta + k3*gamma.
    """
    k1, k2, k3 = weights
    if min(k1, k2, k3) <= 0.0:
        raise ConfigError("SDP weights must be positive")
    if k_iv is not None and k_iv != p.k_iv:
        p = DerParams(**{**p.__dict__, "k_iv": k_iv})

    mats = assemble_der_matrices(p, eps=1.0, phi=0.0)
    f0p = mats.f0_prime
    bp = mats.b_prime
    lb = _l_basis()
    qb = _q_basis()
    wdiag = np.diag(_weight_diag(p))
    n = 10 + 16 + 3
    i_alpha, i_zeta, i_gamma = 26, 27, 28

    # block 1 (20x20): -[0.5*He{F0'P + B'L}, P^T; P, -gamma*I] - margin*I >= 0
    p0 = np.zeros((10, 10))
    p0[0:2, 0:2] = np.eye(2)
    const1 = np.zeros((20, 20))
    const1[0:10, 0:10] = -0.5 * _he(f0p @ p0)
    const1[0:10, 10:20] = -p0.T
    const1[10:20, 0:10] = -p0
    const1 -= margin * np.eye(20)
    coeffs1 = np.zeros((n, 20, 20))
    for i in range(10):
        coeffs1[i, 0:10, 0:10] = -0.5 * _he(bp @ lb[i])
    for i in range(16):
        pq = np.zeros((10, 10))
        pq[_W_SLOTS, _W_SLOTS] = wdiag @ qb[i]
        coeffs1[10 + i, 0:10, 0:10] = -0.5 * _he(f0p @ pq)
        coeffs1[10 + i, 0:10, 10:20] = -pq.T
        coeffs1[10 + i, 10:20, 0:10] = -pq
    coeffs1[i_gamma, 10:20, 10:20] = np.eye(10)

    # block 2 (12x12): [alpha*I, L^T; L, I] >= 0
    const2 = np.zeros((12, 12))
    const2[10:12, 10:12] = np.eye(2)
    coeffs2 = np.zeros((n, 12, 12))
    coeffs2[i_alpha, 0:10, 0:10] = np.eye(10)
    for i in range(10):
        coeffs2[i, 0:10, 10:12] = lb[i].T
        coeffs2[i, 10:12, 0:10] = lb[i]

    # block 3 (16x16): [Q22^{-1}, I; I, zeta*I] >= 0
    const3 = np.zeros((16, 16))
    const3[0:8, 8:16] = np.eye(8)
    const3[8:16, 0:8] = np.eye(8)
    coeffs3 = np.zeros((n, 16, 16))
    for i in range(16):
        coeffs3[10 + i, 0:8, 0:8] = qb[i]
    coeffs3[i_zeta, 8:16, 8:16] = np.eye(8)

    c = np.zeros(n)
    c[i_alpha], c[i_zeta], c[i_gamma] = k1, k2, k3
    g_lin = np.zeros((3, n))
    g_lin[0, i_alpha] = g_lin[1, i_zeta] = g_lin[2, i_gamma] = -1.0
    h_lin = -1e-9 * np.ones(3)

    problem = sdp.SdpProblem(
        c=c,
        blocks=(
            sdp.SdpBlock(const1, coeffs1),
            sdp.SdpBlock(const2, coeffs2),
            sdp.SdpBlock(const3, coeffs3),
        ),
        g_lin=g_lin,
        h_lin=h_lin,
    )
    sol = sdp.sdp_solve(problem, primal_start=_design_start(p, margin))
    if not sol.is_optimal:
        return GainDesign(sol.status, None, None, None, None, None, None, None, None, None, sol.certificate)

    x = sol.x
    l_mat = np.tensordot(x[0:10], lb, axes=1)
    q22_inv = np.tensordot(x[10:26], qb, axes=1)
    p_mat = _p_matrix(p, q22_inv)
    k_hat = l_mat @ np.linalg.inv(p_mat)
    q_tilde_1 = np.zeros((10, 10))
    q_tilde_1[0:2, 0:2] = np.eye(2)
    q_tilde_1[2:10, 2:10] = np.linalg.inv(q22_inv)
    closed = 0.5 * _he(f0p @ p_mat + bp @ l_mat)
    gains = DerGains(k_hat=k_hat, k_iv=p.k_iv, q22_inv=q22_inv)
    return GainDesign(
        status="optimal",
        gains=gains,
        l_mat=l_mat,
        q22_inv=q22_inv,
        alpha=float(x[i_alpha]),
        zeta=float(x[i_zeta]),
        gamma=float(x[i_gamma]),
        objective=sol.value,
        eig_q_tilde_1=np.linalg.eigvalsh(0.5 * _he(q_tilde_1)),
        eig_closed_loop=np.linalg.eigvalsh(closed),
        certificate={"gap": sol.gap, "residual": sol.residual},
    )


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------


def _certificate_sdp(p: DerParams, k_hat: np.ndarray) -> np.ndarray | None:
    """Search a scaling certificate Q22^{-1} maximizing the definiteness margin.

    Feasibility problem: find q such that He{(F0' + B'K)P(q)} <= -t I with t
    as large as possible, 1e-7 I <= q <= 1e3 I.  Returns q22_inv or None.
    """
    mats = assemble_der_matrices(p, eps=1.0, phi=0.0)
    fk = mats.f0_prime + mats.b_prime @ k_hat
    qb = _q_basis()
    wdiag = np.diag(_weight_diag(p))
    qscale = np.array([np.abs(wdiag @ b).max() for b in qb])
    n = 17
    const1 = np.zeros((10, 10))
    const1[0:2, 0:2] = np.eye(2)
    const1 = -_he(fk @ const1)
    coeffs1 = np.zeros((n, 10, 10))
    for i in range(16):
        pq = np.zeros((10, 10))
        pq[_W_SLOTS, _W_SLOTS] = (wdiag @ qb[i]) / qscale[i]
        coeffs1[i] = -_he(fk @ pq)
    coeffs1[16] = -np.eye(10)

    coeffs_lo = np.zeros((n, 8, 8))
    coeffs_hi = np.zeros((n, 8, 8))
    for i in range(16):
        coeffs_lo[i] = qb[i] / qscale[i]
        coeffs_hi[i] = -qb[i] / qscale[i]
    c = np.zeros(n)
    c[16] = -1.0  # maximize t
    problem = sdp.SdpProblem(
        c=c,
        blocks=(
            sdp.SdpBlock(const1, coeffs1),
            sdp.SdpBlock(-1e-9 * np.eye(8), coeffs_lo),
            sdp.SdpBlock(1e8 * np.eye(8), coeffs_hi),
        ),
    )
    sol = sdp.sdp_solve(problem)
    if not sol.is_optimal or sol.x[16] <= 0.0:
        return None
    return np.tensordot(sol.x[0:16] / qscale, qb, axes=1)


@dataclass(frozen=True)
class GainReport:
    passed: bool
    lambda_max: float  # worst over phi grid, with damping slack
    lambda_max_no_slack: float
    eps: float
    phi_worst: float
    eps_inner_max: float  # largest eps keeping the slacked condition negative
    q22_inv: np.ndarray
    certificate_source: str

    def __str__(self) -> str:
        verdict = "pass" if self.passed else "FAIL"
        return (
            f"gain verification: {verdict}\n"
            f"  lambda_max (slacked)   = {self.lambda_max:+.6e}\n"
            f"  lambda_max (no slack)  = {self.lambda_max_no_slack:+.6e}\n"
            f"  eps used               = {self.eps:.6e}\n"
            f"  eps upper bound        = {self.eps_inner_max:.6e}\n"
            f"  worst phi              = {self.phi_worst:.4f} rad\n"
            f"  certificate            = {self.certificate_source}"
        )


def verify_gain(
    gains: DerGains,
    p: DerParams,
    eps: float | None = None,
    phi_grid: np.ndarray | None = None,
    with_damping_slack: bool = True,
) -> GainReport:
    """Check negative definiteness of the scaled closed-loop matrix over phi.

    The test matrix reinstates the frequency slot: with A = He{(F0'+B'K)P},
    the full matrix is [[A, eps*C(phi)], [eps*C(phi)^T, -2D I2]] where the
    coupling C(phi) = -psi * P[It_r,:]^T [sin phi, cos phi].  The damping
    slack adds +D to the frequency diagonal (the budget reserved for the
    frequency-error dissipation bound).
    """
    if phi_grid is None:
        phi_grid = np.linspace(0.0, 2.0 * np.pi, 64, endpoint=False)
    phi_grid = np.atleast_1d(np.asarray(phi_grid, dtype=float))
    if phi_grid.size == 0:
        raise ConfigError("phi grid must be nonempty")
    k_hat = gains.k_hat
    if gains.q22_inv is not None:
        q22_inv = gains.q22_inv
        source = "gains-file"
    else:
        q22_inv = _certificate_sdp(p, k_hat)
        source = "feasibility-sdp"
        if q22_inv is None:
            raise SolverFailure("no scaling certificate found", status="infeasible")

    p_mat = _p_matrix(p, q22_inv)
    a = _he((assemble_der_matrices(p, 1.0, 0.0).f0_prime + assemble_der_matrices(p, 1.0, 0.0).b_prime @ k_hat) @ p_mat)
    p4 = p_mat[4, :]  # row of P hit by the coupling (It real-axis slot)
    # eps upper bound from the Schur complement against the slacked -D block
    lam_a = np.linalg.eigvalsh(a)
    if lam_a.max() < 0.0 and np.linalg.norm(p4) > 0.0:
        eps_max = float(np.sqrt(-lam_a.max() * p.damping_d) / (p.psi * np.linalg.norm(p4)))
    else:
        eps_max = 0.0
    if eps is None:
        eps = 0.5 * eps_max if eps_max > 0.0 else 1e-3

    d_self = -2.0 * p.damping_d + (p.damping_d if with_damping_slack else 0.0)
    d_self_ns = -2.0 * p.damping_d
    worst = -np.inf
    worst_ns = -np.inf
    phi_worst = float(phi_grid[0])
    for phi in phi_grid:
        c_blk = -p.psi * np.outer(p4, np.array([np.sin(phi), np.cos(phi)]))
        t = np.zeros((12, 12))
        t[0:10, 0:10] = a
        t[0:10, 10:12] = eps * c_blk
        t[10:12, 0:10] = eps * c_blk.T
        t[10, 10] = t[11, 11] = d_self
        lam = float(np.linalg.eigvalsh(0.5 * _he(t)).max())
        t[10, 10] = t[11, 11] = d_self_ns
        lam_ns = float(np.linalg.eigvalsh(0.5 * _he(t)).max())
        if lam > worst:
            worst, phi_worst = lam, float(phi)
        worst_ns = max(worst_ns, lam_ns)
    return GainReport(
        passed=worst < NEG_DEF_TOL,
        lambda_max=worst,
        lambda_max_no_slack=worst_ns,
        eps=float(eps),
        phi_worst=phi_worst,
        eps_inner_max=eps_max,
        q22_inv=q22_inv,
        certificate_source=source,
    )


# ---------------------------------------------------------------------------
# gains file IO
# ---------------------------------------------------------------------------


def save_gains(path: str | Path, gains: DerGains, diagnostics: dict | None = None) -> None:
    payload = {
        "k_hat": gains.k_hat.tolist(),
        "k_iv": gains.k_iv,
    }
    if gains.q22_inv is not None:
        payload["q22_inv"] = gains.q22_inv.tolist()
    if diagnostics:
        payload["diagnostics"] = diagnostics
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_gains(path: str | Path) -> DerGains:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed gains file {path}: {exc}") from exc
    try:
        k_hat = np.asarray(payload["k_hat"], dtype=float)
        k_iv = float(payload["k_iv"])
    except KeyError as exc:
        raise ConfigError(f"gains file {path} missing field {exc}") from exc
    q22_inv = None
    if "q22_inv" in payload:
        q22_inv = np.asarray(payload["q22_inv"], dtype=float)
        if q22_inv.shape != (8, 8):
            raise DimensionError("q22_inv must be 8x8")
    return DerGains(k_hat=k_hat, k_iv=k_iv, q22_inv=q22_inv)
