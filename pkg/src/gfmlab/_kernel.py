"""Kernel backend selection and the PackedSystem -> flat-array adapter.

The compiled extension (gfmlab._core) is preferred; the pure-Python module
(gfmlab._fallback) is used when the extension is unavailable or when the
environment variable GFMLAB_FORCE_FALLBACK is set to a non-empty value.
Both expose the same `rhs` / `integrate_segment` interface.
"""

from __future__ import annotations

import os

import numpy as np

from .system import KIND_DROOP, KIND_GFM, PackedSystem

STATUS_OK = 0
STATUS_DIVERGENCE = 1
STATUS_STIFF = 2
STATUS_COLLAPSE = 3

PAR_WIDTH = 35


def _select_backend():
    if os.environ.get("GFMLAB_FORCE_FALLBACK"):
        from . import _fallback

        return _fallback, "fallback"
    try:
        from . import _core

        return _core, "compiled"
    except ImportError:
        from . import _fallback

        return _fallback, "fallback"


_BACKEND, BACKEND_NAME = _select_backend()


def backend_name() -> str:
    return BACKEND_NAME


def pack_der_params(ps: PackedSystem) -> tuple[np.ndarray, ...]:
    """Per-DER packed arrays: kind, bus, offset, has_ib, parameter rows."""
    nd = len(ps.ders)
    kind = np.zeros(nd, dtype=np.int64)
    bus = np.zeros(nd, dtype=np.int64)
    off = np.zeros(nd, dtype=np.int64)
    has_ib = np.zeros(nd, dtype=np.int64)
    par = np.zeros((nd, PAR_WIDTH))
    for i, d in enumerate(ps.ders):
        p = d.params
        kind[i] = d.kind
        bus[i] = d.bus_idx
        off[i] = d.offset
        has_ib[i] = 1 if d.has_ib else 0
        par[i, 0:15] = [
            p.r_f,
            p.l_f,
            p.c_f,
            p.r_c,
            p.l_c,
            p.x_virt,
            p.v_nom,
            p.v_dc,
            p.inertia_j,
            p.damping_d,
            p.psi,
            p.eta,
            p.k_iv,
            p.omega_n,
            p.p_nom,
        ]
        if d.kind == KIND_GFM:
            par[i, 15:25] = d.gains.k_hat[0]
            par[i, 25:35] = d.gains.k_hat[1]
        elif d.kind == KIND_DROOP:
            g = d.droop
            par[i, 15:23] = [g.m_p_rad, g.n_q, g.omega_c, g.k_pv, g.k_iv, g.k_pc, g.k_ic, g.k_f]
    return kind, bus, off, has_ib, par


def _kernel_args(ps: PackedSystem):
    kind, bus, off, has_ib, par = pack_der_params(ps)
    return (
        np.ascontiguousarray(ps.line_r),
        np.ascontiguousarray(ps.line_l),
        np.ascontiguousarray(ps.line_from),
        np.ascontiguousarray(ps.line_to),
        np.ascontiguousarray(ps.line_active),
        np.ascontiguousarray(ps.node_g),
        np.ascontiguousarray(ps.node_c),
        np.ascontiguousarray(ps.zip_z),
        np.ascontiguousarray(ps.zip_i),
        np.ascontiguousarray(ps.zip_s),
        ps.off_src,
        ps.off_nodes,
        ps.src_bus,
        ps.src_r,
        ps.src_l,
        ps.src_v,
        ps.src_omega,
        ps.src_active,
        kind,
        bus,
        off,
        has_ib,
        par,
    )


def rhs(ps: PackedSystem, t: float, y: np.ndarray) -> tuple[int, np.ndarray]:
    """Single derivative evaluation through the active backend."""
    dy = np.zeros_like(y)
    status = _BACKEND.rhs(t, np.ascontiguousarray(y, dtype=float), dy, *_kernel_args(ps))
    return status, dy


def integrate_segment(
    ps: PackedSystem,
    y0: np.ndarray,
    t0: float,
    t1: float,
    dt: float,
    record_every: int,
    atol: float = 1e-9,
    rtol: float = 1e-6,
    divergence: float = 1e3,
    min_dt: float = 1e-9,
):
    """Integrate one event-free segment; returns (status, t_end, times, states)."""
    return _BACKEND.integrate_segment(
        t0,
        t1,
        dt,
        record_every,
        np.ascontiguousarray(y0, dtype=float),
        *_kernel_args(ps),
        atol=atol,
        rtol=rtol,
        divergence=divergence,
        min_dt=min_dt,
    )
