"""Packed-array view of a microgrid for the simulation kernels.

The integrators work on one flat float array.  Layout:

    [ line currents (2 per line) | source-tie current (2, if any)
      | node voltages (2 per node) | DER blocks ]

GFM DER block:   [i_b (2, only if l_c > 0), v_o, i_t, beta, xi (2 each),
                  theta, omega]
droop DER block: [i_b (2, only if l_c > 0), v_o, i_t, phi_v, phi_c (2 each),
                  theta, p_f, q_f]

Breakers are realized as per-line active flags (an opened line keeps its state
slot with the current zeroed) so the layout never changes mid-run; the single
optional source tie works the same way.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .edges import (
    DroopDerState,
    GfmDerState,
    droop_frequency,
    droop_injection,
    gfm_bridge_current,
    gfm_injection,
)
from .errors import ConfigError
from .network import Topology, ZipLoad
from .params import DerGains, DerParams, SystemDroopGains

KIND_GFM = 0
KIND_DROOP = 1


@dataclass(frozen=True)
class DerLayout:
    kind: int
    bus_idx: int
    params: DerParams
    gains: DerGains | None  # proposed controller
    droop: SystemDroopGains | None  # baseline controller
    offset: int
    size: int

    @property
    def has_ib(self) -> bool:
        return self.params.l_c > 0.0


@dataclass
class PackedSystem:
    """Everything the kernels need, as plain arrays plus per-DER layout."""

    topology: Topology
    bus_order: tuple[str, ...]
    n_lines: int
    n_nodes: int
    line_r: np.ndarray
    line_l: np.ndarray
    line_from: np.ndarray  # node index; ground encoded as n_nodes
    line_to: np.ndarray
    line_active: np.ndarray  # uint8 flags, mutated by breaker events
    node_g: np.ndarray
    node_c: np.ndarray
    zip_z: np.ndarray  # complex per node, 0 = absent branch
    zip_i: np.ndarray
    zip_s: np.ndarray
    ders: tuple[DerLayout, ...]
    src_bus: int  # -1 when no source tie
    src_r: float
    src_l: float
    src_v: complex
    src_omega: float
    src_active: int
    off_src: int
    off_nodes: int
    n_state: int

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------

    @classmethod
    def build(
        cls,
        topology: Topology,
        gains: DerGains | None = None,
        droop: SystemDroopGains | None = None,
    ) -> "PackedSystem":
        inter_order = topology.ordered_buses()
        bus_index = {b: i for i, b in enumerate(inter_order)}
        n_nodes = len(inter_order)
        for b in inter_order:
            if b not in topology.shunts or topology.shunts[b].c <= 0.0:
                raise ConfigError(f"bus {b!r} needs a shunt capacitance for the node dynamics")

        m = len(topology.lines)
        line_r = np.array([ln.r for ln in topology.lines], dtype=float)
        line_l = np.array([ln.l for ln in topology.lines], dtype=float)
        line_from = np.array([bus_index[ln.from_bus] for ln in topology.lines], dtype=np.int64)
        line_to = np.array([bus_index[ln.to_bus] for ln in topology.lines], dtype=np.int64)

        node_g = np.zeros(n_nodes)
        node_c = np.zeros(n_nodes)
        zip_z = np.zeros(n_nodes, dtype=complex)
        zip_i = np.zeros(n_nodes, dtype=complex)
        zip_s = np.zeros(n_nodes, dtype=complex)
        for b, sh in topology.shunts.items():
            node_g[bus_index[b]] = sh.g
            node_c[bus_index[b]] = sh.c
        for b, zl in topology.loads.items():
            i = bus_index[b]
            zip_z[i] = zl.z_ld
            zip_i[i] = zl.i_ld
            zip_s[i] = zl.s_ld

        if len(topology.source_ties) > 1:
            raise ConfigError("at most one source tie is supported")
        src_bus, src_r, src_l, src_v = -1, 0.0, 0.0, 0j
        if topology.source_ties:
            tie = topology.source_ties[0]
            src_bus = bus_index[tie.bus]
            src_r, src_l, src_v = tie.r, tie.l, tie.v_src
            if src_l <= 0.0:
                raise ConfigError("source tie needs l > 0")

        off = 2 * m
        off_src = off
        if src_bus >= 0:
            off += 2
        off_nodes = off
        off += 2 * n_nodes

        ders = []
        for spec in topology.ders:
            if spec.controller == "proposed":
                if gains is None:
                    raise ConfigError("proposed controller requested but no gains given")
                kind, size = KIND_GFM, (12 if spec.params.l_c > 0.0 else 10)
                entry = DerLayout(kind, bus_index[spec.bus], spec.params, gains, None, off, size)
            elif spec.controller == "baseline":
                if droop is None:
                    raise ConfigError("baseline controller requested but no droop gains given")
                kind, size = KIND_DROOP, (13 if spec.params.l_c > 0.0 else 11)
                entry = DerLayout(kind, bus_index[spec.bus], spec.params, None, droop, off, size)
            else:
                raise ConfigError(f"unknown controller {spec.controller!r}")
            ders.append(entry)
            off += size

        return cls(
            topology=topology,
            bus_order=tuple(inter_order),
            n_lines=m,
            n_nodes=n_nodes,
            line_r=line_r,
            line_l=line_l,
            line_from=line_from,
            line_to=line_to,
            line_active=np.ones(m, dtype=np.uint8),
            node_g=node_g,
            node_c=node_c,
            zip_z=zip_z,
            zip_i=zip_i,
            zip_s=zip_s,
            ders=tuple(ders),
            src_bus=src_bus,
            src_r=src_r,
            src_l=src_l,
            src_v=src_v,
            src_omega=topology.base.omega_n,
            src_active=0,
            off_src=off_src,
            off_nodes=off_nodes,
            n_state=off,
        )

    # ------------------------------------------------------------------
    # state access
    # ------------------------------------------------------------------

    def initial_state(self) -> np.ndarray:
        """Flat start: nominal voltages everywhere, zero currents."""
        y = np.zeros(self.n_state)
        for i in range(self.n_nodes):
            y[self.off_nodes + 2 * i] = 1.0  # V = 1 + 0j pu
        for d in self.ders:
            p = d.params
            o = d.offset + (2 if d.has_ib else 0)
            y[o + 0] = p.v_nom  # v_o
            if d.kind == KIND_GFM:
                y[o + 5] = p.v_nom / p.omega_n  # beta = j v_nom / omega_n
                y[o + 6] = p.eta  # xi at the internal-model offset
                y[o + 9] = p.omega_n  # omega
            # theta starts at 0 for both kinds; droop extras start at 0
        return y

    def line_currents(self, y: np.ndarray) -> np.ndarray:
        raw = y[: 2 * self.n_lines]
        return raw[0::2] + 1j * raw[1::2]

    def node_voltages(self, y: np.ndarray) -> np.ndarray:
        raw = y[self.off_nodes : self.off_nodes + 2 * self.n_nodes]
        return raw[0::2] + 1j * raw[1::2]

    def source_current(self, y: np.ndarray) -> complex:
        if self.src_bus < 0:
            return 0j
        return complex(y[self.off_src], y[self.off_src + 1])

    def der_state(self, y: np.ndarray, d: DerLayout):
        o = d.offset
        if d.has_ib:
            i_b = complex(y[o], y[o + 1])
            o += 2
        else:
            i_b = 0j
        if d.kind == KIND_GFM:
            return GfmDerState(
                i_b=i_b,
                v_o=complex(y[o], y[o + 1]),
                i_t=complex(y[o + 2], y[o + 3]),
                beta=complex(y[o + 4], y[o + 5]),
                xi=complex(y[o + 6], y[o + 7]),
                theta=y[o + 8],
                omega=y[o + 9],
            )
        return DroopDerState(
            i_b=i_b,
            v_o=complex(y[o], y[o + 1]),
            i_t=complex(y[o + 2], y[o + 3]),
            phi_v=complex(y[o + 4], y[o + 5]),
            phi_c=complex(y[o + 6], y[o + 7]),
            theta=y[o + 8],
            p_f=y[o + 9],
            q_f=y[o + 10],
        )

    def der_states(self, y: np.ndarray) -> tuple:
        return tuple(self.der_state(y, d) for d in self.ders)

    def set_der_state(self, y: np.ndarray, d: DerLayout, s) -> None:
        o = d.offset
        if d.has_ib:
            y[o], y[o + 1] = s.i_b.real, s.i_b.imag
            o += 2
        y[o], y[o + 1] = s.v_o.real, s.v_o.imag
        y[o + 2], y[o + 3] = s.i_t.real, s.i_t.imag
        if d.kind == KIND_GFM:
            y[o + 4], y[o + 5] = s.beta.real, s.beta.imag
            y[o + 6], y[o + 7] = s.xi.real, s.xi.imag
            y[o + 8], y[o + 9] = s.theta, s.omega
        else:
            y[o + 4], y[o + 5] = s.phi_v.real, s.phi_v.imag
            y[o + 6], y[o + 7] = s.phi_c.real, s.phi_c.imag
            y[o + 8], y[o + 9], y[o + 10] = s.theta, s.p_f, s.q_f

    # ------------------------------------------------------------------
    # derived channels
    # ------------------------------------------------------------------

    def channels(self, y: np.ndarray) -> np.ndarray:
        """Per-DER (f_hz, |V_o| pu, P pu, Q pu), shape (n_der, 4)."""
        nv = self.node_voltages(y)
        out = np.zeros((len(self.ders), 4))
        for i, d in enumerate(self.ders):
            s = self.der_state(y, d)
            v_b = nv[d.bus_idx]
            if d.kind == KIND_GFM:
                f = s.omega / (2.0 * np.pi)
                i_b = gfm_bridge_current(s, d.params, v_b)
            else:
                f = droop_frequency(s, d.params, d.droop) / (2.0 * np.pi)
                i_b = s.i_b if d.has_ib else (s.v_o - v_b * np.exp(-1j * s.theta)) / d.params.r_c
            sv = s.v_o * np.conj(i_b)
            out[i] = [f, abs(s.v_o), sv.real, sv.imag]
        return out

    def injections(self, y: np.ndarray) -> np.ndarray:
        """External-frame DER current injections per node (diagnostics)."""
        nv = self.node_voltages(y)
        inj = np.zeros(self.n_nodes, dtype=complex)
        for d in self.ders:
            s = self.der_state(y, d)
            v_b = nv[d.bus_idx]
            if d.kind == KIND_GFM:
                inj[d.bus_idx] += gfm_injection(s, d.params, v_b)
            else:
                inj[d.bus_idx] += droop_injection(s, d.params, v_b)
        return inj

    def zip_load_at(self, node: int) -> ZipLoad:
        return ZipLoad(z_ld=self.zip_z[node], i_ld=self.zip_i[node], s_ld=self.zip_s[node])
