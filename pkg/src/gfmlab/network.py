"""Microgrid graph: topology container, incidence matrices, interconnection.

Edge ordering convention (used for the incidence matrix M and everywhere a
"stacked edge vector" appears): generator edges first, then R-L line edges,
then one shunt-capacitor edge per non-ground node.  Node ordering: generator
nodes, then load nodes, ground last.  Every edge is directed with its head at
the ground node side, so each column of M sums to zero.

The interconnection matrix W couples edge inputs and outputs,

    [V_G, V_T, I_C] = W [I_G, I_T, V_C],

and is skew-symmetric: the power exchanged between connected edges cancels.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import TopologyError
from .params import BaseValues, DerParams


@dataclass(frozen=True)
class ZipLoad:
    """Static ZIP load, all components in pu on the system base.

    z_ld is the constant impedance (complex pu); i_ld the constant-current
    magnitude phasor; s_ld the constant complex power drawn.  Any component
    may be zero.
    """

    z_ld: complex = 0j
    i_ld: complex = 0j
    s_ld: complex = 0j

    def is_null(self) -> bool:
        return self.z_ld == 0 and self.i_ld == 0 and self.s_ld == 0


@dataclass(frozen=True)
class Line:
    from_bus: str
    to_bus: str
    r: float  # pu
    l: float  # pu-s
    name: str = ""


@dataclass(frozen=True)
class Shunt:
    g: float  # pu conductance
    c: float  # pu-s capacitance


@dataclass(frozen=True)
class DerSpec:
    bus: str
    params: DerParams
    controller: str = "proposed"  # "proposed" | "baseline"


@dataclass(frozen=True)
class SourceTie:
    """R-L segment from a bus to an ideal fixed voltage source (infinite bus)."""

    bus: str
    r: float
    l: float
    v_src: complex


@dataclass(frozen=True)
class Topology:
    """Immutable network description.  Buses listed generator-first."""

    base: BaseValues
    buses: tuple[str, ...]
    lines: tuple[Line, ...]
    shunts: dict[str, Shunt]
    loads: dict[str, ZipLoad]
    ders: tuple[DerSpec, ...]
    source_ties: tuple[SourceTie, ...] = ()

    def __post_init__(self):
        gen_buses = {d.bus for d in self.ders}
        if len(gen_buses) != len(self.ders):
            raise TopologyError("more than one DER on a bus")
        for bus, load in self.loads.items():
            if bus in gen_buses and not load.is_null():
                raise TopologyError(f"bus {bus} is both generator and load")
        known = set(self.buses)
        for ln in self.lines:
            if ln.from_bus == ln.to_bus:
                raise TopologyError(f"self-loop line at {ln.from_bus}")
            if ln.from_bus not in known or ln.to_bus not in known:
                raise TopologyError(f"line {ln.name or ln} references unknown bus")
        if set(self.shunts) != known:
            missing = known.symmetric_difference(self.shunts)
            raise TopologyError(f"exactly one shunt per bus required; mismatch at {sorted(missing)}")
        for d in self.ders:
            if d.bus not in known:
                raise TopologyError(f"DER references unknown bus {d.bus}")
        for t in self.source_ties:
            if t.bus not in known:
                raise TopologyError(f"source tie references unknown bus {t.bus}")

    @property
    def gen_buses(self) -> tuple[str, ...]:
        return tuple(d.bus for d in self.ders)

    @property
    def load_buses(self) -> tuple[str, ...]:
        gens = set(self.gen_buses)
        return tuple(b for b in self.buses if b not in gens)

    def ordered_buses(self) -> tuple[str, ...]:
        """Generator buses first (in DER order), then the rest."""
        return self.gen_buses + self.load_buses

    def line_index(self, name: str) -> int:
        for i, ln in enumerate(self.lines):
            if ln.name == name:
                return i
        raise TopologyError(f"unknown line {name!r}")

    def is_connected(self) -> bool:
        if not self.buses:
            return False
        adj: dict[str, set[str]] = {b: set() for b in self.buses}
        for ln in self.lines:
            adj[ln.from_bus].add(ln.to_bus)
            adj[ln.to_bus].add(ln.from_bus)
        seen = {self.buses[0]}
        stack = [self.buses[0]]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return len(seen) == len(self.buses)


@dataclass(frozen=True)
class Interconnection:
    """Incidence matrix M, line sub-incidence M1, and coupling matrix W."""

    m: np.ndarray
    m1: np.ndarray
    w: np.ndarray
    bus_order: tuple[str, ...]


def build_incidence(t: Topology, require_connected: bool = True) -> Interconnection:
    """Assemble M (nodes x edges), M1, and the skew coupling W.

    Island formation is permitted at runtime (breaker events), so callers that
    re-derive the interconnection mid-scenario pass require_connected=False.
    """
    if require_connected and not t.is_connected():
        raise TopologyError("graph is disconnected with all breakers closed")
    buses = t.ordered_buses()
    idx = {b: i for i, b in enumerate(buses)}
    g = len(t.ders)
    n_nodes = len(buses)
    n_t = len(t.lines)

    m1 = np.zeros((n_nodes, n_t))
    for k, ln in enumerate(t.lines):
        m1[idx[ln.from_bus], k] = 1.0
        m1[idx[ln.to_bus], k] = -1.0

    # Full incidence: [generator | line | shunt] columns, ground row last.
    m = np.zeros((n_nodes + 1, g + n_t + n_nodes))
    for e, d in enumerate(t.ders):
        m[idx[d.bus], e] = 1.0
        m[n_nodes, e] = -1.0
    m[:n_nodes, g : g + n_t] = m1
    m[:n_nodes, g + n_t :] = np.eye(n_nodes)
    m[n_nodes, g + n_t :] = -1.0

    w = np.zeros((g + n_t + n_nodes, g + n_t + n_nodes))
    gen_rows = np.array([idx[d.bus] for d in t.ders], dtype=int)
    sel = np.zeros((g, n_nodes))
    sel[np.arange(g), gen_rows] = 1.0
    w[:g, g + n_t :] = sel
    w[g : g + n_t, g + n_t :] = m1.T
    w[g + n_t :, :g] = -sel.T
    w[g + n_t :, g : g + n_t] = -m1
    return Interconnection(m=m, m1=m1, w=w, bus_order=buses)


def apply_breakers(t: Topology, open_lines: set[int] | set[str]) -> Topology:
    """Return the topology with the listed lines removed (by index or name)."""
    indices = {t.line_index(o) if isinstance(o, str) else int(o) for o in open_lines}
    for i in indices:
        if not 0 <= i < len(t.lines):
            raise TopologyError(f"line index {i} out of range")
    lines = tuple(ln for i, ln in enumerate(t.lines) if i not in indices)
    return replace(t, lines=lines)
