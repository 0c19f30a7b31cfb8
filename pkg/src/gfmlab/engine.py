"""Scenario-driven simulation: events, integration segments, metrics, CSV.

A scenario is a topology plus a time-sorted event list.  Integration is
restarted at every event time, so discontinuities (load steps, breakers, grid
connection) land exactly on segment boundaries.  Breakers are realized as
per-line active flags on the packed system; the interconnection itself never
changes shape mid-run.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernel
from .analysis import OrbitReference, Snapshot
from .errors import (
    ConfigError,
    DivergenceDetected,
    NotSettled,
    StiffnessFailure,
    VoltageCollapse,
)
from .network import Line, Shunt, SourceTie, DerSpec, Topology, ZipLoad
from .params import (
    BaseValues,
    DerGains,
    DerParams,
    DroopGains,
    SystemDroopGains,
    reference_droop_gains,
)
from .system import KIND_GFM, PackedSystem

#: nominal integration steps (s) per controller family
DT_PROPOSED = 1e-5
DT_BASELINE = 5e-6

#: divergence threshold (pu) and decimation default
DIVERGENCE_LIMIT = 1e3
DEFAULT_DECIMATION = 100


# ---------------------------------------------------------------------------
# events
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Event:
    """One scheduled discontinuity.

    kind: zip-scale | breaker-open | breaker-close | connect-infinite-bus.
    zip-scale factors multiply, per ZIP branch: the Z-branch conductance and
    susceptance (of the admittance 1/Z), the I magnitude, and the S real and
    imaginary parts.
    """

    t: float
    kind: str
    bus: str | None = None
    line: str | None = None
    g_factor: float = 1.0
    b_factor: float = 1.0
    i_factor: float = 1.0
    p_factor: float = 1.0
    q_factor: float = 1.0
    v_mag: float = 1.0
    v_angle: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zip-scale", "breaker-open", "breaker-close", "connect-infinite-bus"):
            raise ConfigError(f"unknown event kind {self.kind!r}")


def apply_event(y: np.ndarray, ps: PackedSystem, e: Event) -> tuple[np.ndarray, PackedSystem]:
    """Apply one event in place; returns the (possibly modified) pair."""
    if e.kind == "zip-scale":
        try:
            node = ps.bus_order.index(e.bus)
        except ValueError:
            raise ConfigError(f"zip-scale targets unknown bus {e.bus!r}") from None
        z = ps.zip_z[node]
        if z != 0:
            y_adm = 1.0 / z
            y_adm = complex(e.g_factor * y_adm.real, e.b_factor * y_adm.imag)
            ps.zip_z[node] = 1.0 / y_adm if y_adm != 0 else 0j
        ps.zip_i[node] *= e.i_factor
        s = ps.zip_s[node]
        ps.zip_s[node] = complex(e.p_factor * s.real, e.q_factor * s.imag)
    elif e.kind in ("breaker-open", "breaker-close"):
        names = [ln.name for ln in ps.topology.lines]
        if e.line not in names:
            raise ConfigError(f"breaker event targets unknown line {e.line!r}")
        idx = names.index(e.line)
        ps.line_active[idx] = 0 if e.kind == "breaker-open" else 1
        y[2 * idx : 2 * idx + 2] = 0.0  # a (re)opened/closed line starts at zero current
    elif e.kind == "connect-infinite-bus":
        if ps.src_bus < 0:
            raise ConfigError("scenario has no source tie to connect")
        ps.src_v = e.v_mag * np.exp(1j * e.v_angle)
        ps.src_active = 1
        y[ps.off_src : ps.off_src + 2] = 0.0
    return y, ps


# ---------------------------------------------------------------------------
# scenario description and file formats
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    topology: Topology
    gains: DerGains | None
    droop: SystemDroopGains | None
    duration: float
    dt: float
    decimation: int = DEFAULT_DECIMATION
    preroll: float = 1.0
    events: tuple[Event, ...] = ()
    name: str = ""

    def __post_init__(self):
        ts = [e.t for e in self.events]
        if ts != sorted(ts):
            raise ConfigError("events must be time-sorted")
        if any(t < 0.0 or t > self.duration for t in ts):
            raise ConfigError("event times must lie within [0, duration]")
        if self.dt <= 0.0:
            raise ConfigError("dt must be positive")
        baseline = any(d.controller == "baseline" for d in self.topology.ders)
        if baseline and self.dt > 5e-5:
            raise ConfigError("baseline controller requires dt <= 50 us")


def _c(pair) -> complex:
    return complex(pair[0], pair[1])


def load_topology(path: str | Path) -> Topology:
    """Read a .net file (JSON; all electrical quantities already in pu)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed topology file {path}: {exc}") from exc
    base = BaseValues(**doc.get("base", {}))
    lines = tuple(
        Line(ln["from"], ln["to"], float(ln["r"]), float(ln["l"]), name=ln.get("name", f"line{i}"))
        for i, ln in enumerate(doc.get("lines", []))
    )
    shunts = {b: Shunt(g=float(s.get("g", 0.0)), c=float(s["c"])) for b, s in doc.get("shunts", {}).items()}
    loads = {
        b: ZipLoad(
            z_ld=_c(z.get("z", [0, 0])),
            i_ld=_c(z.get("i", [0, 0])),
            s_ld=_c(z.get("s", [0, 0])),
        )
        for b, z in doc.get("loads", {}).items()
    }
    ders = tuple(
        DerSpec(
            bus=d["bus"],
            params=DerParams(**d["params"]),
            controller=d.get("controller", "proposed"),
        )
        for d in doc.get("ders", [])
    )
    ties = tuple(
        SourceTie(bus=s["bus"], r=float(s["r"]), l=float(s["l"]), v_src=_c(s.get("v", [1, 0])))
        for s in doc.get("source_ties", [])
    )
    return Topology(
        base=base, buses=tuple(doc["buses"]), lines=lines, shunts=shunts, loads=loads, ders=ders, source_ties=ties
    )


def load_scenario(path: str | Path, gains: DerGains | None = None) -> Scenario:
    """Read a .scn file; the topology path is resolved relative to it.

    `gains` overrides the gains file referenced by the scenario (CLI flag).
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed scenario file {path}: {exc}") from exc
    topology = load_topology(path.parent / doc["topology"])
    if "controller" in doc:
        # scenario-level override: run the same network under either controller
        ders = tuple(
            DerSpec(bus=d.bus, params=d.params, controller=doc["controller"]) for d in topology.ders
        )
        topology = Topology(
            base=topology.base,
            buses=topology.buses,
            lines=topology.lines,
            shunts=topology.shunts,
            loads=topology.loads,
            ders=ders,
            source_ties=topology.source_ties,
        )
    if gains is None and "gains" in doc:
        from .gains import load_gains

        gains = load_gains(path.parent / doc["gains"])
    droop = None
    if any(d.controller == "baseline" for d in topology.ders):
        dev = DroopGains(**doc["droop"]) if "droop" in doc else reference_droop_gains()
        droop = dev.to_system(topology.base.omega_n)
    events = tuple(
        Event(
            t=float(e["t"]),
            kind=e["kind"],
            bus=e.get("bus"),
            line=e.get("line"),
            g_factor=float(e.get("g_factor", 1.0)),
            b_factor=float(e.get("b_factor", 1.0)),
            i_factor=float(e.get("i_factor", 1.0)),
            p_factor=float(e.get("p_factor", 1.0)),
            q_factor=float(e.get("q_factor", 1.0)),
            v_mag=float(e.get("v_mag", 1.0)),
            v_angle=float(e.get("v_angle", 0.0)),
        )
        for e in doc.get("events", [])
    )
    return Scenario(
        topology=topology,
        gains=gains,
        droop=droop,
        duration=float(doc["duration"]),
        dt=float(doc.get("dt", DT_PROPOSED)),
        decimation=int(doc.get("decimation", DEFAULT_DECIMATION)),
        preroll=float(doc.get("preroll", 1.0)),
        events=events,
        name=doc.get("name", path.stem),
    )


# ---------------------------------------------------------------------------
# trajectory
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    system: PackedSystem
    times: np.ndarray
    states: np.ndarray  # (n, n_state)
    status: int = _kernel.STATUS_OK
    t_fail: float | None = None

    def __post_init__(self):
        if np.any(np.diff(self.times) < 0):
            raise ConfigError("trajectory time grid must be monotone")

    @property
    def n_der(self) -> int:
        return len(self.system.ders)

    def channels(self) -> np.ndarray:
        """(n, n_der, 4) array of (f_hz, v_pu, p_pu, q_pu)."""
        out = np.zeros((len(self.times), self.n_der, 4))
        for k, y in enumerate(self.states):
            out[k] = self.system.channels(y)
        return out

    def snapshot(self, k: int) -> Snapshot:
        y = self.states[k]
        return Snapshot(
            t=float(self.times[k]),
            der_states=self.system.der_states(y),
            line_currents=self.system.line_currents(y),
            node_voltages=self.system.node_voltages(y),
        )

    def snapshots(self) -> list[Snapshot]:
        return [self.snapshot(k) for k in range(len(self.times))]

    def window(self, t0: float, t1: float) -> "Trajectory":
        mask = (self.times >= t0) & (self.times <= t1)
        return Trajectory(self.system, self.times[mask], self.states[mask], self.status, self.t_fail)

    def write_csv(self, path: str | Path) -> None:
        ch = self.channels()
        header = ["t"]
        for k in range(self.n_der):
            header += [f"der{k + 1}_f_hz", f"der{k + 1}_v_pu", f"der{k + 1}_p_pu", f"der{k + 1}_q_pu"]
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(header)
            for i, t in enumerate(self.times):
                row = [f"{t:.9f}"]
                for k in range(self.n_der):
                    row += [f"{v:.12g}" for v in ch[i, k]]
                w.writerow(row)


def read_channels_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Read a trajectory CSV back as (times, data, column names)."""
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        rows = [[float(v) for v in row] for row in r]
    arr = np.array(rows)
    if arr.size == 0:
        raise ConfigError(f"empty trajectory file {path}")
    return arr[:, 0], arr[:, 1:], header[1:]


# ---------------------------------------------------------------------------
# steady state
# ---------------------------------------------------------------------------


def find_steady_state(ps: PackedSystem, y_guess: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """Solve for the synchronous equilibrium (periodic orbit) of the system.

    At steady state every global-frame phasor slot (lines, source current,
    node voltages) rotates at the common frequency w_s while DER-internal
    slots are constant and every angle advances at w_s.  Returns (state at
    t = 0, w_s); the first DER angle is pinned to zero.
    """
    from scipy.optimize import root

    if y_guess is None:
        y_guess = ps.initial_state()
    n = ps.n_state
    omega_guess = ps.ders[0].params.omega_n if ps.ders else ps.src_omega

    # global-frame complex pair offsets (rotate at w_s) and angle slots
    rot_pairs = list(range(0, 2 * ps.n_lines, 2))
    if ps.src_bus >= 0 and ps.src_active:
        rot_pairs.append(ps.off_src)
    rot_pairs += list(range(ps.off_nodes, ps.off_nodes + 2 * ps.n_nodes, 2))
    theta_slots = []
    omega_slots = []
    for d in ps.ders:
        o = d.offset + (2 if d.has_ib else 0)
        theta_slots.append(o + 8)
        if d.kind == KIND_GFM:
            omega_slots.append(o + 9)

    def residual(u):
        y = u[:n].copy()
        w_s = u[n]
        status, dy = _kernel.rhs(ps, 0.0, y)
        if status:
            dy = np.where(np.isfinite(dy), dy, 0.0)
        r = dy.copy()
        for o in rot_pairs:
            # d/dt (a + jb) = j w_s (a + jb)
            r[o] = dy[o] + w_s * y[o + 1]
            r[o + 1] = dy[o + 1] - w_s * y[o]
        for o in theta_slots:
            r[o] = dy[o] - w_s
        out = np.empty(n + 1)
        out[:n] = r
        out[n] = y[theta_slots[0]] if theta_slots else w_s - omega_guess  # pin phase
        return out

    u0 = np.concatenate([y_guess, [omega_guess]])
    sol = root(residual, u0, method="hybr", tol=1e-13)
    res = float(np.max(np.abs(residual(sol.x))))
    if res > 1e-6:
        raise NotSettled(f"steady-state solve residual {res:.3e} (solver: {sol.message})")
    return sol.x[:n], float(sol.x[n])


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------


def _raise_for_status(status: int, t: float, ps: PackedSystem, traj: Trajectory | None):
    if status == _kernel.STATUS_DIVERGENCE:
        err = DivergenceDetected(f"state norm exceeded {DIVERGENCE_LIMIT} pu", t=t)
    elif status == _kernel.STATUS_STIFF:
        err = StiffnessFailure("step size underflow", t=t, dt=1e-9)
    elif status == _kernel.STATUS_COLLAPSE:
        err = VoltageCollapse(f"bus voltage collapsed near t={t:.6f} s", t=t)
    else:
        return
    err.trajectory = traj
    raise err


def run_scenario(scenario: Scenario) -> Trajectory:
    """Integrate the scenario after a discarded flat-start pre-roll.

    Events are applied at exact times with integration restarted at each one.
    Raises DivergenceDetected / StiffnessFailure / VoltageCollapse with the
    partial trajectory attached as `.trajectory`.
    """
    ps = PackedSystem.build(scenario.topology, gains=scenario.gains, droop=scenario.droop)
    try:
        y, _ = find_steady_state(ps)
    except NotSettled:
        y = ps.initial_state()  # fall back to a flat start; pre-roll must settle it

    if scenario.preroll > 0.0:
        status, t_end, _, states = _kernel.integrate_segment(
            ps, y, -scenario.preroll, 0.0, scenario.dt, record_every=10**9
        )
        _raise_for_status(status, t_end, ps, None)
        y = states[-1]

    times_all: list[np.ndarray] = []
    states_all: list[np.ndarray] = []
    boundaries = [0.0] + [e.t for e in scenario.events] + [scenario.duration]
    events = list(scenario.events)

    for i in range(len(boundaries) - 1):
        t_a, t_b = boundaries[i], boundaries[i + 1]
        if i > 0:
            y, ps = apply_event(y, ps, events[i - 1])
        if t_b <= t_a:
            continue
        status, t_end, ts, ys = _kernel.integrate_segment(
            ps, y, t_a, t_b, scenario.dt, record_every=scenario.decimation
        )
        if times_all and ts.size and times_all[-1][-1] == ts[0]:
            # segment start duplicates the previous boundary: keep post-event
            times_all[-1] = times_all[-1][:-1]
            states_all[-1] = states_all[-1][:-1]
        times_all.append(ts)
        states_all.append(ys)
        if status != _kernel.STATUS_OK:
            traj = Trajectory(ps, np.concatenate(times_all), np.vstack(states_all), status, t_end)
            _raise_for_status(status, t_end, ps, traj)
        y = ys[-1]

    return Trajectory(ps, np.concatenate(times_all), np.vstack(states_all))


# ---------------------------------------------------------------------------
# generic single step (plumbing, used by tests and small experiments)
# ---------------------------------------------------------------------------


def integrate_step(y, rhs, dt: float, atol: float = 1e-9, rtol: float = 1e-6, min_dt: float = 1e-9):
    """One nominal Dormand-Prince 5(4) step of a generic ODE y' = rhs(t=0-local, y).

    Halves internally on error-test failure; raises StiffnessFailure below
    the 1 ns floor.  rhs takes (t, y) with t relative to the step start.
    """
    from ._fallback import _A, _B4, _B5, _C

    y = np.asarray(y, dtype=float)
    t_loc, t_end, h = 0.0, dt, dt
    while t_loc < t_end - 1e-15 * (1.0 + t_end):
        if h < min_dt:
            raise StiffnessFailure("step size underflow", t=t_loc, dt=h)
        if t_loc + h > t_end:
            h = t_end - t_loc
        stages = []
        for i in range(7):
            acc = np.array(y)
            for j, a in enumerate(_A[i]):
                if a != 0.0:
                    acc += (h * a) * stages[j]
            stages.append(np.asarray(rhs(t_loc + _C[i] * h, acc), dtype=float))
        y5 = np.array(y)
        err = np.zeros_like(y)
        for i in range(7):
            if _B5[i] != 0.0:
                y5 += (h * _B5[i]) * stages[i]
            d = _B5[i] - _B4[i]
            if d != 0.0:
                err += (h * d) * stages[i]
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
        if float(np.max(np.abs(err) / scale)) <= 1.0:
            y = y5
            t_loc += h
        else:
            h *= 0.5
    return y


# ---------------------------------------------------------------------------
# steady-state metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SteadyStateReport:
    window: tuple[float, float]
    f_mean: np.ndarray  # Hz per DER
    v_mean: np.ndarray
    p_mean: np.ndarray
    q_mean: np.ndarray
    droop_p_residual: np.ndarray
    droop_v_residual: np.ndarray
    freq_spread: float  # Hz

    def __str__(self) -> str:
        rows = []
        for k in range(len(self.f_mean)):
            rows.append(
                f"  der{k + 1}: f={self.f_mean[k]:.6f} Hz  |V|={self.v_mean[k]:.4f} pu"
                f"  P={self.p_mean[k]:.6f}  Q={self.q_mean[k]:.6f}"
                f"  droop residuals P/V: {self.droop_p_residual[k]:.2e} / {self.droop_v_residual[k]:.2e}"
            )
        return (
            f"steady state over [{self.window[0]}, {self.window[1]}] s\n"
            + "\n".join(rows)
            + f"\n  frequency spread: {self.freq_spread:.3e} Hz"
        )


def steady_state_metrics(
    traj: Trajectory, window: tuple[float, float], variance_limit: float = 1e-6
) -> SteadyStateReport:
    """Windowed means, droop-law residuals, and cross-DER frequency spread.

    Raises NotSettled when any derived channel still has variance above
    `variance_limit` inside the window.
    """
    sub = traj.window(*window)
    if len(sub.times) < 2:
        raise ConfigError("metrics window contains fewer than two samples")
    ch = sub.channels()  # (n, d, 4)
    var = ch.var(axis=0)
    if np.any(var > variance_limit):
        worst = float(var.max())
        raise NotSettled(f"channel variance {worst:.3e} above {variance_limit:.1e} in window")
    f_mean = ch[:, :, 0].mean(axis=0)
    v_mean = ch[:, :, 1].mean(axis=0)
    p_mean = ch[:, :, 2].mean(axis=0)
    q_mean = ch[:, :, 3].mean(axis=0)

    n_der = sub.n_der
    res_p = np.zeros(n_der)
    res_v = np.zeros(n_der)
    for k, d in enumerate(sub.system.ders):
        p = d.params
        n = len(sub.times)
        vo = np.zeros(n, dtype=complex)
        it = np.zeros(n, dtype=complex)
        om = 2.0 * np.pi * ch[:, k, 0]
        qf = np.zeros(n)
        for i, y in enumerate(sub.states):
            s = sub.system.der_state(y, d)
            vo[i], it[i] = s.v_o, s.i_t
            if d.kind != KIND_GFM:
                qf[i] = s.q_f
        pw = ch[:, k, 2]
        if d.kind == KIND_GFM:
            # droop laws: P = P_n - (w - w_n)/(R_reg w_n);  V_o = V_n - jX I_t
            res_p[k] = float(np.abs(pw - p.p_nom + (om - p.omega_n) / p.r_reg_rad).mean())
            res_v[k] = float(np.abs(vo - p.v_nom + 1j * p.x_virt * it).mean())
        else:
            # conventional droop: w = w_n - m_p P;  |V_ref| = V_n - n_q Q
            g = d.droop
            res_p[k] = float(np.abs(pw + (om - p.omega_n) / g.m_p_rad).mean())
            res_v[k] = float(np.abs(np.abs(vo) - p.v_nom + g.n_q * qf).mean())
    return SteadyStateReport(
        window=window,
        f_mean=f_mean,
        v_mean=v_mean,
        p_mean=p_mean,
        q_mean=q_mean,
        droop_p_residual=res_p,
        droop_v_residual=res_v,
        freq_spread=float(f_mean.max() - f_mean.min()),
    )


def frequency_spread(traj: Trajectory) -> np.ndarray:
    """Instantaneous max-min frequency across DERs (Hz), per sample."""
    ch = traj.channels()
    return ch[:, :, 0].max(axis=1) - ch[:, :, 0].min(axis=1)


# ---------------------------------------------------------------------------
# reference-orbit extraction
# ---------------------------------------------------------------------------


def extract_orbit(traj: Trajectory, der_params: tuple[DerParams, ...] | None = None) -> OrbitReference:
    """Build an OrbitReference from the final sample of a settled trajectory.

    The orbit frequency is taken from the (synchronized) DER frequencies of
    the final sample; the caller is responsible for the trajectory actually
    being settled (see steady_state_metrics).
    """
    ps = traj.system
    snap = traj.snapshot(len(traj.times) - 1)
    params = der_params or tuple(d.params for d in ps.ders)
    omegas = [s.omega for s in snap.der_states]
    omega0 = float(np.mean(omegas))
    if max(omegas) - min(omegas) > 1e-6:
        raise NotSettled(f"DER frequencies not synchronized: spread {max(omegas) - min(omegas):.2e}")
    active = ps.line_active.astype(bool)
    return OrbitReference.from_states(
        der_states=snap.der_states,
        der_params=params,
        line_currents=snap.line_currents[active],
        line_l=ps.line_l[active],
        node_voltages=snap.node_voltages,
        shunt_c=ps.node_c,
        omega0=omega0,
        t_ref=snap.t,
    )
