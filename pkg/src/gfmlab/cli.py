"""Command-line interface.

Subcommands: simulate, design-gains, verify-gains, audit-energy, metrics.
Exit codes: 0 ok, 2 divergence detected, 3 configuration error, 4 solver
failure (including failed gain verification).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, DivergenceDetected, GfmlabError, SolverFailure

EXIT_OK = 0
EXIT_DIVERGENCE = 2
EXIT_CONFIG = 3
EXIT_SOLVER = 4


def load_der_params(path: str | Path):
    from .params import DerParams

    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read params file {path}: {exc}") from exc
    try:
        return DerParams(**doc)
    except TypeError as exc:
        raise ConfigError(f"bad params file {path}: {exc}") from exc


def _cmd_simulate(args) -> int:
    from . import engine, plotting
    from .gains import load_gains

    gains = load_gains(args.gains) if args.gains else None
    scn = engine.load_scenario(args.scenario, gains=gains)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = scn.name or "trajectory"
    try:
        traj = engine.run_scenario(scn)
    except DivergenceDetected as exc:
        print(f"divergence detected at t = {exc.t:.6f} s", file=sys.stderr)
        if getattr(exc, "trajectory", None) is not None:
            exc.trajectory.write_csv(out / f"{name}.csv")
            np.savez(out / f"{name}_states.npz", times=exc.trajectory.times, states=exc.trajectory.states)
        return EXIT_DIVERGENCE
    traj.write_csv(out / f"{name}.csv")
    np.savez(out / f"{name}_states.npz", times=traj.times, states=traj.states)
    plotting.plot_channels(traj.times, traj.channels(), out / f"{name}.svg", title=name)
    print(f"wrote {out / (name + '.csv')} ({len(traj.times)} samples, {traj.n_der} DERs)")
    return EXIT_OK


def _cmd_design_gains(args) -> int:
    from .gains import DEFAULT_WEIGHTS, save_gains, solve_gain_sdp

    p = load_der_params(args.params)
    weights = DEFAULT_WEIGHTS
    if args.weights:
        parts = [float(v) for v in args.weights.split(",")]
        if len(parts) != 3:
            raise ConfigError("--weights expects three comma-separated numbers k1,k2,k3")
        weights = tuple(parts)
    design = solve_gain_sdp(p, weights=weights, k_iv=args.kiv)
    if not design.is_optimal or design.gains is None:
        raise SolverFailure(f"gain synthesis did not reach optimality (status {design.status})")
    save_gains(
        args.out,
        design.gains,
        diagnostics={
            "objective": design.objective,
            "alpha": design.alpha,
            "zeta": design.zeta,
            "gamma": design.gamma,
            "weights": list(weights),
        },
    )
    eq = design.eig_q_tilde_1
    ec = design.eig_closed_loop
    print(f"gain design written to {args.out}")
    print(f"  storage-weight eigenvalues: [{eq.min():.4g}, {eq.max():.4g}]")
    print(f"  closed-loop eigenvalue real parts: [{ec.real.min():.4g}, {ec.real.max():.4g}]")
    return EXIT_OK


def _cmd_verify_gains(args) -> int:
    from .gains import load_gains, verify_gain

    p = load_der_params(args.params)
    gains = load_gains(args.gains)
    report = verify_gain(gains, p, eps=args.eps)
    print(report)
    return EXIT_OK if report.passed else EXIT_SOLVER


def _cmd_audit_energy(args) -> int:
    from . import engine
    from .analysis import Snapshot, energy_balance_audit, load_orbit

    scn = engine.load_scenario(args.scenario)
    ps = engine.PackedSystem.build(scn.topology, gains=scn.gains, droop=scn.droop)
    ref = load_orbit(args.ref)
    npz_path = Path(args.traj)
    if npz_path.suffix == ".csv":
        npz_path = npz_path.with_name(npz_path.stem + "_states.npz")
    data = np.load(npz_path)
    times, states = data["times"], data["states"]
    snaps = [
        Snapshot(
            t=float(t),
            der_states=ps.der_states(y),
            line_currents=ps.line_currents(y),
            node_voltages=ps.node_voltages(y),
        )
        for t, y in zip(times, states)
    ]
    report = energy_balance_audit(
        snaps,
        ref,
        eps=args.eps,
        der_params=tuple(d.params for d in ps.ders),
        der_gains=tuple(d.gains for d in ps.ders),
        line_r=ps.line_r,
        line_l=ps.line_l,
        line_from=ps.line_from,
        line_to=ps.line_to,
        shunt_g=ps.node_g,
        shunt_c=ps.node_c,
    )
    print(report)
    return EXIT_OK if report.passed else EXIT_SOLVER


def _cmd_metrics(args) -> int:
    from .engine import read_channels_csv
    from .errors import NotSettled

    times, data, names = read_channels_csv(args.traj)
    t0, t1 = (float(v) for v in args.window.split(","))
    mask = (times >= t0) & (times <= t1)
    if mask.sum() < 2:
        raise ConfigError("metrics window contains fewer than two samples")
    sub = data[mask]
    var = sub.var(axis=0)
    if np.any(var > 1e-6):
        raise NotSettled(f"channel variance {var.max():.3e} above 1e-6 in window")
    means = sub.mean(axis=0)
    print(f"steady state over [{t0}, {t1}] s")
    for name, m in zip(names, means):
        print(f"  {name}: {m:.8g}")
    f_cols = [i for i, n in enumerate(names) if n.endswith("_f_hz")]
    if f_cols:
        spread = means[f_cols].max() - means[f_cols].min()
        print(f"  frequency spread: {spread:.3e} Hz")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gfmlab", description="Microgrid EMT simulation and gain-design toolchain")
    sub = ap.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("simulate", help="run a scenario and write CSV/SVG outputs")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--gains", default=None, help="override the gains file named by the scenario")
    s.set_defaults(func=_cmd_simulate)

    s = sub.add_parser("design-gains", help="solve the gain-synthesis SDP")
    s.add_argument("--params", required=True)
    s.add_argument("--weights", default=None, help="objective weights k1,k2,k3")
    s.add_argument("--kiv", type=float, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_design_gains)

    s = sub.add_parser("verify-gains", help="verify a gain file against parameters")
    s.add_argument("--gains", required=True)
    s.add_argument("--params", required=True)
    s.add_argument("--eps", type=float, default=None)
    s.set_defaults(func=_cmd_verify_gains)

    s = sub.add_parser("audit-energy", help="audit the dissipation inequality along a trajectory")
    s.add_argument("--traj", required=True, help="trajectory CSV or the *_states.npz written next to it")
    s.add_argument("--ref", required=True, help="orbit reference file")
    s.add_argument("--scenario", required=True, help="scenario the trajectory was produced from")
    s.add_argument("--eps", type=float, default=0.01)
    s.set_defaults(func=_cmd_audit_energy)

    s = sub.add_parser("metrics", help="steady-state metrics from a trajectory CSV")
    s.add_argument("--traj", required=True)
    s.add_argument("--window", required=True, help="t0,t1 in seconds")
    s.set_defaults(func=_cmd_metrics)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DivergenceDetected as exc:
        print(f"divergence detected: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except GfmlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
