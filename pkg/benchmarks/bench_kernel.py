"""Compare the compiled kernel against the pure-Python fallback.

Run:  python3 benchmarks/bench_kernel.py [--seconds 0.05]
Integrates the bundled 8-bus network with both backends and reports wall
time, speedup, and the max state deviation between the two results.
"""

import argparse
import importlib
import os
import time

import numpy as np


def run(force_fallback: bool, seconds: float):
    os.environ["GFMLAB_FORCE_FALLBACK"] = "1" if force_fallback else ""
    import gfmlab._kernel as k

    importlib.reload(k)
    import gfmlab

    scn = gfmlab.load_scenario(gfmlab.data_path("test1.scn"))
    ps = gfmlab.PackedSystem.build(scn.topology, gains=scn.gains, droop=scn.droop)
    y0 = ps.initial_state()
    t0 = time.perf_counter()
    status, t_end, _, states = k.integrate_segment(ps, y0, 0.0, seconds, scn.dt, record_every=10**9)
    wall = time.perf_counter() - t0
    assert status == 0, f"kernel status {status}"
    return k.BACKEND_NAME, wall, states[-1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seconds", type=float, default=0.05, help="simulated time per run")
    args = ap.parse_args()

    name_c, wall_c, y_c = run(False, args.seconds)
    name_f, wall_f, y_f = run(True, args.seconds)
    dev = float(np.max(np.abs(y_c - y_f)))
    print(f"{name_c:>10}: {wall_c:8.3f} s")
    print(f"{name_f:>10}: {wall_f:8.3f} s")
    if name_c != name_f:
        print(f"   speedup: {wall_f / wall_c:8.1f}x")
        print(f" max |dy|: {dev:.3e}")
    else:
        print("compiled backend unavailable; both runs used the fallback")


if __name__ == "__main__":
    main()
