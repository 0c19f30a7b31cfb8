"""Regenerate the bundled network/scenario/gains data files.

Run from the repository root:  python3 scripts/make_data.py
"""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from gfmlab.params import BaseValues, reference_k_hat, table_der_params  # noqa: E402

DATA = Path(__file__).resolve().parents[1] / "src" / "gfmlab" / "data"

BASE = BaseValues()
# bundled test network constants (SI converted to pu on the 400 V / 1 MW base)
SHUNT_C = BASE.c_pu(16e-6)
ZIP_Z = [65.29, 48.97]  # pu
ZIP_S = [1.0e-3, 0.75e-3]  # pu
LINE_T1 = {"r": BASE.r_pu(0.2), "l": BASE.l_pu(4e-3)}  # 20 ms time constant
LINE_T2 = {"r": BASE.r_pu(0.1), "l": BASE.l_pu(0.1e-3)}  # 1 ms time constant


def der_params_doc(l_c_henry: float = 0.0) -> dict:
    p = table_der_params(BASE, l_c_henry=l_c_henry)
    return {k: getattr(p, k) for k in p.__dataclass_fields__}


def ring_topology(line: dict) -> dict:
    der = der_params_doc()
    pairs = [
        ("bus9", "bus5", "L9-5"),
        ("bus5", "bus10", "L5-10"),
        ("bus10", "bus6", "L10-6"),
        ("bus6", "bus11", "CB1"),
        ("bus11", "bus7", "L11-7"),
        ("bus7", "bus12", "L7-12"),
        ("bus12", "bus8", "L12-8"),
        ("bus8", "bus9", "L8-9"),
    ]
    buses = [f"bus{k}" for k in (5, 6, 7, 8, 9, 10, 11, 12)]
    return {
        "base": {"v_base": BASE.v_base, "p_base": BASE.p_base, "f_nom": BASE.f_nom},
        "buses": buses,
        "lines": [{"from": a, "to": b, "name": n, **line} for a, b, n in pairs],
        "shunts": {b: {"g": 0.0, "c": SHUNT_C} for b in buses},
        "loads": {f"bus{k}": {"z": ZIP_Z, "s": ZIP_S} for k in (9, 10, 11, 12)},
        "ders": [{"bus": f"bus{k}", "controller": "proposed", "params": der} for k in (5, 6, 7, 8)],
        "source_ties": [{"bus": "bus11", **line, "v": [1.0, 0.0]}],
    }


def audit_topology() -> dict:
    der = der_params_doc(l_c_henry=0.35e-3)  # dynamic bridge needed by the audit
    line = LINE_T1
    return {
        "base": {"v_base": BASE.v_base, "p_base": BASE.p_base, "f_nom": BASE.f_nom},
        "buses": ["busA", "busB"],
        "lines": [{"from": "busA", "to": "busB", "name": "LAB", **line}],
        "shunts": {b: {"g": 0.0, "c": SHUNT_C} for b in ("busA", "busB")},
        "loads": {"busB": {"z": ZIP_Z}},
        "ders": [
            {"bus": "busA", "controller": "proposed", "params": der},
            {"bus": "busB", "controller": "proposed", "params": der},
        ],
        "source_ties": [],
    }


def load_events(t: float) -> list:
    return [
        {"t": t, "kind": "zip-scale", "bus": "bus9", "g_factor": 0.6, "b_factor": 0.5},
        {"t": t, "kind": "zip-scale", "bus": "bus10", "g_factor": 0.8, "p_factor": 1.4},
    ]


def revert_events(t: float) -> list:
    return [
        {"t": t, "kind": "zip-scale", "bus": "bus9", "g_factor": 1.0 / 0.6, "b_factor": 2.0},
        {"t": t, "kind": "zip-scale", "bus": "bus10", "g_factor": 1.25, "p_factor": 1.0 / 1.4},
    ]


def schedule(t_load: float) -> list:
    return (
        load_events(t_load)
        + [{"t": 5.0, "kind": "breaker-open", "line": "CB1"}]
        + revert_events(10.0)
        + [
            {"t": 15.0, "kind": "breaker-close", "line": "CB1"},
            {"t": 20.0, "kind": "connect-infinite-bus", "v_mag": 0.95, "v_angle": 0.6},
        ]
    )


def scenario(name: str, net: str, t_load: float, controller: str, dt: float) -> dict:
    doc = {
        "name": name,
        "topology": net,
        "duration": 25.0,
        "dt": dt,
        "decimation": 100,
        "preroll": 1.0,
        "controller": controller,
        "events": schedule(t_load),
    }
    if controller == "proposed":
        doc["gains"] = "reference.gains"
    return doc


def main():
    DATA.mkdir(parents=True, exist_ok=True)

    files = {
        "fig2_test1.net": ring_topology(LINE_T1),
        "fig2_test2.net": ring_topology(LINE_T2),
        "audit2.net": audit_topology(),
        "test1.scn": scenario("test1", "fig2_test1.net", 0.01, "proposed", 1e-5),
        "test1_baseline.scn": scenario("test1_baseline", "fig2_test1.net", 0.01, "baseline", 5e-6),
        "test2.scn": scenario("test2", "fig2_test2.net", 0.1, "proposed", 1e-5),
        "test2_baseline.scn": scenario("test2_baseline", "fig2_test2.net", 0.1, "baseline", 5e-6),
        "audit.scn": {
            "name": "audit",
            "topology": "audit2.net",
            "gains": "reference.gains",
            "duration": 2.0,
            "dt": 1e-5,
            "decimation": 10,
            "preroll": 1.0,
            "events": [],
        },
        "reference.gains": {
            "k_hat": reference_k_hat().tolist(),
            "k_iv": table_der_params().k_iv,
        },
    }
    for name, doc in files.items():
        (DATA / name).write_text(json.dumps(doc, indent=2) + "\n")
        print(f"wrote {DATA / name}")


if __name__ == "__main__":
    main()
