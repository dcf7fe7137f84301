"""Export the IEEE 14/118/300 cases from PYPOWER into the package's JSON case
format and freeze reference power-flow solutions for the test-suite.

PYPOWER is only needed to (re)build these fixtures; the package itself does not
import it.

    pip install pypower
    python tools/build_case_fixtures.py
"""
import json
from pathlib import Path

import numpy as np
from pypower.api import case14, case118, case300, ppoption, runpf
from pypower.idx_brch import BR_B, BR_R, BR_STATUS, BR_X, F_BUS, SHIFT, T_BUS, TAP
from pypower.idx_bus import BS, BUS_I, BUS_TYPE, GS, PD, QD, VA, VM
from pypower.idx_gen import GEN_BUS, GEN_STATUS, PG, QG, VG

ROOT = Path(__file__).resolve().parents[1]
CASE_DIR = ROOT / "src" / "gnnfdia" / "cases"
FIXTURE_DIR = ROOT / "tests" / "fixtures"
KINDS = {1: "pq", 2: "pv", 3: "slack"}


def export(name, ppc):
    bus, branch, gen = ppc["bus"], ppc["branch"], ppc["gen"]
    base = float(ppc["baseMVA"])
    gen = gen[gen[:, GEN_STATUS] > 0]
    branch = branch[branch[:, BR_STATUS] > 0]

    buses = []
    for row in bus:
        bid = int(row[BUS_I])
        at = gen[:, GEN_BUS].astype(int) == bid
        kind = KINDS[int(row[BUS_TYPE])]
        buses.append({
            "id": bid,
            "kind": kind,
            "p_load": float(row[PD]),
            "q_load": float(row[QD]),
            "p_gen": float(gen[at, PG].sum()),
            "q_gen": float(gen[at, QG].sum()),
            "v_set": float(gen[at, VG][0]) if kind != "pq" else None,
            "gs": float(row[GS]) / base,
            "bs": float(row[BS]) / base,
        })
    branches = []
    for row in branch:
        branches.append({
            "from": int(row[F_BUS]),
            "to": int(row[T_BUS]),
            "r": float(row[BR_R]),
            "x": float(row[BR_X]),
            "b": float(row[BR_B]),
            "tap": float(row[TAP]) if row[TAP] != 0 else 1.0,
            "shift": float(np.deg2rad(row[SHIFT])),
        })
    doc = {"name": name, "base_mva": base, "buses": buses, "branches": branches}
    (CASE_DIR / f"{name}.json").write_text(json.dumps(doc, indent=1) + "\n")

    opt = ppoption(VERBOSE=0, OUT_ALL=0, PF_TOL=1e-11, PF_MAX_IT=30)
    res, ok = runpf(ppc, opt)
    assert ok, name
    slack = int(np.flatnonzero(res["bus"][:, BUS_TYPE] == 3)[0])
    ref = {
        "name": name,
        "source": "PYPOWER runpf (Newton, PF_TOL=1e-11, no Q limits)",
        "bus_ids": [int(b) for b in res["bus"][:, BUS_I]],
        "vm": [float(v) for v in res["bus"][:, VM]],
        # angles relative to the slack (the package fixes the slack angle at 0)
        "va": [float(a) for a in np.deg2rad(res["bus"][:, VA] - res["bus"][slack, VA])],
    }
    (FIXTURE_DIR / f"pf_reference_{name}.json").write_text(json.dumps(ref, indent=1) + "\n")
    print(name, len(buses), "buses", len(branches), "branches")


if __name__ == "__main__":
    CASE_DIR.mkdir(parents=True, exist_ok=True)
    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
    for name, fn in (("ieee14", case14), ("ieee118", case118), ("ieee300", case300)):
        export(name, fn())
