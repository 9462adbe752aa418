"""Acceptance criteria, one test per criterion, each on the shipped config.

Every test prints a single ``[pass]``/``[FAIL]`` line with the measured
quantity and its runtime; the lines are repeated in the session summary.
"""
import csv
import io
import math
import time
from pathlib import Path

import numpy as np
import pytest

from eidlab.cli import make_rng
from eidlab.config import parse_config
from eidlab.experiments import run_experiment

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SUMMARY = []
_RUNS = {}


def run(config):
    """Run a shipped config once per session; returns (result, seconds)."""
    if config not in _RUNS:
        cfg = parse_config(CONFIGS / config)
        t0 = time.perf_counter()
        res = run_experiment(cfg.experiment, cfg.params, make_rng(cfg.seed))
        _RUNS[config] = (cfg, res, time.perf_counter() - t0)
    return _RUNS[config]


def table(res, name):
    return list(csv.DictReader(io.StringIO(res.tables[name])))


def report(n, title, ok, detail):
    line = f"[{'pass' if ok else 'FAIL'}] criterion {n}: {title}: {detail}"
    SUMMARY.append(line)
    print(line)
    assert ok, line


def failed_checks(res):
    return [c.name for c in res.checks if not c.passed]


def test_criterion_1_axiom_suite():
    cfg, res, secs = run("axioms.ini")
    assert cfg["trials"] == 1000 and set(cfg["p"]) == {1.5, 2.0, 3.0} and set(cfg["n_values"]) == {2, 3}
    worst = min(row.worst_slack for rep in res.reports.values() for row in rep.rows.values())
    trials = min(row.trials for rep in res.reports.values() for row in rep.rows.values())
    ok = worst >= -1e-9 and trials == 1000 and not failed_checks(res) and secs < 30
    report(1, "axiom suite", ok, f"worst slack {worst:.3g} over {trials} trials per axiom, {secs:.1f} s")


def test_criterion_2_generator_and_boundary():
    cfg, res, secs = run("currents.ini")
    rows = table(res, "currents.csv")
    resid = max(float(r["generator_residual"]) for r in rows)
    gaps = []
    for r in rows:
        b, e, g = float(r["boundary"]), float(r["energy_route"]), float(r["generator_route"])
        scale = max(abs(b), abs(e), abs(g), 1e-300)
        gaps.append(max(abs(b - e), abs(b - g)) / scale)
    sizes = [int(r["vertices"]) for r in rows]
    ok = (len(rows) == 100 and max(sizes) <= 50 and resid <= 1e-8 and max(gaps) <= 1e-8
          and not failed_checks(res) and secs < 20)
    report(2, "generator and boundary identities", ok,
           f"pairing residual {resid:.2g}, boundary gap {max(gaps):.2g} on {len(rows)} graphs, {secs:.1f} s")


def test_criterion_3_scalar_eid():
    cfg, res, secs = run("eid-scalar.ini")
    assert cfg["points"] == 4096 and cfg["cantor_level"] == 8
    bins = max(float(r["rel_err"]) for r in table(res, "scalar_bins.csv"))
    cant = table(res, "cantor.csv")
    masses = [float(r["mass"]) for r in cant]
    prop = max(abs(float(r["mass"]) - float(r["oracle_mass"])) / float(r["oracle_mass"]) for r in cant)
    eps = [float(r["eps"]) for r in cant]
    ok = (bins <= 0.05 and prop <= 0.05 and all(b < a for a, b in zip(masses, masses[1:]))
          and np.allclose(eps, [3.0 ** -e for e in range(4, 9)]) and secs < 30)
    report(3, "scalar EID", ok, f"bin error {bins:.3g}, Cantor mass error {prop:.3g}, {secs:.1f} s")


def test_criterion_4_planar_eid():
    cfg, res, secs = run("eid-planar.ini")
    ind, deg = res.reports["independent"], res.reports["degenerate"]
    s = ind.profile
    # a drop of at least 40% per step: s_{i+1} <= 0.6 s_i, which also holds once s reaches 0
    steps = list(zip(s, s[1:]))
    fracs = [sm / t for _, _, _, sm, t in deg.rows]
    ok = len(steps) >= 3 and all(b <= 0.6 * a for a, b in steps) and min(fracs) >= 0.5 and secs < 120
    report(4, "planar EID and singularity", ok,
           f"independent s_C(h) {[float(f'{v:.3g}') for v in s]}, "
           f"degenerate fractions {[round(f, 3) for f in fracs]}, {secs:.1f} s")


def test_criterion_5_variational_approximation():
    cfg, res, secs = run("approx.ini")
    assert cfg["size"] == 512
    names = {c.name: c for c in res.checks}
    slab = table(res, "slab.csv")[0]
    log = res.reports["convergence"]
    ok = (names["saturated gradient returns f"].passed and names["1D quadrature oracle"].passed
          and float(slab["lip_in_slab"]) <= float(slab["cap"]) and len(log.rows) == 5 and log.monotone()
          and not failed_checks(res) and secs < 60)
    report(5, "variational approximation", ok,
           f"{names['saturated gradient returns f'].detail}; {names['1D quadrature oracle'].detail}; "
           f"slab Lip {float(slab['lip_in_slab']):.4f} <= {float(slab['cap']):.4f}; {secs:.1f} s")


def test_criterion_6_cone_machinery():
    cfg, res, secs = run("cones.ini")
    corpus = [r for r in table(res, "cone_null.csv") if r["set"] != "aligned-line-control"]
    viol = sum(float(r["total_violation"]) for r in corpus)
    ug = table(res, "upper_gradient.csv")[0]
    dev = float(ug["max_deviation_on_K"])
    ok = (all(int(r["curves"]) >= 1000 for r in corpus) and viol == 0.0 and int(ug["directions"]) == 720
          and dev <= 1e-3 and not failed_checks(res) and secs < 20)
    report(6, "cone machinery", ok, f"corpus violation {viol}, sin(eps) deviation {dev:.2g}, {secs:.1f} s")


def test_criterion_7_preiss_sequence():
    cfg, res, secs = run("preiss.ini")
    rows = table(res, "preiss.csv")
    seg = [r for r in rows if r["case"] == "segment"]
    ident = [r for r in rows if r["case"] == "identity"]
    d1 = max(float(r["max_d1_on_K"]) for r in seg)
    lip = max(float(r["lip"]) for r in seg)
    last = seg[-1]
    integral, total = float(last["integral"]), float(last["total_mass"])
    keep = float(ident[-1]["integral"]) / float(ident[-1]["total_mass"])
    ok = (d1 <= 2 / 3 + 0.05 and lip <= math.sqrt(2) + 0.05 and integral <= (2 / 3 + 0.05) * total
          and keep >= 0.999 and secs < 90)
    report(7, "Preiss sequence", ok,
           f"max |d1| on K {d1:.4f}, Lip {lip:.4f}, integral/total {integral / total:.4f}, "
           f"identity keeps {keep:.6f}, {secs:.1f} s")


def test_criterion_8_gasket_pipeline():
    cfg, res, secs = run("gasket.ini")
    assert cfg["max_level"] == 8 and cfg["min_level"] == 3 and cfg["threshold"] == 0.05
    checks = {c.name: c for c in res.checks}
    energy = max(float(r["rel_err"]) for r in table(res, "energy.csv"))
    fr = [p.fractions[0.05] for p in res.reports["eigenratio"]]
    mdim = table(res, "mdim.csv")
    ests = [int(r["estimate"]) for r in mdim]
    ok = (checks["harmonic matrix product oracle at m <= 2"].passed and energy <= 1e-10
          and [p.m for p in res.reports["eigenratio"]] == list(range(3, 9))
          and all(b >= a for a, b in zip(fr, fr[1:]))
          and [int(r["m"]) for r in mdim] == [6, 7, 8] and all(e == 1 for e in ests)
          and checks["estimate below d_H / alpha"].passed and secs < 120)
    report(8, "gasket pipeline", ok,
           f"energy error {energy:.2g}, tau=0.05 fractions {[round(f, 4) for f in fr]}, "
           f"estimates {ests}, {secs:.1f} s")


def test_criterion_9_reproducibility():
    configs = sorted(p.name for p in CONFIGS.glob("*.ini"))
    differing = []
    t0 = time.perf_counter()
    for name in configs:
        cfg, first, _ = run(name)
        again = run_experiment(cfg.experiment, cfg.params, make_rng(cfg.seed))
        if set(first.tables) != set(again.tables):
            differing.append(name)
            continue
        differing += [f"{name}:{t}" for t in first.tables
                      if first.tables[t].encode() != again.tables[t].encode()]
    secs = time.perf_counter() - t0
    report(9, "reproducibility", not differing,
           f"{len(configs)} configs re-run, differing tables {differing or 'none'}, {secs:.1f} s")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
