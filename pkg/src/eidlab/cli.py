"""Command line runner: ``eidlab <experiment> --config <path> [--seed N] [--out DIR]``.

Exit status 0 when every check passes, 1 when a check fails or the run
raises, 2 on usage or configuration errors.  Randomness comes from numpy's
Philox counter-based generator keyed by the 64-bit seed.
"""
from __future__ import annotations

import argparse
import json
import os
import platform
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ALIASES, EXPERIMENTS, ExperimentConfig, canonical_name, parse_config
from .errors import ResourceError, ValidationError
from .experiments import ExperimentResult, run_experiment

THREADS_ENV = "EIDLAB_THREADS"


def make_rng(seed):
    return np.random.Generator(np.random.Philox(key=seed))


def worker_cap(environ=None):
    """Worker count from EIDLAB_THREADS (default 1)."""
    env = os.environ if environ is None else environ
    raw = env.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValidationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def manifest(cfg: ExperimentConfig, result: ExperimentResult, wall, threads):
    return {
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "rng": "numpy.random.Philox(key=seed)",
        "inputs": [{"path": p, "sha256": d} for p, d in cfg.inputs],
        "parameters": {k: (str(v) if isinstance(v, Path) else v) for k, v in cfg.params.items()},
        "versions": {
            "eidlab": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "threads": threads,
        "wall_time_s": wall,
        "checks": [{"name": c.name, "pass": c.passed, "detail": c.detail} for c in result.checks],
        "status": "pass" if result.passed else "fail",
        "outputs": sorted(result.tables),
    }


def run(cfg: ExperimentConfig, out_dir, threads=1):
    """Run one experiment and publish its CSVs plus manifest.json into ``out_dir``.

    Files are staged in a sibling temporary directory and moved into place
    only after the run finishes, so a failed run leaves nothing behind.
    """
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".eidlab-", dir=out_dir.parent))
    try:
        t0 = time.perf_counter()
        result = run_experiment(cfg.experiment, cfg.params, make_rng(cfg.seed))
        wall = time.perf_counter() - t0
        for name, text in result.tables.items():
            (stage / name).write_text(text, encoding="utf-8")
        (stage / "manifest.json").write_text(
            json.dumps(manifest(cfg, result, wall, threads), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        out_dir.mkdir(exist_ok=True)
        for f in sorted(stage.iterdir()):
            os.replace(f, out_dir / f.name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    return result


def build_parser():
    names = sorted(set(EXPERIMENTS) | set(ALIASES))
    ap = argparse.ArgumentParser(prog="eidlab", description="Run an energy image density experiment.")
    ap.add_argument("experiment", help="one of: " + ", ".join(names))
    ap.add_argument("--config", required=True, help="experiment config file")
    ap.add_argument("--seed", type=int, help="64-bit seed, overrides the config")
    ap.add_argument("--out", default=None, help="output directory (default eidlab-out/<experiment>)")
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        name = canonical_name(args.experiment)
        cfg = parse_config(args.config, name)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ValidationError("--seed must fit in 64 unsigned bits")
            cfg.seed = args.seed
        threads = worker_cap()
    except (ValidationError, ResourceError) as exc:
        print(f"eidlab: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else Path("eidlab-out") / name
    try:
        result = run(cfg, out, threads)
    except Exception as exc:  # any failure inside the run is reported with its experiment
        print(f"eidlab: {name}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for c in result.checks:
        line = f"{'pass' if c.passed else 'FAIL'}  {c.name}"
        print(line + (f"  ({c.detail})" if c.detail and not c.passed else ""))
    print(f"{name}: {'pass' if result.passed else 'fail'} -> {out}")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
