"""Command line entry point: ``daep-bench run|sweep|report``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from ..errors import ConfigError, DaepError
from .config import MODES, VARIANTS, RunConfig
from .metrics import aggregate_groups
from .report import load_runs, report
from .runner import run_experiment

OUTPUT_ROOT_ENV = "DAEP_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "daep_runs"


def output_root(arg: str | None = None) -> Path:
    return Path(arg or os.environ.get(OUTPUT_ROOT_ENV) or DEFAULT_OUTPUT_ROOT)


def _summary_line(m) -> str:
    line = (f"{m.scenario} {m.variant} {m.mode} start={m.start} seed={m.seed}: C={m.C:.2f}% T={m.T:.1f}s "
            f"PL={m.PL:.1f}m PT={m.PT:.1f}s NOC={m.NOC} ({m.termination})")
    if m.failed:
        line += f" FAILED: {m.failure_reason}"
    return line


def load_suite(path) -> list[RunConfig]:
    """Expand a suite file into run configs.

    The file is a JSON object with lists ``scenarios``, ``planners`` and
    ``modes`` plus optional ``repeats``, ``seed``, ``start`` and
    ``time_limit``; every combination is run ``repeats`` times.
    """
    try:
        spec = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read suite {path}: {exc}") from exc
    if not isinstance(spec, dict):
        raise ConfigError("suite must be a JSON object")
    unknown = set(spec) - {"scenarios", "planners", "modes", "repeats", "seed", "start", "time_limit"}
    if unknown:
        raise ConfigError(f"unknown suite keys: {sorted(unknown)}")
    configs = []
    for scen in spec.get("scenarios", []):
        for planner in spec.get("planners", ["daep"]):
            for mode in spec.get("modes", ["dynamic"]):
                base = RunConfig(scen, planner, mode, start=int(spec.get("start", 0)), seed=int(spec.get("seed", 0)),
                                 time_limit=float(spec.get("time_limit", 1200.0)),
                                 repeats=int(spec.get("repeats", 5)))
                base.validate()
                configs.extend(base.repeat(r) for r in range(base.repeats))
    if not configs:
        raise ConfigError("suite selects no runs")
    return configs


def _run_one(args):
    config, root = args
    return run_experiment(config, root / config.run_id)


def cmd_run(ns) -> int:
    config = RunConfig(ns.scenario, ns.planner, ns.mode, start=ns.start, seed=ns.seed, time_limit=ns.time_limit,
                       repeats=1)
    config.validate()
    root = output_root(ns.out)
    m = run_experiment(config, root / config.run_id)
    print(_summary_line(m))
    print(f"wrote {root / config.run_id}")
    return 1 if m.failed else 0


def cmd_sweep(ns) -> int:
    configs = load_suite(ns.suite)
    root = output_root(ns.out)
    jobs = [(c, root) for c in configs]
    if ns.jobs > 1:
        with ProcessPoolExecutor(ns.jobs) as pool:
            runs = list(pool.map(_run_one, jobs))
    else:
        runs = [_run_one(j) for j in jobs]
    for m in runs:
        print(_summary_line(m))
    paths = report(aggregate_groups(runs), root / "report", runs)
    print(f"wrote {len(runs)} runs and {len(paths)} report files under {root}")
    return 0


def cmd_report(ns) -> int:
    runs = load_runs(ns.in_dir)
    if not runs:
        print(f"no runs found under {ns.in_dir}", file=sys.stderr)
        return 1
    aggs = aggregate_groups(runs)
    paths = report(aggs, ns.out, runs)
    for a in aggs:
        stats = " ".join(f"{k}={a.mean[k]:.2f}±{a.std[k]:.2f}" for k in a.mean)
        print(f"{a.scenario} {a.variant} {a.mode} runs={a.runs} failed={a.failed} {stats}")
    print(f"wrote {len(paths)} files to {ns.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="daep-bench", description="Run and summarize exploration experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a single experiment")
    r.add_argument("--scenario", required=True)
    r.add_argument("--planner", default="daep", choices=sorted(VARIANTS))
    r.add_argument("--mode", default="dynamic", choices=MODES)
    r.add_argument("--start", type=int, default=0)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--time-limit", type=float, default=1200.0)
    r.add_argument("--out", help=f"output root (default ${OUTPUT_ROOT_ENV} or ./{DEFAULT_OUTPUT_ROOT})")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run every experiment of a suite file")
    s.add_argument("--suite", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    rep = sub.add_parser("report", help="aggregate finished runs")
    rep.add_argument("--in", dest="in_dir", required=True)
    rep.add_argument("--out", required=True)
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return ns.func(ns)
    except DaepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
