"""Aggregated tables and plot-ready series from finished runs."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from ..errors import IoError
from .metrics import METRICS, Aggregate, RunMetrics

CSV_COLUMNS = ("scenario", "variant", "mode", "runs", "failed") + tuple(
    f"{m}_{stat}" for m in METRICS for stat in ("mean", "std"))


def _num(v: float) -> str:
    return "nan" if math.isnan(v) else repr(float(v))


def _json_num(v: float):
    return None if math.isnan(v) else float(v)


def summary_csv(aggregates) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for a in aggregates:
        row = [a.scenario, a.variant, a.mode, a.runs, a.failed]
        for m in METRICS:
            row += [_num(a.mean[m]), _num(a.std[m])]
        w.writerow(row)
    return buf.getvalue()


def summary_json(aggregates) -> str:
    out = []
    for a in aggregates:
        out.append({
            "scenario": a.scenario, "variant": a.variant, "mode": a.mode, "runs": a.runs, "failed": a.failed,
            "mean": {m: _json_num(a.mean[m]) for m in METRICS},
            "std": {m: _json_num(a.std[m]) for m in METRICS},
            "failures": a.failures,
        })
    return json.dumps(out, indent=2, sort_keys=True) + "\n"


def series_id(r: RunMetrics) -> str:
    return f"{r.scenario}__{r.variant}__{r.mode}__s{r.start}__seed{r.seed}"


def report(aggregates, out_dir, runs=()) -> list[Path]:
    """Write summary.csv, summary.json and one series/<run>.csv of
    (t, coverage) pairs per run. Returns the written paths, sorted.

    Output depends only on the inputs, so identical inputs give
    byte-identical files. Raises IoError when ``out_dir`` cannot be written.
    """
    out = Path(out_dir)
    files = {out / "summary.csv": summary_csv(aggregates), out / "summary.json": summary_json(aggregates)}
    for r in runs:
        lines = ["t,coverage"] + [f"{float(s[0])!r},{float(s[1])!r}" for s in r.series]
        files[out / "series" / f"{series_id(r)}.csv"] = "\n".join(lines) + "\n"
    try:
        for path, text in files.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", newline="") as f:
                f.write(text)
    except OSError as exc:
        raise IoError(f"cannot write report to {out}: {exc}") from exc
    return sorted(files)


def read_summary_csv(path) -> list[Aggregate]:
    """Parse a summary.csv back into aggregates (failure lists are not stored there)."""
    try:
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    out = []
    for row in rows:
        mean = {m: float(row[f"{m}_mean"]) for m in METRICS}
        std = {m: float(row[f"{m}_std"]) for m in METRICS}
        out.append(Aggregate(row["scenario"], row["variant"], row["mode"], int(row["runs"]), int(row["failed"]),
                             mean, std))
    return out


def load_run(run_dir) -> RunMetrics:
    """Read a run directory written by run_experiment (metrics.json plus series.csv)."""
    d = Path(run_dir)
    try:
        data = json.loads((d / "metrics.json").read_text())
        series = []
        sp = d / "series.csv"
        if sp.exists():
            with open(sp, newline="") as f:
                for row in csv.DictReader(f):
                    series.append([float(row["t"]), float(row["coverage"]), float(row["path_length"]),
                                   int(row["collisions"])])
    except OSError as exc:
        raise IoError(f"cannot read run in {d}: {exc}") from exc
    data.pop("config", None)
    data["series"] = series
    return RunMetrics.from_dict(data)


def load_runs(in_dir) -> list[RunMetrics]:
    """All runs below ``in_dir``, in sorted directory order."""
    root = Path(in_dir)
    if not root.is_dir():
        raise IoError(f"{root} is not a directory")
    return [load_run(p.parent) for p in sorted(root.rglob("metrics.json"))]
