from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import InvalidArgument

METRICS = ("C", "T", "PL", "PT", "NOC")


@dataclass
class RunMetrics:
    scenario: str
    variant: str
    mode: str
    start: int
    seed: int
    C: float = 0.0  # percent
    T: float = 0.0  # s
    PL: float = 0.0  # m
    PT: float = 0.0  # s
    NOC: int = 0
    status: str = "ok"  # ok | failed
    termination: str = ""  # finished | time_limit | error
    failure_reason: str = ""
    collision_intervals: list = field(default_factory=list)  # [key, start, end]
    sample_extent: list = field(default_factory=list)  # fraction of bbox extent per axis
    candidate_extent: list = field(default_factory=list)
    series: list = field(default_factory=list)  # (t, coverage, path length, collisions so far)

    @property
    def failed(self) -> bool:
        return self.status != "ok"

    def to_dict(self, with_series: bool = False) -> dict:
        d = asdict(self)
        if not with_series:
            d.pop("series")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunMetrics":
        return cls(**d)


@dataclass
class Aggregate:
    scenario: str  # a name, or "+"-joined names when several scenarios were pooled
    variant: str
    mode: str
    runs: int
    failed: int
    mean: dict
    std: dict
    failures: list = field(default_factory=list)


def _mean_std(values) -> tuple[float, float]:
    a = np.asarray(values, dtype=np.float64)
    return float(a.mean()), float(a.std(ddof=0))


def aggregate(runs) -> Aggregate:
    """Mean and population standard deviation of each metric.

    Runs are averaged per scenario first; with several scenarios the
    statistics are then taken over the per-scenario means. Failed runs are
    counted and listed but never averaged in.
    """
    runs = list(runs)
    if not runs:
        raise InvalidArgument("aggregate needs at least one run")
    ok = [r for r in runs if not r.failed]
    failures = [{"scenario": r.scenario, "start": r.start, "seed": r.seed, "reason": r.failure_reason}
                for r in runs if r.failed]
    scenarios = sorted({r.scenario for r in runs})
    variants = sorted({r.variant for r in runs})
    modes = sorted({r.mode for r in runs})
    mean, std = {}, {}
    by_scen = defaultdict(list)
    for r in ok:
        by_scen[r.scenario].append(r)
    for m in METRICS:
        if not ok:
            mean[m], std[m] = math.nan, math.nan
            continue
        if len(by_scen) == 1:
            mean[m], std[m] = _mean_std([getattr(r, m) for r in ok])
        else:
            per = [float(np.mean([getattr(r, m) for r in rs])) for _, rs in sorted(by_scen.items())]
            mean[m], std[m] = _mean_std(per)
    return Aggregate("+".join(scenarios), "+".join(variants), "+".join(modes), len(runs),
                     len(runs) - len(ok), mean, std, failures)


def group_key(r: RunMetrics) -> tuple[str, str, str]:
    return r.scenario, r.variant, r.mode


def aggregate_groups(runs) -> list[Aggregate]:
    """One aggregate per (scenario, variant, mode), in sorted key order."""
    groups = defaultdict(list)
    for r in runs:
        groups[group_key(r)].append(r)
    return [aggregate(groups[k]) for k in sorted(groups)]
