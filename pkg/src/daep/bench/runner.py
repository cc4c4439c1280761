"""One exploration run: the fixed start-up protocol followed by the
plan-execute loop, with logging and metric extraction."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..errors import ExpansionStarved, InvalidStart, IoError, Unreachable
from ..gain import PlannerWeights, SensorModel
from ..geometry import PlanStep, Pose, wrap_angle, yaw_difference
from ..global_planner import (CandidateSet, GlobalConfig, GlobalStats, RoadGraph, cache_candidates,
                              escape_path, plan_to_first, rank_global_goals)
from ..local_planner import LocalPlannerConfig, best_node, branch_to, expand_tree, timed_clear
from ..prediction import FrequencyGrid, KalmanConfig, Predictor, TrackManager, dfm_record
from ..sim.world import DepthCamera, World, observe_obstacles, render_depth
from ..sim.worlds import get_scenario
from ..voxelmap import VoxelGrid, coverage, insert_scan
from .config import RunConfig
from .metrics import RunMetrics

log = logging.getLogger(__name__)


def _r(v, nd=6):
    return round(float(v), nd)


@dataclass
class _Timing:
    planning_wall: float = 0.0
    total_wall: float = 0.0
    plan_calls: int = 0


class Executive:
    """Owns the world, the agent's map and the planners for a single run."""

    def __init__(self, config: RunConfig, event_log=None):
        config.validate()
        self.config = config
        self.variant = config.variant
        self.scenario = get_scenario(config.scenario)
        self.world = World(self.scenario, dynamic=config.mode == "dynamic", start_index=config.start)
        self.grid = VoxelGrid(self.scenario.bbox_min, self.scenario.bbox_max, self.scenario.resolution)
        self.sensor = SensorModel()
        self.camera = DepthCamera(self.sensor)
        self.weights = PlannerWeights(zeta=self.variant.zeta)
        self.predictor = Predictor(KalmanConfig(), frozen=not self.variant.predict)
        self.local_cfg = LocalPlannerConfig(max_extensions=config.max_extensions)
        self.global_cfg = GlobalConfig()
        self.tracks = TrackManager(KalmanConfig())
        self.dfm = FrequencyGrid(self.scenario.bbox_min[:2], self.scenario.bbox_max[:2], 1.0)
        self.candidates = CandidateSet(self.global_cfg.dedup_radius)
        self.graph = RoadGraph()
        self.rng = np.random.default_rng(config.seed)
        self.event_log = event_log
        self.dt = self.world.dt
        self.scan_every = max(1, int(round(config.scan_period / self.dt)))
        self.dfm_every = max(1, int(round(config.dfm_period / self.dt)))
        self.series_every = max(1, int(round(config.series_period / self.dt)))
        self.pt = 0.0
        self.series: list = []
        self.sample_min = np.full(3, np.inf)
        self.sample_max = np.full(3, -np.inf)
        self.cand_min = np.full(3, np.inf)
        self.cand_max = np.full(3, -np.inf)
        self.timing = _Timing()
        self.pending_events: list = []
        self.prev_branch: list = []
        self.limit = float(config.time_limit)
        self.threat_horizon = 3.0
        self.evade_kappas = (1.0, 0.0)
        self.threat_kappa = 0.0
        self._mask_idx = np.flatnonzero(self.scenario.mappable_mask().ravel())

    # ----- bookkeeping -------------------------------------------------
    @property
    def t(self) -> float:
        return self.world.t

    def coverage(self) -> float:
        if self._mask_idx.size == 0:
            return 0.0
        return 100.0 * np.count_nonzero(self.grid.cells.ravel()[self._mask_idx]) / self._mask_idx.size

    def emit(self, event: dict) -> None:
        self.pending_events.append(event)

    def _flush_log(self) -> None:
        if self.event_log is None:
            self.pending_events = []
            return
        a = self.world.agent
        rec = {
            "t": _r(self.t),
            "agent": [_r(a.position[0]), _r(a.position[1]), _r(a.position[2]), _r(a.yaw)],
            "obstacles": [[o.id, _r(o.position[0]), _r(o.position[1]), _r(o.position[2])]
                          for o in self.world.obstacles],
            "events": self.pending_events,
        }
        self.event_log.write(json.dumps(rec, separators=(",", ":")) + "\n")
        self.pending_events = []

    def sense(self) -> None:
        pose = self.world.agent.pose
        scan = render_depth(self.world, pose, self.camera)
        insert_scan(self.grid, scan.origin, scan.hits, scan.misses, self.sensor.range, scan.miss_ranges)
        if self.variant.use_tracks and self.world.obstacles:
            self.tracks.update(observe_obstacles(self.world, pose), self.t)

    def tick(self) -> None:
        for ev in self.world.step():
            ev = {k: (_r(v) if isinstance(v, float) else v) for k, v in ev.items()}
            self.emit(ev)
        ticks = self.world.ticks
        if ticks % self.scan_every == 0:
            self.sense()
        if ticks % self.dfm_every == 0 and self.variant.use_tracks and self.tracks.tracks:
            dfm_record(self.dfm, [tr.position for tr in self.tracks.snapshot() if tr.last_update == self.t], self.t)
        if ticks % self.series_every == 0:
            self.series.append((_r(self.t), _r(self.coverage()), _r(self.world.agent.path_length),
                                self.world.collision_count))
        if ticks % self.scan_every == 0 or self.pending_events:
            self._flush_log()

    @property
    def out_of_time(self) -> bool:
        return self.t >= self.limit - 1e-9

    def hover(self, duration: float) -> None:
        n = max(1, int(math.ceil(duration / self.dt - 1e-9)))
        saved = self.world.agent.plan
        self.world.agent.plan = type(saved)()
        for _ in range(n):
            if self.out_of_time:
                break
            self.tick()
        self.world.agent.plan = saved

    def charge(self, seconds: float) -> None:
        """Hold position while the planner 'thinks' for the modeled duration."""
        self.pt += min(seconds, max(0.0, self.limit - self.t))
        self.hover(seconds)

    # ----- safety ------------------------------------------------------
    def _snapshot_tracks(self):
        return self.tracks.snapshot() if self.variant.use_tracks else []

    def step_safe(self, target: Pose, tracks, dwell: float | None = None) -> bool:
        """Timed check of going from the current pose to ``target`` starting
        now and then holding there for ``dwell`` seconds."""
        a = self.world.agent
        p0 = a.position
        p1 = target.position
        move_end = self.t + float(np.linalg.norm(p1 - p0)) / a.v_lin
        until = move_end + yaw_difference(a.yaw, target.yaw) / a.v_ang + (self.local_cfg.dwell if dwell is None else dwell)
        return timed_clear(p0, p1, self.t, move_end, until, tracks, self.predictor, self.local_cfg.agent_box,
                           self.local_cfg.check_step)

    def execute(self, step: PlanStep, dwell: float | None = None) -> bool:
        """Fly one step; returns False when aborted for safety or time."""
        a = self.world.agent
        a.command([step])
        while not a.idle:
            if self.out_of_time:
                a.stop()
                return False
            self.tick()
            if a.idle:
                break
            if self.world.ticks % self.scan_every == 0 and self.variant.use_tracks:
                if not self.step_safe(step.target, self._snapshot_tracks(), dwell):
                    a.stop()
                    self.emit({"type": "abort", "t": _r(self.t)})
                    return False
        return True

    # ----- protocol ----------------------------------------------------
    def startup(self) -> None:
        a = self.world.agent
        p = a.position
        up = Pose(p[0], p[1], p[2] + 1.0, 0.0)
        a.command([PlanStep(up, self.t, self.t + 1.0 / a.v_lin)])
        while not a.idle and not self.out_of_time:
            self.tick()
        for k in (1, 2, 3, 4):
            target = Pose(up.x, up.y, up.z, wrap_angle(k * math.pi / 2))
            a.command([PlanStep(target, self.t, self.t + (math.pi / 2) / a.v_ang)])
            while not a.idle and not self.out_of_time:
                self.tick()
        self.sense()

    # ----- planning ----------------------------------------------------
    def plan_local(self, tracks):
        pose = self.world.agent.pose
        wall = time.perf_counter()
        try:
            tree = expand_tree(pose, self.t, self.grid, tracks, self.dfm, self.weights, rng=self.rng,
                               config=self.local_cfg, sensor=self.sensor, predictor=self.predictor,
                               seed_branch=self.prev_branch)
        except ExpansionStarved as exc:
            tree = exc.tree
        self.timing.planning_wall += time.perf_counter() - wall
        self.timing.plan_calls += 1
        self.sample_min = np.minimum(self.sample_min, tree.sample_min)
        self.sample_max = np.maximum(self.sample_max, tree.sample_max)
        cache_candidates(self.candidates, tree, self.global_cfg.min_gain, self.t)
        gstats = GlobalStats()
        self.graph.add_tree(tree, self.grid, self.global_cfg, gstats)
        for c in self.candidates:
            self.cand_min = np.minimum(self.cand_min, c.pose.position)
            self.cand_max = np.maximum(self.cand_max, c.pose.position)
        cost = self.config.cost_model.local(tree.stats) + gstats.static_checks * self.config.cost_model.per_static_check
        return tree, cost

    def go_global(self, tracks) -> str:
        """Returns 'finished', 'moved' or 'waiting'."""
        pose = self.world.agent.pose
        gstats = GlobalStats()
        wall = time.perf_counter()
        self.graph.add_vertex(pose.position, self.grid, self.global_cfg, gstats)
        ranked = rank_global_goals(self.candidates, self.grid, tracks, self.dfm, self.weights, self.t,
                                   start=pose, graph=self.graph, config=self.global_cfg, sensor=self.sensor,
                                   predictor=self.predictor, stats=gstats)
        path = None
        goal = None
        if ranked:
            try:
                i, path = plan_to_first(pose, [c.pose for _, c in ranked], self.graph, self.grid, tracks, self.t,
                                        config=self.global_cfg, predictor=self.predictor, stats=gstats)
                goal = ranked[i][1]
            except Unreachable:
                pass
        self.timing.planning_wall += time.perf_counter() - wall
        self.timing.plan_calls += 1
        self.emit({"type": "candidates", "t": _r(self.t),
                   "set": [[_r(v, 3) for v in c.pose] + [_r(c.cached_gain, 3)] for c in self.candidates]})
        self.charge(self.config.cost_model.global_(gstats))
        if goal is None:
            if len(self.candidates):
                self.emit({"type": "global", "t": _r(self.t), "result": "unreachable",
                           "candidates": len(self.candidates)})
                return "waiting"
            self.emit({"type": "global", "t": _r(self.t), "result": "none"})
            return "finished"
        self.emit({"type": "global", "t": _r(self.t), "result": "goal",
                   "goal": [_r(v) for v in goal.pose], "gain": _r(goal.cached_gain),
                   "steps": len(path), "candidates": len(self.candidates)})
        if not path:
            self.candidates.remove(goal, blacklist=True)
            return "moved"
        for k, step in enumerate(path):
            # intermediate waypoints are passed through, only the goal is held
            dwell = None if k == len(path) - 1 else 0.0
            if not self.step_safe(step.target, self._snapshot_tracks(), dwell):
                self.emit({"type": "global_hold", "t": _r(self.t)})
                return "waiting"
            if not self.execute(step, dwell):
                return "waiting"
        if float(np.linalg.norm(self.world.agent.position - goal.pose.position)) <= self.global_cfg.visit_radius:
            self.candidates.remove(goal, blacklist=True)
        return "moved"

    def threatened(self, tracks, horizon: float, predictor: Predictor | None = None) -> bool:
        a = self.world.agent
        p = a.position
        return not timed_clear(p, p, self.t, self.t, self.t + horizon, tracks, predictor or self.predictor,
                               self.local_cfg.agent_box, self.local_cfg.check_step)

    def evade(self) -> bool:
        """If holding position is predicted unsafe, retreat along the roadmap
        to the nearest vertex that stays clear.

        Refuges are searched with the full inflation first and then with
        progressively tighter volumes, so a crowded corridor still yields
        the least risky move instead of none.
        """
        tracks = self._snapshot_tracks()
        if not tracks:
            return False
        levels = [(self.predictor.kappa, self.local_cfg.dwell + 2.0)] + [(k, 3.0) for k in self.evade_kappas]
        if not self.threatened(tracks, self.threat_horizon, replace(self.predictor, kappa=self.threat_kappa)):
            return False
        gstats = GlobalStats()
        a = self.world.agent
        self.graph.add_vertex(a.position, self.grid, self.global_cfg, gstats)
        path = None
        for kappa, hold in levels:
            path = escape_path(a.pose, self.graph, self.grid, tracks, self.t, hold=hold, config=self.global_cfg,
                               predictor=replace(self.predictor, kappa=kappa), stats=gstats)
            if path:
                break
        self.pt += self.config.cost_model.global_(gstats)
        if not path:
            self.emit({"type": "evade", "t": _r(self.t), "result": "none"})
            return False
        self.emit({"type": "evade", "t": _r(self.t), "result": "path", "kappa": kappa, "steps": len(path),
                   "target": [_r(v) for v in path[-1].target]})
        for step in path:
            a.command([step])
            while not a.idle and not self.out_of_time:
                self.tick()
        return True

    def loop(self) -> str:
        starved_hover = 0.5
        while not self.out_of_time:
            if self.evade():
                self.prev_branch = []
                continue
            tracks = self._snapshot_tracks()
            try:
                tree, cost = self.plan_local(tracks)
            except InvalidStart:
                self.emit({"type": "invalid_start", "t": _r(self.t)})
                self.charge(starved_hover)
                continue
            self.charge(cost)
            if self.out_of_time:
                break
            best = best_node(tree)
            if best is not None and best.score >= self.local_cfg.min_score:
                steps = branch_to(tree, best)
                self.prev_branch = [s.target.position for s in steps[1:]]
                step = steps[0]
                self.emit({"type": "plan", "t": _r(self.t), "nodes": len(tree), "score": _r(best.score),
                           "gain": _r(best.dynamic_gain), "toa": _r(best.toa),
                           "target": [_r(v) for v in step.target]})
                if not self.step_safe(step.target, self._snapshot_tracks()):
                    self.prev_branch = []
                    self.emit({"type": "hold", "t": _r(self.t)})
                    continue
                if not self.execute(step):
                    self.prev_branch = []
                continue
            self.prev_branch = []
            result = self.go_global(tracks)
            if result == "finished":
                return "finished"
            if result == "waiting":
                self.hover(starved_hover)
        return "time_limit"


def run_experiment(config: RunConfig, out_dir=None) -> RunMetrics:
    """Run one experiment; when ``out_dir`` is given, write the event log,
    metrics, series and wall-clock timing there."""
    config.validate()
    wall0 = time.perf_counter()
    out = Path(out_dir) if out_dir is not None else None
    fh = None
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            fh = open(out / "events.jsonl", "w")
        except OSError as exc:
            raise IoError(f"cannot write to {out}: {exc}") from exc
    ex = Executive(config, fh)
    status, termination, reason = "ok", "", ""
    try:
        ex.startup()
        termination = ex.loop()
    except Exception as exc:  # a crashed run is reported, never dropped
        log.exception("run %s failed", config.run_id)
        status, termination, reason = "failed", "error", f"{type(exc).__name__}: {exc}"
    finally:
        if fh is not None:
            ex._flush_log() if ex.pending_events else None
            fh.close()
    ex.timing.total_wall = time.perf_counter() - wall0
    w = ex.world
    cov = ex.coverage()
    if not ex.series or ex.series[-1][0] != _r(w.t):
        ex.series.append((_r(w.t), _r(cov), _r(w.agent.path_length), w.collision_count))
    ext = np.subtract(ex.scenario.bbox_max, ex.scenario.bbox_min)

    def extent(lo, hi):
        if not np.all(np.isfinite(lo)):
            return [0.0, 0.0, 0.0]
        return [_r(v) for v in (hi - lo) / ext]

    m = RunMetrics(
        scenario=config.scenario, variant=config.planner, mode=config.mode, start=config.start, seed=config.seed,
        C=_r(cov), T=_r(w.t), PL=_r(w.agent.path_length), PT=_r(ex.pt), NOC=w.collision_count,
        status=status, termination=termination, failure_reason=reason,
        collision_intervals=[[k, _r(s), None if e is None else _r(e)] for k, s, e in w.collision_intervals],
        sample_extent=extent(ex.sample_min, ex.sample_max),
        candidate_extent=extent(ex.cand_min, ex.cand_max),
        series=[list(s) for s in ex.series],
    )
    if out is not None:
        write_run(m, config, out, ex.timing)
    return m


def write_run(m: RunMetrics, config: RunConfig, out: Path, timing: _Timing | None = None) -> None:
    try:
        (out / "metrics.json").write_text(json.dumps({"config": config.to_dict(), **m.to_dict()}, indent=2) + "\n")
        with open(out / "series.csv", "w") as f:
            f.write("t,coverage,path_length,collisions\n")
            for t, c, pl, n in m.series:
                f.write(f"{t!r},{c!r},{pl!r},{n}\n")
        if timing is not None:
            (out / "timing.json").write_text(json.dumps({
                "planning_wall_s": timing.planning_wall, "total_wall_s": timing.total_wall,
                "plan_calls": timing.plan_calls}, indent=2) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write run outputs to {out}: {exc}") from exc
