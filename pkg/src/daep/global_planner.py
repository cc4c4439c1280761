"""Global exploration: a cache of high-gain poses harvested from local trees,
a roadmap over visited free space, and time-aware shortest paths on it."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, Unreachable
from .gain import PlannerWeights, SensorModel, border_boost, dynamic_gain, score, static_gain
from .geometry import PlanStep, Pose, yaw_difference
from .local_planner import AGENT_BOX, RrtTree, agent_reach, static_clear
from .prediction import FrequencyGrid, Predictor, dfm_query
from .voxelmap import VoxelGrid
from . import _kernels as K


@dataclass
class GlobalCandidate:
    pose: Pose
    cached_gain: float
    created_at: float
    last_reevaluated: float
    failures: int = 0

    def __post_init__(self):
        if self.cached_gain < 0:
            raise InvalidArgument("cached gain must be non-negative")


@dataclass(frozen=True)
class GlobalConfig:
    dedup_radius: float = 0.5
    min_gain: float = 0.5  # m^3
    vertex_radius: float = 0.5  # roadmap vertex merge distance
    connect_radius: float = 2.0  # roadmap edge length limit
    connect_k: int = 12
    max_failures: int = 3  # unreachable selections before a candidate is dropped
    visit_radius: float = 0.5  # a goal counts as visited within this distance
    v_lin: float = 0.5
    v_ang: float = 1.0
    agent_box: tuple = AGENT_BOX
    check_step: float = 0.1
    dwell: float = 0.0  # seconds a reached goal must stay clear
    unknown_blocks: bool = True


@dataclass
class GlobalStats:
    reevaluations: int = 0
    dijkstra_pops: int = 0
    static_checks: int = 0
    timed_checks: int = 0


class CandidateSet:
    """Candidates with no two closer than the dedup radius."""

    def __init__(self, dedup_radius: float = 0.5):
        self.dedup_radius = dedup_radius
        self.items: list[GlobalCandidate] = []
        self.blacklist: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def positions(self) -> np.ndarray:
        if not self.items:
            return np.zeros((0, 3))
        return np.asarray([c.pose.position for c in self.items])

    def blacklisted(self, p) -> bool:
        return any(float(np.linalg.norm(b - p)) <= self.dedup_radius for b in self.blacklist)

    def offer(self, cand: GlobalCandidate) -> bool:
        """Insert unless a nearby candidate has at least this gain; nearby weaker ones are replaced."""
        p = cand.pose.position
        if self.blacklisted(p):
            return False
        if self.items:
            d = np.linalg.norm(self.positions() - p, axis=1)
            near = np.flatnonzero(d <= self.dedup_radius)
            if any(self.items[i].cached_gain >= cand.cached_gain for i in near):
                return False
            for i in sorted(near, reverse=True):
                del self.items[i]
        self.items.append(cand)
        return True

    def remove(self, cand: GlobalCandidate, blacklist: bool = False) -> None:
        self.items = [c for c in self.items if c is not cand]
        if blacklist:
            self.blacklist.append(cand.pose.position)


def cache_candidates(candidates: CandidateSet, tree: RrtTree | None, min_gain: float = 0.5,
                     now: float = 0.0) -> CandidateSet:
    if tree is None:
        return candidates
    for node in tree.nodes[1:]:
        if node.dynamic_gain >= min_gain:
            candidates.offer(GlobalCandidate(node.pose, node.dynamic_gain, now, now))
    return candidates


@dataclass
class RoadGraph:
    """Incremental roadmap over visited free space."""

    vertices: list = field(default_factory=list)  # np.ndarray positions
    edges: dict = field(default_factory=dict)  # vertex -> {neighbor: length}

    def __post_init__(self):
        self._pos = np.zeros((max(64, len(self.vertices)), 3))
        for i, v in enumerate(self.vertices):
            self._pos[i] = v

    def positions(self) -> np.ndarray:
        return self._pos[:len(self.vertices)]

    def _append(self, p: np.ndarray) -> int:
        n = len(self.vertices)
        if n == self._pos.shape[0]:
            grown = np.zeros((2 * n, 3))
            grown[:n] = self._pos
            self._pos = grown
        self._pos[n] = p
        self.vertices.append(p.copy())
        return n

    def nearest(self, p, radius: float, k: int | None = None) -> list[int]:
        if not self.vertices:
            return []
        d = np.linalg.norm(self.positions() - np.asarray(p), axis=1)
        idx = np.flatnonzero(d <= radius)
        idx = idx[np.lexsort((idx, d[idx]))]
        return [int(i) for i in (idx if k is None else idx[:k])]

    def add_edge(self, a: int, b: int) -> None:
        if a == b:
            return
        length = float(np.linalg.norm(self.vertices[a] - self.vertices[b]))
        if length <= 0:
            return
        self.edges.setdefault(a, {})[b] = length
        self.edges.setdefault(b, {})[a] = length

    def add_vertex(self, p, grid: VoxelGrid | None = None, config: GlobalConfig = GlobalConfig(),
                   stats: GlobalStats | None = None) -> int:
        """Add ``p`` (or reuse a vertex within the merge radius) and connect it
        to up to k nearest vertices whose straight edge is statically clear."""
        p = np.asarray(p, dtype=np.float64)
        close = self.nearest(p, config.vertex_radius, 1)
        if close:
            return close[0]
        vid = self._append(p)
        self.edges.setdefault(vid, {})
        for j in self.nearest(p, config.connect_radius, config.connect_k + 1):
            if j == vid:
                continue
            if grid is not None:
                if stats is not None:
                    stats.static_checks += 1
                if not static_clear(grid, p, self.vertices[j], config.agent_box, config.unknown_blocks):
                    continue
            self.add_edge(vid, j)
        return vid

    def add_tree(self, tree: RrtTree, grid: VoxelGrid, config: GlobalConfig = GlobalConfig(),
                 stats: GlobalStats | None = None) -> None:
        """Add every tree node, keeping the tree's own edges between the
        vertices the nodes were merged into."""
        vid = [self.add_vertex(node.pose.position, grid, config, stats) for node in tree.nodes]
        for node in tree.nodes[1:]:
            a, b = vid[node.id], vid[node.parent]
            if a == b or b in self.edges.get(a, {}):
                continue
            if stats is not None:
                stats.static_checks += 1
            if static_clear(grid, self.vertices[a], self.vertices[b], config.agent_box, config.unknown_blocks):
                self.add_edge(a, b)

    def shortest_lengths(self, sources) -> dict[int, float]:
        """Dijkstra lengths from one vertex id or a {vertex: initial length} map."""
        dist = {sources: 0.0} if isinstance(sources, (int, np.integer)) else dict(sources)
        heap = [(d, v) for v, d in sorted(dist.items())]
        heapq.heapify(heap)
        done = set()
        while heap:
            d, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            for v, w in self.edges.get(u, {}).items():
                nd = d + w
                if nd < dist.get(v, math.inf) - 1e-12:
                    dist[v] = nd
                    heapq.heappush(heap, (nd, v))
        return dist


def _attach(graph: RoadGraph, p, grid: VoxelGrid, config: GlobalConfig, k: int | None = None) -> list[tuple[int, float]]:
    """Roadmap vertices reachable from ``p`` by a statically clear connector."""
    out = []
    for j in graph.nearest(p, config.connect_radius, config.connect_k if k is None else k):
        if static_clear(grid, p, graph.vertices[j], config.agent_box, config.unknown_blocks):
            out.append((j, float(np.linalg.norm(graph.vertices[j] - p))))
    return out


def rank_global_goals(candidates: CandidateSet, grid: VoxelGrid, tracks=(), dfm: FrequencyGrid | None = None,
                      weights: PlannerWeights = PlannerWeights(), now: float = 0.0, *,
                      start: Pose | None = None, graph: RoadGraph | None = None,
                      config: GlobalConfig = GlobalConfig(), sensor: SensorModel = SensorModel(),
                      predictor: Predictor = Predictor(), stats: GlobalStats | None = None
                      ) -> list[tuple[float, GlobalCandidate]]:
    """Re-evaluate every candidate at its estimated arrival time; return
    ``(score, candidate)`` pairs, best first.

    Candidates whose fresh gain is below ``min_gain`` are removed for good,
    unless only predicted obstacles push it below (the static gain still
    qualifies); those are kept but not ranked this time.
    Path lengths come from the roadmap when ``start`` and ``graph`` are given
    (straight-line distance otherwise); candidates without a roadmap
    connection are skipped and dropped after repeated misses.
    """
    stats = stats if stats is not None else GlobalStats()
    bbox = (grid.bbox_min, grid.bbox_max)
    lengths = None
    if start is not None and graph is not None and graph.vertices:
        lengths = graph.shortest_lengths(dict(_attach(graph, start.position, grid, config)))
    ranked = []
    for cand in list(candidates):
        stats.reevaluations += 1
        p = cand.pose.position
        if not grid.contains(p):
            candidates.remove(cand)
            continue
        if start is None:
            length = 0.0
        elif lengths is None:
            length = float(np.linalg.norm(p - start.position))
        else:
            length = math.inf
            for v, d1 in _attach(graph, p, grid, config, k=4):
                if v in lengths:
                    length = min(length, lengths[v] + d1)
            direct = float(np.linalg.norm(p - start.position))
            if direct <= config.connect_radius and direct < length and static_clear(
                    grid, start.position, p, config.agent_box, config.unknown_blocks):
                length = direct
        yaw0 = start.yaw if start is not None else cand.pose.yaw
        eta = now + (length / config.v_lin if math.isfinite(length) else 0.0)
        res = dynamic_gain(grid, p, eta, tracks, sensor, predictor)
        cand.cached_gain = res.gain
        cand.last_reevaluated = now
        if res.gain < config.min_gain:
            # only a shadow cast by predicted obstacles: keep it for later
            if tracks and static_gain(grid, p, sensor).gain >= config.min_gain:
                continue
            candidates.remove(cand)
            continue
        cand.pose = Pose.from_position(p, res.best_yaw)
        if not math.isfinite(length):
            cand.failures += 1
            if cand.failures >= config.max_failures:
                candidates.remove(cand, blacklist=True)
            continue
        eta += yaw_difference(yaw0, res.best_yaw) / config.v_ang
        dfm_value = dfm_query(dfm, p) if dfm is not None else 0.0
        s = score(border_boost(res.gain, p, bbox, weights), length, dfm_value, weights)
        ranked.append((s, -length, len(ranked), cand))
    ranked.sort(key=lambda r: (-r[0], -r[1], r[2]))
    return [(r[0], r[3]) for r in ranked]


def select_global_goal(candidates: CandidateSet, grid: VoxelGrid, tracks=(), dfm: FrequencyGrid | None = None,
                       weights: PlannerWeights = PlannerWeights(), now: float = 0.0, **kwargs
                       ) -> GlobalCandidate | None:
    """Best candidate after re-evaluation (score, then shorter path), or None.

    None with an empty candidate set means exploration is complete.
    """
    ranked = rank_global_goals(candidates, grid, tracks, dfm, weights, now, **kwargs)
    return ranked[0][1] if ranked else None


def _timed_search(start: Pose, graph: RoadGraph, grid: VoxelGrid, tracks, now: float, config: GlobalConfig,
                  predictor: Predictor, stats: GlobalStats, goal: Pose | None = None):
    """Dijkstra over the roadmap from ``start`` (node -1) where an edge is
    usable only if it is statically clear and clear of predicted obstacles
    over the window it would be traversed in. With ``goal`` the search adds
    node -2 and stops there; without it every reachable vertex is settled.
    Returns (dist, prev, pos)."""
    sp = start.position
    gp = goal.position if goal is not None else None
    arrays = predictor.kernel_arrays(list(tracks)) if tracks else None
    reach_xy, half_z = agent_reach(config.agent_box)

    def pos(v: int) -> np.ndarray:
        return sp if v == -1 else gp if v == -2 else graph.vertices[v]

    extra: dict[int, dict[int, float]] = {-1: {}}
    for v, d in _attach(graph, sp, grid, config):
        extra[-1][v] = d
        extra.setdefault(v, {})[-1] = d
    if goal is not None:
        extra[-2] = {}
        for v, d in _attach(graph, gp, grid, config):
            extra[-2][v] = d
            extra.setdefault(v, {})[-2] = d
        direct = float(np.linalg.norm(gp - sp))
        if direct <= config.connect_radius and static_clear(grid, sp, gp, config.agent_box, config.unknown_blocks):
            extra[-1][-2] = direct
            extra[-2][-1] = direct

    def neighbors(u: int):
        out = dict(graph.edges.get(u, {})) if u >= 0 else {}
        out.update(extra.get(u, {}))
        return sorted(out.items())

    def timed_ok(a: np.ndarray, b: np.ndarray, depart: float, final: bool) -> bool:
        if arrays is None:
            return True
        stats.timed_checks += 1
        move_end = depart + float(np.linalg.norm(b - a)) / config.v_lin
        until = move_end + (yaw_difference(start.yaw, goal.yaw) / config.v_ang + config.dwell if final else 0.0)
        return bool(K.timed_free(a, b, depart, move_end, until, config.check_step, reach_xy, half_z,
                                 float(predictor.kappa), float(predictor.horizon), *arrays))

    dist = {-1: 0.0}
    prev: dict[int, int] = {}
    heap = [(0.0, 0, -1)]
    done = set()
    while heap:
        d, _, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        stats.dijkstra_pops += 1
        if u == -2:
            break
        depart = now + d / config.v_lin
        for v, w in neighbors(u):
            if v in done:
                continue
            nd = d + w
            if nd >= dist.get(v, math.inf) - 1e-12:
                continue
            # the roadmap was checked against an older map; re-check statically
            stats.static_checks += 1
            if not static_clear(grid, pos(u), pos(v), config.agent_box, config.unknown_blocks):
                continue
            if not timed_ok(pos(u), pos(v), depart, v == -2):
                continue
            dist[v] = nd
            prev[v] = u
            heapq.heappush(heap, (nd, v, v))
    settled = {v: dist[v] for v in done}
    return settled, prev, pos


def _steps(chain, pos, start: Pose, goal: Pose, now: float, config: GlobalConfig) -> list[PlanStep]:
    steps = []
    t = now
    for a, b in zip(chain[:-1], chain[1:]):
        arrive = t + float(np.linalg.norm(pos(b) - pos(a))) / config.v_lin
        if b == chain[-1]:
            target = goal
            arrive += yaw_difference(start.yaw, goal.yaw) / config.v_ang
        else:
            target = Pose.from_position(pos(b), start.yaw)
        steps.append(PlanStep(target, t, arrive))
        t = arrive
    return steps


def _trivial(start: Pose, goal: Pose, now: float, config: GlobalConfig) -> list[PlanStep] | None:
    if float(np.linalg.norm(goal.position - start.position)) >= 1e-9:
        return None
    if yaw_difference(start.yaw, goal.yaw) < 1e-9:
        return []
    return [PlanStep(goal, now, now + yaw_difference(start.yaw, goal.yaw) / config.v_ang)]


def plan_path(start: Pose, goal: Pose, graph: RoadGraph, grid: VoxelGrid, tracks=(), now: float = 0.0, *,
              config: GlobalConfig = GlobalConfig(), predictor: Predictor = Predictor(),
              stats: GlobalStats | None = None) -> list[PlanStep]:
    """Shortest roadmap path from ``start`` to ``goal`` whose every edge is
    clear of predicted obstacles during the window the agent would use it.

    The yaw is held during transit and turned to the goal yaw at the end.
    Raises Unreachable when no timed-safe path exists.
    """
    stats = stats if stats is not None else GlobalStats()
    trivial = _trivial(start, goal, now, config)
    if trivial is not None:
        return trivial
    dist, prev, pos = _timed_search(start, graph, grid, list(tracks), now, config, predictor, stats, goal)
    if -2 not in dist:
        raise Unreachable(f"no timed-safe path to {tuple(np.round(goal.position, 3))}")
    chain = [-2]
    while chain[-1] != -1:
        chain.append(prev[chain[-1]])
    chain.reverse()
    return _steps(chain, pos, start, goal, now, config)


def plan_to_first(start: Pose, goals, graph: RoadGraph, grid: VoxelGrid, tracks=(), now: float = 0.0, *,
                  config: GlobalConfig = GlobalConfig(), predictor: Predictor = Predictor(),
                  stats: GlobalStats | None = None) -> tuple[int, list[PlanStep]]:
    """Timed-safe path to the first goal in ``goals`` (a preference order)
    that can be reached; returns (index, steps).

    One search settles every vertex reachable under the timed constraints,
    then each goal is tried through its connectors in turn, so a blocked
    favourite costs one connector check rather than a new search.
    Raises Unreachable when none of the goals can be reached.
    """
    stats = stats if stats is not None else GlobalStats()
    goals = list(goals)
    for i, g in enumerate(goals):
        trivial = _trivial(start, g, now, config)
        if trivial is not None:
            return i, trivial
    if not goals:
        raise Unreachable("no goals given")
    tracks = list(tracks)
    dist, prev, pos = _timed_search(start, graph, grid, tracks, now, config, predictor, stats)
    arrays = predictor.kernel_arrays(tracks) if tracks else None
    reach_xy, half_z = agent_reach(config.agent_box)
    for i, goal in enumerate(goals):
        gp = goal.position
        turn = yaw_difference(start.yaw, goal.yaw) / config.v_ang
        options = [(dist[v] + d, v) for v, d in _attach(graph, gp, grid, config) if v in dist]
        direct = float(np.linalg.norm(gp - start.position))
        if direct <= config.connect_radius and static_clear(grid, start.position, gp, config.agent_box,
                                                            config.unknown_blocks):
            options.append((direct, -1))
        for total, v in sorted(options):
            a = pos(v)
            depart = now + dist[v] / config.v_lin
            move_end = now + total / config.v_lin
            if arrays is not None:
                stats.timed_checks += 1
                if not K.timed_free(a, gp, depart, move_end, move_end + turn + config.dwell, config.check_step,
                                    reach_xy, half_z, float(predictor.kappa), float(predictor.horizon), *arrays):
                    continue
            chain = [v]
            while chain[-1] != -1:
                chain.append(prev[chain[-1]])
            chain.reverse()
            chain.append(-2)

            def pos2(u, _g=gp):
                return _g if u == -2 else pos(u)
            return i, _steps(chain, pos2, start, goal, now, config)
    raise Unreachable("none of the goals is reachable without predicted conflicts")


def escape_path(start: Pose, graph: RoadGraph, grid: VoxelGrid, tracks, now: float = 0.0, *,
                hold: float = 4.0, config: GlobalConfig = GlobalConfig(), predictor: Predictor = Predictor(),
                stats: GlobalStats | None = None, max_length: float = 8.0) -> list[PlanStep] | None:
    """Shortest timed-safe roadmap path to a vertex where holding position for
    ``hold`` seconds after arrival is predicted clear of every obstacle.

    Returns None when no such refuge is found within ``max_length``.
    """
    stats = stats if stats is not None else GlobalStats()
    tracks = list(tracks)
    if not tracks or not graph.vertices:
        return None
    arrays = predictor.kernel_arrays(tracks)
    reach_xy, half_z = agent_reach(config.agent_box)
    sp = start.position

    def pos(v: int) -> np.ndarray:
        return sp if v == -1 else graph.vertices[v]

    def clear(a, b, depart, until) -> bool:
        stats.timed_checks += 1
        move_end = depart + float(np.linalg.norm(b - a)) / config.v_lin
        return bool(K.timed_free(a, b, depart, move_end, until, config.check_step, reach_xy, half_z,
                                 float(predictor.kappa), float(predictor.horizon), *arrays))

    start_edges = dict(_attach(graph, sp, grid, config))
    dist = {-1: 0.0}
    prev: dict[int, int] = {}
    heap = [(0.0, -1)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        stats.dijkstra_pops += 1
        t_u = now + d / config.v_lin
        if u != -1 and clear(pos(u), pos(u), t_u, t_u + hold):
            chain = [u]
            while chain[-1] != -1:
                chain.append(prev[chain[-1]])
            chain.reverse()
            steps, t = [], now
            for a, b in zip(chain[:-1], chain[1:]):
                arrive = t + float(np.linalg.norm(pos(b) - pos(a))) / config.v_lin
                steps.append(PlanStep(Pose.from_position(pos(b), start.yaw), t, arrive))
                t = arrive
            return steps
        nbrs = start_edges if u == -1 else graph.edges.get(u, {})
        for v, w in sorted(nbrs.items()):
            nd = d + w
            if v in done or nd > max_length or nd >= dist.get(v, math.inf) - 1e-12:
                continue
            if not clear(pos(u), pos(v), t_u, t_u + w / config.v_lin):
                continue
            dist[v] = nd
            prev[v] = u
            heapq.heappush(heap, (nd, v))
    return None
