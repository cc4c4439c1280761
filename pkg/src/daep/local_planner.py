"""Receding-horizon RRT whose nodes carry an estimated time of arrival.

Each admitted node is collision checked against predicted obstacle volumes
over the time window in which the agent would traverse its edge, and its
gain is evaluated with the obstacles where they are expected to be when the
agent gets there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import ExpansionStarved, InvalidArgument, InvalidStart
from .gain import PlannerWeights, SensorModel, border_boost, dynamic_gain, score
from .geometry import PlanStep, Pose, yaw_difference
from .prediction import FrequencyGrid, Predictor, dfm_query
from .voxelmap import CellState, VoxelGrid

AGENT_BOX = (0.4, 0.4, 0.1)


@dataclass(frozen=True)
class LocalPlannerConfig:
    max_extensions: int = 300
    extension_range: float = 1.0  # meters
    z_margin: float = 0.5  # sampling band is [zmin + margin, zmax - margin]
    v_lin: float = 0.5
    v_ang: float = 1.0
    agent_box: tuple = AGENT_BOX
    check_step: float = 0.1  # seconds between timed clearance samples
    dwell: float = 0.0  # seconds a node must stay clear after arrival
    unknown_blocks: bool = True  # edges must run through known-free cells
    min_score: float = 0.1  # below this the local planner hands over

    def __post_init__(self):
        if self.max_extensions < 1 or self.extension_range <= 0:
            raise InvalidArgument("extension budget and range must be positive")
        if self.v_lin <= 0 or self.v_ang <= 0 or self.check_step <= 0:
            raise InvalidArgument("velocities and check step must be positive")


@dataclass
class RrtNode:
    id: int
    pose: Pose
    parent: int | None
    toa: float
    cumulative_cost: float
    dynamic_gain: float = 0.0
    score: float = 0.0
    depth: int = 0


@dataclass
class PlannerStats:
    samples: int = 0
    admitted: int = 0
    gain_evals: int = 0
    static_checks: int = 0
    timed_checks: int = 0


@dataclass
class RrtTree:
    nodes: list[RrtNode]
    stats: PlannerStats = field(default_factory=PlannerStats)
    sample_min: np.ndarray | None = None
    sample_max: np.ndarray | None = None

    @property
    def root(self) -> RrtNode:
        return self.nodes[0]

    def __len__(self) -> int:
        return len(self.nodes)


def time_of_arrival(parent_toa: float, parent_pose: Pose, child_pose: Pose,
                    v_lin: float = 0.5, v_ang: float = 1.0) -> float:
    if v_lin <= 0 or v_ang <= 0:
        raise InvalidArgument("velocities must be positive")
    dist = parent_pose.distance_to(child_pose)
    return parent_toa + dist / v_lin + yaw_difference(parent_pose.yaw, child_pose.yaw) / v_ang


def agent_reach(agent_box) -> tuple[float, float]:
    """Horizontal circumradius and vertical half extent of the collision box."""
    return math.hypot(agent_box[0] / 2, agent_box[1] / 2), agent_box[2] / 2


def timed_clear(p0, p1, depart: float, move_end: float, until: float, tracks,
                predictor: Predictor = Predictor(), agent_box=AGENT_BOX, step: float = 0.1,
                arrays=None) -> bool:
    """Whether the agent stays clear of every predicted obstacle volume while
    moving p0->p1 over [depart, move_end] and then holding until ``until``."""
    if not tracks:
        return True
    reach_xy, half_z = agent_reach(agent_box)
    if arrays is None:
        arrays = predictor.kernel_arrays(tracks)
    return bool(K.timed_free(np.asarray(p0, np.float64), np.asarray(p1, np.float64), float(depart),
                             float(move_end), float(until), float(step), reach_xy, half_z,
                             float(predictor.kappa), float(predictor.horizon), *arrays))


def static_clear(grid: VoxelGrid, p0, p1, agent_box=AGENT_BOX, unknown_blocks: bool = False) -> bool:
    """Swept test of the yaw-independent footprint (the box's horizontal
    circumradius in x and y) against the map."""
    reach_xy, half_z = agent_reach(agent_box)
    half = np.array((reach_xy, reach_xy, half_z))
    return bool(K.box_sweep_free(grid.cells, grid.bbox_min, grid.resolution,
                                 np.asarray(p0, np.float64), np.asarray(p1, np.float64), half,
                                 bool(unknown_blocks)))


def edge_collision_free(from_pose: Pose, to_pose: Pose, depart: float, arrive: float, grid: VoxelGrid,
                        tracks=(), agent_box=AGENT_BOX, predictor: Predictor = Predictor(),
                        v_lin: float | None = None, until: float | None = None,
                        unknown_blocks: bool = False, step: float = 0.1) -> bool:
    """Static swept-box test plus timed clearance against predicted tracks.

    The agent moves along the straight segment at constant speed, reaching
    the target at ``arrive`` (or at ``depart + length / v_lin`` when
    ``v_lin`` is given, the remainder being spent turning in place), and is
    checked up to ``until`` (default ``arrive``).
    """
    if arrive <= depart:
        raise InvalidArgument("arrive must be later than depart")
    p0, p1 = from_pose.position, to_pose.position
    if not static_clear(grid, p0, p1, agent_box, unknown_blocks):
        return False
    move_end = arrive
    if v_lin is not None:
        move_end = min(arrive, depart + float(np.linalg.norm(p1 - p0)) / v_lin)
    return timed_clear(p0, p1, depart, move_end, arrive if until is None else until, list(tracks),
                       predictor, agent_box, step)


class _Evaluator:
    """Shared per-expansion state: track arrays, sensor, weights, frequency map."""

    def __init__(self, grid, tracks, dfm, weights, sensor, predictor, config, bbox):
        self.grid = grid
        self.tracks = list(tracks)
        self.dfm = dfm
        self.weights = weights
        self.sensor = sensor
        self.predictor = predictor
        self.config = config
        self.bbox = bbox
        self.arrays = predictor.kernel_arrays(self.tracks) if self.tracks else None
        self.reach_xy, self.half_z = agent_reach(config.agent_box)
        self.stats = PlannerStats()

    def static_ok(self, p0, p1) -> bool:
        self.stats.static_checks += 1
        return static_clear(self.grid, p0, p1, self.config.agent_box, self.config.unknown_blocks)

    def timed_ok(self, p0, p1, depart, move_end, until) -> bool:
        if self.arrays is None:
            return True
        self.stats.timed_checks += 1
        return bool(K.timed_free(p0, p1, depart, move_end, until, self.config.check_step, self.reach_xy,
                                 self.half_z, float(self.predictor.kappa), float(self.predictor.horizon),
                                 *self.arrays))

    def make_node(self, nid, parent: RrtNode, p) -> RrtNode | None:
        cfg = self.config
        p0 = parent.pose.position
        if not self.static_ok(p0, p):
            return None
        dist = float(np.linalg.norm(p - p0))
        move_end = parent.toa + dist / cfg.v_lin
        self.stats.gain_evals += 1
        res = dynamic_gain(self.grid, p, move_end, self.tracks, self.sensor, self.predictor)
        pose = Pose.from_position(p, res.best_yaw)
        toa = move_end + yaw_difference(parent.pose.yaw, res.best_yaw) / cfg.v_ang
        if not self.timed_ok(p0, p, parent.toa, move_end, toa + cfg.dwell):
            return None
        cost = parent.cumulative_cost + dist
        d = res.gain
        boosted = border_boost(d, p, self.bbox, self.weights)
        s = score(boosted, cost, dfm_query(self.dfm, p) if self.dfm is not None else 0.0, self.weights)
        return RrtNode(nid, pose, parent.id, toa, cost, d, s, parent.depth + 1)


def _is_free(grid: VoxelGrid, p) -> bool:
    return grid.contains(p) and grid.state_at(p) == CellState.FREE


def expand_tree(root: Pose, now: float, grid: VoxelGrid, tracks=(), dfm: FrequencyGrid | None = None,
                weights: PlannerWeights = PlannerWeights(), budget: int | None = None, *,
                rng: np.random.Generator | None = None, config: LocalPlannerConfig = LocalPlannerConfig(),
                sensor: SensorModel = SensorModel(), predictor: Predictor = Predictor(),
                seed_branch=()) -> RrtTree:
    """Grow a time-stamped RRT from ``root``.

    ``budget`` is the number of sampled extensions (default from config).
    ``seed_branch`` positions (typically the rest of the previous best
    branch) are tried first as a chain so good branches survive replanning.
    Raises InvalidStart when the root is not in known-free space and
    ExpansionStarved when no node besides the root is admitted.
    """
    if not _is_free(grid, root.position):
        raise InvalidStart(f"root {tuple(root.position)} is not in free space")
    rng = rng if rng is not None else np.random.default_rng(0)
    budget = config.max_extensions if budget is None else int(budget)
    bmin = np.asarray(grid.bbox_min, dtype=np.float64)
    bmax = np.asarray(grid.bbox_max, dtype=np.float64)
    lo = bmin.copy()
    hi = bmax.copy()
    lo[2] = min(bmin[2] + config.z_margin, bmax[2])
    hi[2] = max(bmax[2] - config.z_margin, lo[2])
    ev = _Evaluator(grid, tracks, dfm, weights, sensor, predictor, config, (tuple(bmin), tuple(bmax)))

    root_node = RrtNode(0, root, None, float(now), 0.0, 0.0, 0.0, 0)
    nodes = [root_node]
    positions = np.empty((budget + len(seed_branch) + 1, 3))
    positions[0] = root.position

    parent = root_node
    for sp in seed_branch:
        p = np.asarray(sp, dtype=np.float64)
        if float(np.linalg.norm(p - parent.pose.position)) > config.extension_range + 1e-9:
            break
        if not _is_free(grid, p):
            break
        node = ev.make_node(len(nodes), parent, p)
        if node is None:
            break
        positions[len(nodes)] = p
        nodes.append(node)
        parent = node

    smin = np.full(3, np.inf)
    smax = np.full(3, -np.inf)
    for _ in range(budget):
        ev.stats.samples += 1
        sample = lo + rng.random(3) * (hi - lo)
        smin = np.minimum(smin, sample)
        smax = np.maximum(smax, sample)
        n = len(nodes)
        d2 = np.sum((positions[:n] - sample) ** 2, axis=1)
        near = nodes[int(np.argmin(d2))]
        delta = sample - near.pose.position
        dist = float(np.linalg.norm(delta))
        if dist < 1e-6:
            continue
        p = near.pose.position + delta * (min(dist, config.extension_range) / dist)
        if not _is_free(grid, p):
            continue
        node = ev.make_node(n, near, p)
        if node is None:
            continue
        positions[n] = p
        nodes.append(node)

    ev.stats.admitted = len(nodes) - 1
    tree = RrtTree(nodes, ev.stats, smin, smax)
    if len(nodes) == 1:
        raise ExpansionStarved("no node admitted within budget", tree)
    return tree


def best_node(tree: RrtTree) -> RrtNode | None:
    best = None
    for n in tree.nodes[1:]:
        if best is None or (n.score, -n.toa, -n.id) > (best.score, -best.toa, -best.id):
            best = n
    return best


def branch_to(tree: RrtTree, node: RrtNode) -> list[PlanStep]:
    chain = []
    while node.parent is not None:
        chain.append(node)
        node = tree.nodes[node.parent]
    chain.reverse()
    steps = []
    for n in chain:
        parent = tree.nodes[n.parent]
        steps.append(PlanStep(n.pose, parent.toa, n.toa))
    return steps


def best_branch(tree: RrtTree) -> list[PlanStep]:
    """Root-to-best-node steps; the best node maximizes score, ties going to
    the earlier arrival and then the lower id. A root-only tree gives []."""
    node = best_node(tree)
    return [] if node is None else branch_to(tree, node)
