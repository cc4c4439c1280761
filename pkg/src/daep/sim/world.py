"""Discrete-time world: scripted walkers, a velocity-limited agent, a depth
camera and ground-truth obstacle observation."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .. import _kernels as K
from ..gain import SensorModel
from ..geometry import PlanStep, Pose, wrap_angle
from .scenario import Scenario

TICK = 0.05
HIT_NUDGE = 1e-4  # push hit endpoints just inside the struck surface


@dataclass
class AgentState:
    position: np.ndarray
    yaw: float = 0.0
    plan: deque = field(default_factory=deque)
    v_lin: float = 0.5
    v_ang: float = 1.0
    collision_box: tuple = (0.4, 0.4, 0.1)
    path_length: float = 0.0

    @property
    def pose(self) -> Pose:
        return Pose(float(self.position[0]), float(self.position[1]), float(self.position[2]), self.yaw)

    def command(self, steps) -> None:
        self.plan = deque(steps)

    def stop(self) -> None:
        self.plan.clear()

    @property
    def idle(self) -> bool:
        return not self.plan

    def advance(self, dt: float) -> None:
        """Follow the committed plan for ``dt`` seconds: translate first, then turn."""
        budget = dt
        while self.plan:
            target = self.plan[0].target
            tp = np.array((target.x, target.y, target.z))
            delta = tp - self.position
            dist = float(np.linalg.norm(delta))
            if dist <= 1e-12 and abs(wrap_angle(target.yaw - self.yaw)) <= 1e-12:
                self.plan.popleft()
                continue
            if budget <= 1e-12:
                break
            if dist > 1e-12:
                move = min(dist, self.v_lin * budget)
                if move >= dist:
                    self.position = tp
                else:
                    self.position = self.position + delta * (move / dist)
                self.path_length += move
                budget -= move / self.v_lin
                continue
            dyaw = wrap_angle(target.yaw - self.yaw)
            if abs(dyaw) > 1e-12:
                turn = min(abs(dyaw), self.v_ang * budget)
                self.yaw = wrap_angle(self.yaw + math.copysign(turn, dyaw))
                budget -= turn / self.v_ang
                if turn >= abs(dyaw):
                    self.yaw = wrap_angle(target.yaw)
                continue


@dataclass
class ObstacleState:
    id: int
    position: np.ndarray
    heading: float
    waypoint_index: int
    forward: bool = True


@dataclass(frozen=True)
class DepthCamera:
    """Pinhole-free az/el ray grid spanning the sensor FoV, centred on the agent yaw."""

    sensor: SensorModel = SensorModel()
    width: int = 96
    height: int = 72

    def directions(self, yaw: float) -> np.ndarray:
        hf = math.radians(self.sensor.horizontal_fov)
        vf = math.radians(self.sensor.vertical_fov)
        az = yaw - hf / 2 + (np.arange(self.width) + 0.5) * hf / self.width
        el = -vf / 2 + (np.arange(self.height) + 0.5) * vf / self.height
        A, E = np.meshgrid(az, el, indexing="ij")
        d = np.stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)], axis=-1)
        return np.ascontiguousarray(d.reshape(-1, 3))


@dataclass
class DepthScan:
    origin: np.ndarray
    hits: np.ndarray
    misses: np.ndarray
    miss_ranges: np.ndarray


class World:
    """Ground truth plus agent and walkers, advanced in fixed ticks."""

    def __init__(self, scenario: Scenario, dynamic: bool = True, start_index: int = 0,
                 dt: float = TICK, agent: AgentState | None = None):
        self.scenario = scenario
        self.dynamic = dynamic
        self.paths = list(scenario.obstacle_paths) if dynamic else []
        self.dt = dt
        self.ticks = 0
        self.t = 0.0
        if agent is None:
            agent = AgentState(position=np.asarray(scenario.start_poses[start_index], dtype=np.float64))
        self.agent = agent
        self.boxes = np.ascontiguousarray(scenario.static_solids, dtype=np.float64)
        self.obstacles: list[ObstacleState] = []
        self._overlapping: dict[str, float] = {}
        self.collision_intervals: list[list] = []  # [key, start, end-or-None]
        self._place_obstacles()
        self._detect_collisions()

    def _place_obstacles(self) -> None:
        self.obstacles = []
        for i, path in enumerate(self.paths):
            pos, heading, seg = path.arc_position(self.t)
            fwd = True
            if path.mode == "back-and-forth":
                fwd = math.fmod(path.speed * self.t, 2 * path.length) <= path.length
            self.obstacles.append(ObstacleState(i, pos, heading, seg, fwd))

    def obstacle_cylinders(self) -> np.ndarray:
        if not self.obstacles:
            return np.zeros((0, 5))
        return np.asarray([
            (o.position[0], o.position[1], o.position[2], o.position[2] + p.height, p.radius)
            for o, p in zip(self.obstacles, self.paths)
        ], dtype=np.float64)

    def step(self, dt: float | None = None) -> list[dict]:
        dt = self.dt if dt is None else dt
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.ticks += 1
        # time from the tick counter so long runs do not accumulate drift
        self.t = self.ticks * dt if dt == self.dt else self.t + dt
        self._place_obstacles()
        self.agent.advance(dt)
        return self._detect_collisions()

    def hover(self, duration: float) -> list[dict]:
        """Advance the clock with the agent holding position."""
        events = []
        saved = self.agent.plan
        self.agent.plan = deque()
        n = int(math.ceil(duration / self.dt - 1e-9))
        for _ in range(n):
            events.extend(self.step())
        self.agent.plan = saved
        return events

    def _overlaps(self) -> set[str]:
        a = self.agent
        hx, hy, hz = (c / 2 for c in a.collision_box)
        px, py, pz = a.position
        out = set()
        c, s = math.cos(a.yaw), math.sin(a.yaw)
        for o, path in zip(self.obstacles, self.paths):
            z0, z1 = o.position[2], o.position[2] + path.height
            if not (pz - hz < z1 and pz + hz > z0):
                continue
            dx, dy = o.position[0] - px, o.position[1] - py
            lx, ly = c * dx + s * dy, -s * dx + c * dy
            qx = min(max(lx, -hx), hx)
            qy = min(max(ly, -hy), hy)
            if (lx - qx) ** 2 + (ly - qy) ** 2 < path.radius ** 2:
                out.add(f"obstacle:{o.id}")
        if len(self.boxes):
            ex = abs(c) * hx + abs(s) * hy
            ey = abs(s) * hx + abs(c) * hy
            lo = np.array((px - ex, py - ey, pz - hz))
            hi = np.array((px + ex, py + ey, pz + hz))
            hit = np.all((lo < self.boxes[:, 3:]) & (hi > self.boxes[:, :3]), axis=1)
            for i in np.flatnonzero(hit):
                out.add(f"solid:{int(i)}")
        return out

    def _detect_collisions(self) -> list[dict]:
        now = self._overlaps()
        events = []
        for key in sorted(now - self._overlapping.keys()):
            self._overlapping[key] = self.t
            self.collision_intervals.append([key, self.t, None])
            events.append({"type": "collision_start", "with": key, "t": self.t})
        for key in sorted(self._overlapping.keys() - now):
            start = self._overlapping.pop(key)
            for iv in reversed(self.collision_intervals):
                if iv[0] == key and iv[2] is None:
                    iv[2] = self.t
                    break
            events.append({"type": "collision_end", "with": key, "t": self.t, "duration": self.t - start})
        return events

    @property
    def collision_count(self) -> int:
        return len(self.collision_intervals)


def render_depth(world: World, agent_pose: Pose, camera: DepthCamera = DepthCamera()) -> DepthScan:
    """Cast the camera rays against static solids and walkers.

    Walkers block rays but are never reported as hits: a ray stopped by a
    walker comes back as a miss whose free range ends at the walker.
    """
    o = np.array((agent_pose.x, agent_pose.y, agent_pose.z), dtype=np.float64)
    dirs = camera.directions(agent_pose.yaw)
    rng = camera.sensor.range
    t_static, t_dyn = K.render(world.boxes, world.obstacle_cylinders(), o, dirs, rng)
    occluded = t_dyn < np.minimum(t_static, rng)
    hit = np.isfinite(t_static) & ~occluded
    miss = ~hit
    hits = o + dirs[hit] * (t_static[hit] + HIT_NUDGE)[:, None]
    miss_ranges = np.where(occluded[miss], t_dyn[miss], rng)
    return DepthScan(o, hits, dirs[miss], miss_ranges)


def observe_obstacles(world: World, agent_pose: Pose, sensing_radius: float = 10.0) -> list[tuple[int, np.ndarray]]:
    """Ground-truth positions of walkers within range and in line of sight."""
    p = np.array((agent_pose.x, agent_pose.y, agent_pose.z), dtype=np.float64)
    out = []
    for o, path in zip(world.obstacles, world.paths):
        z = min(max(p[2], o.position[2]), o.position[2] + path.height)
        target = np.array((o.position[0], o.position[1], z))
        if np.linalg.norm(target - p) > sensing_radius:
            continue
        if not K.segment_visible(world.boxes, p, target):
            continue
        out.append((o.id, o.position.copy()))
    return out


def step(world: World, dt: float = TICK) -> tuple[World, list[dict]]:
    events = world.step(dt)
    return world, events
