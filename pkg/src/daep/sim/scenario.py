"""Ground-truth world description and its on-disk JSON schema.

Schema (all lengths in meters, see ``docs/formats.md``)::

    {
      "name": "maze",
      "bbox_min": [x, y, z], "bbox_max": [x, y, z],
      "resolution": 0.2,
      "static_solids": [[xmin, ymin, zmin, xmax, ymax, zmax], ...],
      "obstacle_paths": [
        {"waypoints": [[x, y, z], ...], "mode": "loop" | "back-and-forth",
         "speed": 0.35, "radius": 0.3, "height": 1.8}, ...],
      "start_poses": [[x, y, z], ... exactly five],
      "seed": 0
    }
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..voxelmap import grid_dims

MODES = ("loop", "back-and-forth")


@dataclass
class ObstaclePath:
    waypoints: list
    mode: str = "loop"
    speed: float = 0.35
    radius: float = 0.3
    height: float = 1.8

    def __post_init__(self):
        self.waypoints = [tuple(float(c) for c in w) for w in self.waypoints]
        if self.mode not in MODES:
            raise ConfigError(f"unknown path mode {self.mode!r}")
        if len(self.waypoints) < 2:
            raise ConfigError("an obstacle path needs at least two waypoints")
        pts = np.asarray(self.waypoints)
        if self.mode == "loop":
            pts = np.vstack([pts, pts[:1]])
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        self._pts = pts
        self._cum = np.concatenate([[0.0], np.cumsum(seg)])
        self.length = float(self._cum[-1])
        if self.length <= 0:
            raise ConfigError("obstacle path has zero length")

    def arc_position(self, t: float) -> tuple[np.ndarray, float, int]:
        """Position, heading and current segment index after ``t`` seconds of motion."""
        s = self.speed * t
        if self.mode == "loop":
            s = math.fmod(s, self.length)
            forward = True
        else:
            s = math.fmod(s, 2.0 * self.length)
            forward = s <= self.length
            if not forward:
                s = 2.0 * self.length - s
        seg = int(np.searchsorted(self._cum, s, side="right") - 1)
        seg = min(max(seg, 0), len(self._cum) - 2)
        a, b = self._pts[seg], self._pts[seg + 1]
        L = self._cum[seg + 1] - self._cum[seg]
        f = 0.0 if L == 0 else (s - self._cum[seg]) / L
        pos = a + f * (b - a)
        d = (b - a) if forward else (a - b)
        heading = math.atan2(d[1], d[0])
        return pos, heading, seg

    def to_dict(self) -> dict:
        return {
            "waypoints": [list(w) for w in self.waypoints],
            "mode": self.mode,
            "speed": self.speed,
            "radius": self.radius,
            "height": self.height,
        }


@dataclass
class Scenario:
    name: str
    bbox_min: tuple
    bbox_max: tuple
    resolution: float = 0.2
    static_solids: np.ndarray = field(default_factory=lambda: np.zeros((0, 6)))
    obstacle_paths: list = field(default_factory=list)
    start_poses: list = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        self.bbox_min = tuple(float(c) for c in self.bbox_min)
        self.bbox_max = tuple(float(c) for c in self.bbox_max)
        self.static_solids = np.asarray(self.static_solids, dtype=np.float64).reshape(-1, 6)
        self.obstacle_paths = [p if isinstance(p, ObstaclePath) else ObstaclePath(**p)
                               for p in self.obstacle_paths]
        self.start_poses = [tuple(float(c) for c in s) for s in self.start_poses]
        self._solid = None
        self._mappable = None

    @property
    def dims(self) -> tuple[int, int, int]:
        return grid_dims(self.bbox_min, self.bbox_max, self.resolution)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.bbox_max, self.bbox_min)))

    def inside_solid(self, p, inflate: float = 0.0) -> bool:
        p = np.asarray(p, dtype=np.float64)
        s = self.static_solids
        if len(s) == 0:
            return False
        lo = s[:, :3] - inflate
        hi = s[:, 3:] + inflate
        return bool(np.any(np.all((p > lo) & (p < hi), axis=1)))

    def inside_bbox(self, p) -> bool:
        return all(self.bbox_min[i] <= p[i] <= self.bbox_max[i] for i in range(3))

    def validate(self) -> None:
        if len(self.start_poses) != 5:
            raise ConfigError(f"{self.name}: need exactly 5 start poses, got {len(self.start_poses)}")
        for s in self.start_poses:
            if not self.inside_bbox(s) or self.inside_solid(s, 0.3):
                raise ConfigError(f"{self.name}: start pose {s} not in free space")
        for i, path in enumerate(self.obstacle_paths):
            for w in path.waypoints:
                if not self.inside_bbox(w):
                    raise ConfigError(f"{self.name}: obstacle {i} waypoint {w} outside bbox")
                # the footprint is a vertical cylinder, so test along its height
                for z in (w[2] + 0.05, w[2] + path.height / 2, w[2] + path.height - 0.05):
                    if self.inside_solid((w[0], w[1], z), path.radius):
                        raise ConfigError(f"{self.name}: obstacle {i} waypoint {w} inside static geometry")

    def solid_mask(self) -> np.ndarray:
        """Cells whose center lies inside any static solid."""
        if self._solid is None:
            mask = np.zeros(self.dims, dtype=bool)
            bmin = np.asarray(self.bbox_min)
            res = self.resolution
            for box in self.static_solids:
                lo = np.ceil((box[:3] - bmin) / res - 0.5 - 1e-9).astype(int)
                hi = np.floor((box[3:] - bmin) / res - 0.5 + 1e-9).astype(int)
                lo = np.maximum(lo, 0)
                hi = np.minimum(hi, np.asarray(self.dims) - 1)
                if np.any(hi < lo):
                    continue
                mask[lo[0]:hi[0] + 1, lo[1]:hi[1] + 1, lo[2]:hi[2] + 1] = True
            self._solid = mask
        return self._solid

    def mappable_mask(self) -> np.ndarray:
        """All cells except solid cells whose six neighbours are solid or outside the bbox."""
        if self._mappable is None:
            solid = self.solid_mask()
            padded = np.pad(solid, 1, constant_values=True)
            interior = solid.copy()
            for axis in range(3):
                for shift in (-1, 1):
                    nb = np.roll(padded, shift, axis=axis)[1:-1, 1:-1, 1:-1]
                    interior &= nb
            self._mappable = ~interior
        return self._mappable

    def without_obstacles(self) -> "Scenario":
        return Scenario(self.name, self.bbox_min, self.bbox_max, self.resolution,
                        self.static_solids.copy(), [], list(self.start_poses), self.seed)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "bbox_min": list(self.bbox_min),
            "bbox_max": list(self.bbox_max),
            "resolution": self.resolution,
            "static_solids": [[round(float(c), 6) for c in b] for b in self.static_solids],
            "obstacle_paths": [p.to_dict() for p in self.obstacle_paths],
            "start_poses": [list(s) for s in self.start_poses],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        try:
            sc = cls(
                name=d["name"],
                bbox_min=d["bbox_min"],
                bbox_max=d["bbox_max"],
                resolution=d.get("resolution", 0.2),
                static_solids=d.get("static_solids", []),
                obstacle_paths=[ObstaclePath(**p) for p in d.get("obstacle_paths", [])],
                start_poses=d["start_poses"],
                seed=d.get("seed", 0),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed scenario: {exc}") from exc
        sc.validate()
        return sc


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=2) + "\n")


def load_scenario(path) -> Scenario:
    return Scenario.from_dict(json.loads(Path(path).read_text()))
