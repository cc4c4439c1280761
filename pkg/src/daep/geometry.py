from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np


class Pose(NamedTuple):
    x: float
    y: float
    z: float
    yaw: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array((self.x, self.y, self.z), dtype=np.float64)

    @classmethod
    def from_position(cls, p, yaw: float = 0.0) -> "Pose":
        return cls(float(p[0]), float(p[1]), float(p[2]), float(yaw))

    def distance_to(self, other: "Pose") -> float:
        return math.sqrt((self.x - other.x) ** 2 + (self.y - other.y) ** 2 + (self.z - other.z) ** 2)


def wrap_angle(a: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def yaw_difference(a: float, b: float) -> float:
    """Absolute shortest angular distance between two yaws, in [0, pi]."""
    return abs(wrap_angle(b - a))


def point_box_horizontal_distance(p, bbox_min, bbox_max) -> float:
    """Horizontal distance from an interior point to the nearest vertical bbox face."""
    return float(
        min(
            p[0] - bbox_min[0],
            bbox_max[0] - p[0],
            p[1] - bbox_min[1],
            bbox_max[1] - p[1],
        )
    )


class PlanStep(NamedTuple):
    """Move to ``target`` (translate, then turn to its yaw) between the two times."""

    target: Pose
    departure: float
    arrival: float
