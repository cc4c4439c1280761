"""Information gain: unmapped volume visible from a viewpoint, optionally
shadowed by predicted obstacles at the arrival time, plus the border boost
and the exploration score that combines gain, travel cost and obstacle
frequency."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels as K
from .errors import InvalidArgument, OutOfBounds
from .geometry import point_box_horizontal_distance
from .prediction import Predictor
from .voxelmap import VoxelGrid

YAW_BINS = 32


@dataclass(frozen=True)
class SensorModel:
    horizontal_fov: float = 103.2  # degrees
    vertical_fov: float = 77.4  # degrees
    range: float = 5.0  # meters
    rays_horizontal: int = 32  # over the full 360 degree sweep
    rays_vertical: int = 8

    def __post_init__(self):
        if not (0 < self.horizontal_fov < 180 and 0 < self.vertical_fov < 180):
            raise InvalidArgument("fields of view must lie in (0, 180) degrees")
        if not self.range > 0:
            raise InvalidArgument("sensor range must be positive")
        if self.rays_horizontal < 4 or self.rays_vertical < 4:
            raise InvalidArgument("need at least 4 rays per axis")


@dataclass(frozen=True)
class PlannerWeights:
    lam: float = 0.75  # cost decay rate
    zeta: float = 0.5  # frequency-map boost weight
    alpha: float = 6.0  # border boost multiplier
    border_margin: float = 1.0  # meters

    def __post_init__(self):
        if self.lam < 0 or self.zeta < 0 or self.alpha < 1 or self.border_margin < 0:
            raise InvalidArgument(f"invalid planner weights {self}")


@dataclass(frozen=True)
class GainResult:
    gain: float  # m^3 inside the best horizontal-FoV window
    best_yaw: float
    yaw_bins: tuple[float, ...]  # unknown volume per yaw bin over the full sweep


@lru_cache(maxsize=32)
def ray_pattern(sensor: SensorModel, nbins: int = YAW_BINS):
    """Unit directions, solid-angle weights and yaw-bin index of the sweep rays.

    Columns are spread uniformly over 360 degrees and rows over the vertical
    FoV; each ray carries the exact solid angle of its azimuth/elevation cell.
    """
    bin_w = 2.0 * math.pi / nbins
    col_w = 2.0 * math.pi / sensor.rays_horizontal
    az = -math.pi - 0.5 * bin_w + (np.arange(sensor.rays_horizontal) + 0.5) * col_w
    col_bin = np.floor((az + math.pi + 0.5 * bin_w) / bin_w).astype(np.int64) % nbins

    half_v = math.radians(sensor.vertical_fov) / 2.0
    edges = np.linspace(-half_v, half_v, sensor.rays_vertical + 1)
    el = 0.5 * (edges[:-1] + edges[1:])
    band = np.sin(edges[1:]) - np.sin(edges[:-1])

    A, E = np.meshgrid(az, el, indexing="ij")
    dirs = np.stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)], axis=-1).reshape(-1, 3)
    weights = (col_w * np.broadcast_to(band, A.shape)).reshape(-1).copy()
    bins = np.repeat(col_bin, sensor.rays_vertical)
    return np.ascontiguousarray(dirs), weights, bins


@lru_cache(maxsize=32)
def bin_yaws(nbins: int = YAW_BINS) -> np.ndarray:
    return -math.pi + np.arange(nbins) * (2.0 * math.pi / nbins)


def window_weights(horizontal_fov_deg: float, nbins: int = YAW_BINS) -> dict[int, float]:
    """Bin-offset weights of a yaw window one horizontal FoV wide (edge bins partial)."""
    half = math.radians(horizontal_fov_deg) / (2.0 * math.pi / nbins) / 2.0
    kmax = int(math.ceil(half + 0.5))
    out = {}
    for k in range(-kmax, kmax + 1):
        w = min(1.0, max(0.0, half + 0.5 - abs(k)))
        if w > 0:
            out[k] = w
    return out


@lru_cache(maxsize=32)
def _window_matrix(horizontal_fov_deg: float, nbins: int) -> np.ndarray:
    W = np.zeros((nbins, nbins))
    for k, w in window_weights(horizontal_fov_deg, nbins).items():
        for i in range(nbins):
            W[i, (i + k) % nbins] += w
    return W


def _select_yaw(per_bin: np.ndarray, sensor: SensorModel) -> tuple[float, float]:
    n = per_bin.size
    window = _window_matrix(sensor.horizontal_fov, n) @ per_bin
    yaws = bin_yaws(n)
    top = window.max()
    ties = np.flatnonzero(window >= top - 1e-12 * max(1.0, abs(top)))
    best = min(ties, key=lambda i: (abs(yaws[i]), i))
    return float(window[best]), float(yaws[best])


def _evaluate(grid: VoxelGrid, position, sensor: SensorModel, cyls: np.ndarray, nbins: int) -> GainResult:
    p = np.asarray(position, dtype=np.float64)
    if not grid.contains(p):
        raise OutOfBounds(f"viewpoint {tuple(p)} outside grid bbox")
    dirs, weights, bins = ray_pattern(sensor, nbins)
    per_bin = K.gain_bins(grid.cells, grid.bbox_min, grid.resolution, p, dirs, weights, bins,
                          nbins, float(sensor.range), cyls)
    gain, yaw = _select_yaw(per_bin, sensor)
    return GainResult(max(gain, 0.0), yaw, tuple(float(v) for v in per_bin))


_NO_CYLS = np.zeros((0, 5))


def static_gain(grid: VoxelGrid, position, sensor: SensorModel = SensorModel(),
                nbins: int = YAW_BINS) -> GainResult:
    return _evaluate(grid, position, sensor, _NO_CYLS, nbins)


def dynamic_gain(grid: VoxelGrid, position, arrival_time: float, tracks=(),
                 sensor: SensorModel = SensorModel(), predictor: Predictor = Predictor(),
                 nbins: int = YAW_BINS) -> GainResult:
    """Gain at ``position`` with every ray cut at the first predicted obstacle volume at ``arrival_time``."""
    cyls = predictor.cylinders(tracks, arrival_time) if tracks else _NO_CYLS
    return _evaluate(grid, position, sensor, cyls, nbins)


def gain_with_cylinders(grid: VoxelGrid, position, cylinders, sensor: SensorModel = SensorModel(),
                        nbins: int = YAW_BINS) -> GainResult:
    cyls = np.asarray(cylinders, dtype=np.float64).reshape(-1, 5)
    return _evaluate(grid, position, sensor, cyls, nbins)


def border_boost(gain: float, position, bbox, weights: PlannerWeights = PlannerWeights()) -> float:
    """Multiply ``gain`` by alpha when ``position`` is within the margin of a vertical bbox face."""
    bmin, bmax = bbox
    if point_box_horizontal_distance(position, bmin, bmax) <= weights.border_margin:
        return gain * weights.alpha
    return gain


def score(d: float, cost: float, dfm_value: float, weights: PlannerWeights = PlannerWeights()) -> float:
    """d * exp(-lambda * cost) * (1 + zeta * dfm)."""
    if not (math.isfinite(d) and math.isfinite(cost) and math.isfinite(dfm_value)):
        raise InvalidArgument("score arguments must be finite")
    if d < 0 or cost < 0 or not (0.0 <= dfm_value <= 1.0):
        raise InvalidArgument(f"score arguments out of domain: d={d}, cost={cost}, dfm={dfm_value}")
    return d * math.exp(-weights.lam * cost) * (1.0 + weights.zeta * dfm_value)
