"""Dense voxel occupancy map with ray casting, scan insertion and coverage.

Cells are stored as one ``uint8`` per voxel in ``cells[ix, iy, iz]`` with
codes from :class:`CellState`. The binary dump written by :func:`save_grid`
is documented in ``docs/formats.md``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from . import _kernels as K
from .errors import ConfigMismatch, InvalidArgument, OutOfBounds


class CellState(IntEnum):
    UNKNOWN = K.UNKNOWN
    FREE = K.FREE
    OCCUPIED = K.OCCUPIED


def grid_dims(bbox_min, bbox_max, resolution: float) -> tuple[int, int, int]:
    extent = np.asarray(bbox_max, float) - np.asarray(bbox_min, float)
    # tolerate float noise so that e.g. 2.4 / 0.2 stays 12 cells
    dims = tuple(int(math.ceil(e / resolution - 1e-9)) for e in extent)
    if any(n <= 0 for n in dims):
        raise InvalidArgument(f"degenerate grid extent {extent} at resolution {resolution}")
    return dims


class VoxelGrid:
    """Axis-aligned voxel map over ``[bbox_min, bbox_max]``; fresh grids are all unknown."""

    def __init__(self, bbox_min, bbox_max, resolution: float = 0.2):
        if resolution <= 0:
            raise InvalidArgument("resolution must be positive")
        self.bbox_min = np.asarray(bbox_min, dtype=np.float64).copy()
        self.bbox_max = np.asarray(bbox_max, dtype=np.float64).copy()
        self.resolution = float(resolution)
        self.dims = grid_dims(self.bbox_min, self.bbox_max, self.resolution)
        self.cells = np.zeros(self.dims, dtype=np.uint8)

    def copy(self) -> "VoxelGrid":
        g = VoxelGrid.__new__(VoxelGrid)
        g.bbox_min = self.bbox_min.copy()
        g.bbox_max = self.bbox_max.copy()
        g.resolution = self.resolution
        g.dims = self.dims
        g.cells = self.cells.copy()
        return g

    snapshot = copy

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=np.float64)
        return bool(np.all(p >= self.bbox_min) and np.all(p <= self.bbox_max))

    def world_to_index(self, p) -> tuple[int, int, int]:
        if not self.contains(p):
            raise OutOfBounds(f"point {tuple(p)} outside grid bbox")
        v = (np.asarray(p, dtype=np.float64) - self.bbox_min) / self.resolution
        idx = np.minimum(np.floor(v).astype(np.int64), np.asarray(self.dims) - 1)
        return int(idx[0]), int(idx[1]), int(idx[2])

    def index_to_center(self, idx) -> np.ndarray:
        return self.bbox_min + (np.asarray(idx, dtype=np.float64) + 0.5) * self.resolution

    def state_at(self, p) -> CellState:
        return CellState(int(self.cells[self.world_to_index(p)]))

    def is_free(self, p) -> bool:
        return self.contains(p) and self.cells[self.world_to_index(p)] == K.FREE

    def counts(self) -> dict[CellState, int]:
        binc = np.bincount(self.cells.ravel(), minlength=3)
        return {s: int(binc[s]) for s in CellState}

    def known_count(self) -> int:
        return int(np.count_nonzero(self.cells))

    @property
    def cell_volume(self) -> float:
        return self.resolution ** 3


@dataclass(frozen=True)
class Ray:
    origin: tuple[float, float, float]
    direction: tuple[float, float, float]
    max_range: float

    def __post_init__(self):
        n = math.sqrt(sum(c * c for c in self.direction))
        if abs(n - 1.0) > 1e-9:
            raise InvalidArgument(f"ray direction must be unit length, got norm {n}")
        if not self.max_range > 0:
            raise InvalidArgument("max_range must be positive")


def cast_ray(grid: VoxelGrid, ray: Ray) -> list[tuple[tuple[int, int, int], CellState]]:
    """Cells crossed by ``ray`` in order, ending with the first occupied cell if any."""
    if not grid.contains(ray.origin):
        raise OutOfBounds(f"ray origin {ray.origin} outside grid bbox")
    idx, _ = K.cast_one(
        grid.cells,
        grid.bbox_min,
        grid.resolution,
        np.asarray(ray.origin, dtype=np.float64),
        np.asarray(ray.direction, dtype=np.float64),
        float(ray.max_range),
    )
    return [((int(i), int(j), int(k)), CellState(int(grid.cells[i, j, k]))) for i, j, k in idx]


def cast_ray_segments(grid: VoxelGrid, ray: Ray) -> tuple[np.ndarray, np.ndarray]:
    """Like :func:`cast_ray` but returns raw ``(indices, [t_enter, t_exit])`` arrays."""
    if not grid.contains(ray.origin):
        raise OutOfBounds(f"ray origin {ray.origin} outside grid bbox")
    return K.cast_one(
        grid.cells,
        grid.bbox_min,
        grid.resolution,
        np.asarray(ray.origin, dtype=np.float64),
        np.asarray(ray.direction, dtype=np.float64),
        float(ray.max_range),
    )


def insert_scan(grid: VoxelGrid, sensor_position, hits=(), misses=(), max_range: float = 5.0,
                miss_ranges=None) -> int:
    """Carve free space along each ray and mark hit endpoints occupied.

    ``hits`` are world endpoints; ``misses`` are unit directions that are free
    up to ``max_range`` (or the matching entry of ``miss_ranges``, used for
    rays cut short by a transient occluder). The endpoint cell of a hit is
    the last cell its segment crosses with positive length, so an endpoint
    lying exactly on a cell face resolves to the cell before the face.
    Returns the number of cells that were unknown before this scan.
    """
    o = np.asarray(sensor_position, dtype=np.float64)
    if not grid.contains(o):
        raise OutOfBounds(f"sensor position {tuple(o)} outside grid bbox")
    hits = np.asarray(hits, dtype=np.float64).reshape(-1, 3)
    misses = np.asarray(misses, dtype=np.float64).reshape(-1, 3)
    if miss_ranges is None:
        miss_ends = o + misses * max_range
    else:
        miss_ends = o + misses * np.asarray(miss_ranges, dtype=np.float64).reshape(-1, 1)
    ends = np.concatenate([miss_ends, hits], axis=0)
    is_hit = np.zeros(len(ends), dtype=np.bool_)
    is_hit[len(miss_ends):] = True
    if len(ends) == 0:
        return 0
    return int(K.insert_rays(grid.cells, grid.bbox_min, grid.resolution, o, ends, is_hit))


def _check_compatible(grid: VoxelGrid, bbox_min, bbox_max, resolution) -> None:
    if (
        not np.allclose(grid.bbox_min, bbox_min)
        or not np.allclose(grid.bbox_max, bbox_max)
        or not math.isclose(grid.resolution, resolution)
    ):
        raise ConfigMismatch("grid and ground truth disagree on bbox or resolution")


def coverage(grid: VoxelGrid, ground_truth) -> float:
    """Percent of mappable ground-truth cells that are known in ``grid``.

    ``ground_truth`` is a scenario exposing ``bbox_min``, ``bbox_max``,
    ``resolution`` and ``mappable_mask()``.
    """
    _check_compatible(grid, ground_truth.bbox_min, ground_truth.bbox_max, ground_truth.resolution)
    mask = ground_truth.mappable_mask()
    if mask.shape != grid.cells.shape:
        raise ConfigMismatch("mappable mask shape differs from grid")
    total = int(np.count_nonzero(mask))
    if total == 0:
        return 0.0
    known = int(np.count_nonzero(grid.cells[mask]))
    return 100.0 * known / total


_MAGIC = b"DAEPVOX\0"
_VERSION = 1
_HEADER = struct.Struct("<8sI7d3I")


def save_grid(grid: VoxelGrid, path) -> None:
    header = _HEADER.pack(
        _MAGIC, _VERSION, *grid.bbox_min, *grid.bbox_max, grid.resolution, *grid.dims
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(grid.cells, dtype=np.uint8).tobytes(order="C"))


def load_grid(path) -> VoxelGrid:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise InvalidArgument("truncated grid dump")
    magic, version, *rest = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise InvalidArgument("not a voxel grid dump")
    if version != _VERSION:
        raise InvalidArgument(f"unsupported grid dump version {version}")
    bmin, bmax, res, dims = rest[0:3], rest[3:6], rest[6], tuple(rest[7:10])
    grid = VoxelGrid(bmin, bmax, res)
    if grid.dims != dims:
        raise InvalidArgument("grid dump dims inconsistent with header bbox")
    payload = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size)
    if payload.size != np.prod(dims):
        raise InvalidArgument("grid dump payload size mismatch")
    grid.cells = payload.reshape(dims).copy()
    return grid
