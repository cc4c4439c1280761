"""Obstacle tracking with a constant-velocity Kalman filter, and the
dynamic frequency map (a 2D heat map of where obstacles have been)."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from .errors import InvalidMeasurement, TimeRegression

log = logging.getLogger(__name__)

_H = np.hstack([np.eye(3), np.zeros((3, 3))])


@dataclass(frozen=True)
class KalmanConfig:
    process_noise: float = 0.1  # white-noise acceleration intensity q [m^2/s^3]
    measurement_std: float = 0.05  # isotropic position noise [m]
    initial_velocity_std: float = 0.5  # prior on walking speed [m/s]


@dataclass(frozen=True)
class ObstacleTrack:
    id: int
    mean: np.ndarray  # (x, y, z, vx, vy, vz)
    covariance: np.ndarray  # 6x6
    last_update: float
    radius: float = 0.3
    height: float = 1.8

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("track radius must be positive")

    @property
    def position(self) -> np.ndarray:
        return self.mean[:3]

    @property
    def velocity(self) -> np.ndarray:
        return self.mean[3:]


@dataclass(frozen=True)
class PredictedState:
    time: float
    mean_position: np.ndarray
    position_covariance: np.ndarray


def transition(dt: float) -> np.ndarray:
    F = np.eye(6)
    F[0:3, 3:6] = dt * np.eye(3)
    return F


def process_noise(dt: float, q: float) -> np.ndarray:
    """Continuous white-noise-acceleration covariance integrated over dt."""
    I = np.eye(3)
    Q = np.empty((6, 6))
    Q[0:3, 0:3] = q * dt ** 3 / 3.0 * I
    Q[0:3, 3:6] = q * dt ** 2 / 2.0 * I
    Q[3:6, 0:3] = q * dt ** 2 / 2.0 * I
    Q[3:6, 3:6] = q * dt * I
    return Q


def new_track(track_id: int, position, t: float, radius: float = 0.3, height: float = 1.8,
              config: KalmanConfig = KalmanConfig()) -> ObstacleTrack:
    p = np.asarray(position, dtype=np.float64)
    if p.shape != (3,) or not np.all(np.isfinite(p)):
        raise InvalidMeasurement(f"bad measurement {position!r}")
    mean = np.concatenate([p, np.zeros(3)])
    cov = np.diag([config.measurement_std ** 2] * 3 + [config.initial_velocity_std ** 2] * 3)
    return ObstacleTrack(int(track_id), mean, cov, float(t), float(radius), float(height))


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def track_update(track: ObstacleTrack, measured_position, t: float,
                 config: KalmanConfig = KalmanConfig(), measurement_std: float | None = None
                 ) -> ObstacleTrack:
    """Predict ``track`` forward to ``t`` and fuse a position measurement.

    Uses the Joseph-form covariance update so the result stays symmetric
    positive semi-definite under round-off.
    """
    z = np.asarray(measured_position, dtype=np.float64)
    if z.shape != (3,) or not np.all(np.isfinite(z)):
        raise InvalidMeasurement(f"bad measurement {measured_position!r}")
    if t < track.last_update:
        raise TimeRegression(f"update at t={t} precedes last update {track.last_update}")
    dt = t - track.last_update
    F = transition(dt)
    x = F @ track.mean
    P = _symmetrize(F @ track.covariance @ F.T + process_noise(dt, config.process_noise))

    sigma = config.measurement_std if measurement_std is None else measurement_std
    R = sigma ** 2 * np.eye(3)
    S = _H @ P @ _H.T + R
    K_gain = np.linalg.solve(S.T, (P @ _H.T).T).T
    x = x + K_gain @ (z - _H @ x)
    IKH = np.eye(6) - K_gain @ _H
    P = _symmetrize(IKH @ P @ IKH.T + K_gain @ R @ K_gain.T)
    return replace(track, mean=x, covariance=P, last_update=float(t))


def predict_track(track: ObstacleTrack, horizon: float = 5.0, step: float = 0.5,
                  config: KalmanConfig = KalmanConfig(), frozen: bool = False
                  ) -> list[PredictedState]:
    """Open-loop constant-velocity prediction at ``last_update + k*step``, k = 0..horizon/step.

    With ``frozen`` the obstacle is held at its current position and
    covariance for every horizon (the reactive-only ablation).
    """
    if not (horizon > 0 and step > 0):
        raise ValueError("horizon and step must be positive")
    n = int(math.floor(horizon / step + 1e-9))
    out = []
    for k in range(n + 1):
        dt = k * step
        mean, cov = _propagate(track, dt, config.process_noise, frozen)
        out.append(PredictedState(track.last_update + dt, mean, cov))
    return out


def _propagate(track: ObstacleTrack, dt: float, q: float, frozen: bool):
    if frozen:
        return track.position.copy(), track.covariance[0:3, 0:3].copy()
    P = track.covariance
    mean = track.position + track.velocity * dt
    cov = (
        P[0:3, 0:3]
        + dt * (P[0:3, 3:6] + P[3:6, 0:3])
        + dt * dt * P[3:6, 3:6]
        + q * dt ** 3 / 3.0 * np.eye(3)
    )
    return mean, _symmetrize(cov)


@dataclass(frozen=True)
class Predictor:
    """How planners turn tracks into predicted obstacle volumes.

    A predicted obstacle is a vertical cylinder around the predicted mean,
    its radius grown by ``kappa`` times the largest position standard
    deviation. Predictions further than ``horizon`` past a track's last
    update are not trusted and the track is ignored at such times.
    """

    config: KalmanConfig = KalmanConfig()
    kappa: float = 2.0
    horizon: float = 5.0
    frozen: bool = False

    def state_at(self, track: ObstacleTrack, t: float):
        dt = max(0.0, t - track.last_update)
        return _propagate(track, dt, self.config.process_noise, self.frozen)

    def sigma_max(self, track: ObstacleTrack, t: float) -> float:
        _, cov = self.state_at(track, t)
        lam = float(np.linalg.eigvalsh(cov)[-1])
        return math.sqrt(max(lam, 0.0))

    def trusted(self, track: ObstacleTrack, t: float) -> bool:
        return t - track.last_update <= self.horizon + 1e-9

    def cylinders(self, tracks, t: float) -> np.ndarray:
        """``(k, 5)`` array ``(cx, cy, z0, z1, r)`` of inflated predicted volumes at ``t``."""
        rows = []
        for tr in tracks:
            if not self.trusted(tr, t):
                continue
            mean, cov = self.state_at(tr, t)
            infl = self.kappa * math.sqrt(max(float(np.linalg.eigvalsh(cov)[-1]), 0.0))
            rows.append((mean[0], mean[1], mean[2] - infl, mean[2] + tr.height + infl, tr.radius + infl))
        if not rows:
            return np.zeros((0, 5))
        return np.asarray(rows, dtype=np.float64)

    def kernel_arrays(self, tracks):
        """Per-track arrays for the compiled timed-clearance check."""
        n = len(tracks)
        tp = np.zeros((n, 3))
        tv = np.zeros((n, 3))
        tA = np.zeros((n, 3, 3))
        tB = np.zeros((n, 3, 3))
        tC = np.zeros((n, 3, 3))
        tq = np.zeros(n)
        tt0 = np.zeros(n)
        tr = np.zeros(n)
        th = np.zeros(n)
        for i, track in enumerate(tracks):
            P = track.covariance
            tp[i] = track.position
            tA[i] = P[0:3, 0:3]
            if not self.frozen:
                tv[i] = track.velocity
                tB[i] = P[0:3, 3:6] + P[3:6, 0:3]
                tC[i] = P[3:6, 3:6]
                tq[i] = self.config.process_noise
            tt0[i] = track.last_update
            tr[i] = track.radius
            th[i] = track.height
        return tp, tv, tA, tB, tC, tq, tt0, tr, th


def predicted_sigma(A, B, C, q, dt) -> float:
    return float(K.predicted_sigma(np.asarray(A, float), np.asarray(B, float), np.asarray(C, float),
                                   float(q), float(dt)))


class TrackManager:
    """Owns one track per observed obstacle id; drops tracks left unobserved too long."""

    def __init__(self, config: KalmanConfig = KalmanConfig(), timeout: float = 3.0):
        self.config = config
        self.timeout = timeout
        self.tracks: dict[int, ObstacleTrack] = {}

    def update(self, observations, t: float, radius: float = 0.3, height: float = 1.8) -> None:
        for oid, pos in observations:
            tr = self.tracks.get(oid)
            if tr is None:
                self.tracks[oid] = new_track(oid, pos, t, radius, height, self.config)
            else:
                self.tracks[oid] = track_update(tr, pos, t, self.config)
        stale = [oid for oid, tr in self.tracks.items() if t - tr.last_update > self.timeout]
        for oid in stale:
            del self.tracks[oid]

    def snapshot(self) -> list[ObstacleTrack]:
        return [self.tracks[k] for k in sorted(self.tracks)]


@dataclass
class FrequencyGrid:
    bbox_min: tuple[float, float]
    bbox_max: tuple[float, float]
    cell_size: float = 1.0
    counts: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.bbox_min = (float(self.bbox_min[0]), float(self.bbox_min[1]))
        self.bbox_max = (float(self.bbox_max[0]), float(self.bbox_max[1]))
        nx = max(1, int(math.ceil((self.bbox_max[0] - self.bbox_min[0]) / self.cell_size - 1e-9)))
        ny = max(1, int(math.ceil((self.bbox_max[1] - self.bbox_min[1]) / self.cell_size - 1e-9)))
        if self.counts is None:
            self.counts = np.zeros((nx, ny), dtype=np.int64)
        self.max_count = int(self.counts.max()) if self.counts.size else 0

    def cell_of(self, p):
        x, y = float(p[0]), float(p[1])
        if not (self.bbox_min[0] <= x <= self.bbox_max[0] and self.bbox_min[1] <= y <= self.bbox_max[1]):
            return None
        i = min(int((x - self.bbox_min[0]) // self.cell_size), self.counts.shape[0] - 1)
        j = min(int((y - self.bbox_min[1]) // self.cell_size), self.counts.shape[1] - 1)
        return i, j


def dfm_record(grid: FrequencyGrid, obstacle_positions, t: float | None = None) -> FrequencyGrid:
    for p in obstacle_positions:
        c = grid.cell_of(p)
        if c is None:
            log.debug("obstacle at %s outside frequency-map footprint (t=%s)", tuple(p), t)
            continue
        grid.counts[c] += 1
        if grid.counts[c] > grid.max_count:
            grid.max_count = int(grid.counts[c])
    return grid


def dfm_query(grid: FrequencyGrid, p) -> float:
    if grid.max_count == 0:
        return 0.0
    c = grid.cell_of(p)
    if c is None:
        return 0.0
    return float(grid.counts[c]) / grid.max_count


def export_dfm_csv(grid: FrequencyGrid, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["cell_x", "cell_y", "count"])
        for i in range(grid.counts.shape[0]):
            for j in range(grid.counts.shape[1]):
                w.writerow([i, j, int(grid.counts[i, j])])
