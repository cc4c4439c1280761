import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from daep.errors import InvalidArgument, OutOfBounds
from daep.gain import (PlannerWeights, SensorModel, bin_yaws, border_boost, dynamic_gain, gain_with_cylinders,
                       static_gain, score, window_weights)
from daep.geometry import Pose
from daep.prediction import Predictor, new_track
from daep.sim.scenario import Scenario
from daep.sim.world import World, observe_obstacles, render_depth
from daep.voxelmap import CellState, VoxelGrid, insert_scan

from gain_oracle import random_grid, view_volume, window_at

W = PlannerWeights()


def mp_score(d, c, m, lam=0.75, zeta=0.5):
    mpmath.mp.dps = 50
    return mpmath.mpf(d) * mpmath.exp(-mpmath.mpf(lam) * mpmath.mpf(c)) * (1 + mpmath.mpf(zeta) * mpmath.mpf(m))


# ----- score -------------------------------------------------------------

def test_score_examples():
    assert score(10.0, 0.0, 0.0) == 10.0
    assert score(10.0, 2.0, 1.0) == pytest.approx(3.3469524, abs=5e-8)
    assert score(0.0, 3.0, 0.7) == 0.0


def test_score_matches_high_precision():
    rng = np.random.default_rng(0)
    for d, c, m in zip(rng.uniform(0, 100, 10_000), rng.uniform(0, 30, 10_000), rng.uniform(0, 1, 10_000)):
        want = mp_score(d, c, m)
        got = score(float(d), float(c), float(m), W)
        if want == 0:
            assert got == 0
        else:
            assert abs((mpmath.mpf(got) - want) / want) <= 1e-12


@pytest.mark.parametrize("args", [(-1, 0, 0), (1, -0.1, 0), (1, 0, 1.5), (1, 0, -0.1), (math.nan, 0, 0), (1, math.inf, 0)])
def test_score_domain(args):
    with pytest.raises(InvalidArgument):
        score(*args)


@settings(max_examples=500)
@given(st.floats(0.01, 1e3), st.floats(0.01, 1e3), st.floats(0, 20), st.floats(0, 20), st.floats(0, 1), st.floats(0, 1))
def test_score_monotonicity(d1, d2, c1, c2, m1, m2):
    lo, hi = sorted((d1, d2))
    if lo < hi:
        assert score(lo, c1, m1) < score(hi, c1, m1)
    lo, hi = sorted((c1, c2))
    if hi - lo > 1e-9 and d1 * math.exp(-0.75 * hi) > 1e-300:
        assert score(d1, lo, m1) > score(d1, hi, m1)
    lo, hi = sorted((m1, m2))
    if hi - lo > 1e-12:
        assert score(d1, c1, lo) < score(d1, c1, hi)


def test_weights_validation():
    with pytest.raises(InvalidArgument):
        PlannerWeights(alpha=0.5)
    with pytest.raises(InvalidArgument):
        PlannerWeights(lam=-1)
    with pytest.raises(InvalidArgument):
        SensorModel(horizontal_fov=190)
    with pytest.raises(InvalidArgument):
        SensorModel(rays_vertical=2)


# ----- border boost ------------------------------------------------------

def test_border_boost_examples():
    bbox = ((0, 0, 0), (10, 8, 3))
    assert border_boost(2.0, (5, 4, 1), bbox, PlannerWeights(border_margin=1.0)) == 2.0
    assert border_boost(2.0, (0.5, 4, 1), bbox) == 12.0


def test_border_boost_classification_matches_distance_oracle():
    rng = np.random.default_rng(5)
    bmin, bmax = np.array((-3.0, 1.0, 0.0)), np.array((7.0, 5.0, 2.5))
    for _ in range(1000):
        p = rng.uniform(bmin, bmax)
        margin = float(rng.uniform(0, 2))
        dist = min(p[0] - bmin[0], bmax[0] - p[0], p[1] - bmin[1], bmax[1] - p[1])
        got = border_boost(1.0, p, (bmin, bmax), PlannerWeights(border_margin=margin))
        assert got == (6.0 if dist <= margin else 1.0)


# ----- gains -------------------------------------------------------------

def test_fully_mapped_grid_has_no_gain():
    g = VoxelGrid((0, 0, 0), (4, 4, 4), 0.2)
    g.cells[:] = CellState.FREE
    r = static_gain(g, (2, 2, 2))
    assert r.gain == 0.0 and all(v == 0 for v in r.yaw_bins)


def test_viewpoint_outside():
    g = VoxelGrid((0, 0, 0), (1, 1, 1), 0.2)
    with pytest.raises(OutOfBounds):
        static_gain(g, (2, 0.5, 0.5))


def test_unknown_half_space_picks_forward_yaw():
    g = VoxelGrid((0, 0, 0), (8, 8, 4), 0.2)
    g.cells[:] = CellState.FREE
    g.cells[20:] = CellState.UNKNOWN
    r = static_gain(g, (4.0, 4.0, 2.0))
    assert abs(r.best_yaw) <= 2 * math.pi / 32 + 1e-12


def test_yaw_tie_goes_to_smallest_absolute_yaw():
    g = VoxelGrid((0, 0, 0), (8, 8, 8), 0.2)
    r = static_gain(g, (4.0, 4.0, 4.0))  # symmetric scene, every window equal
    assert r.best_yaw == 0.0
    assert bin_yaws()[16] == 0.0


def test_window_weights_span_the_fov():
    w = window_weights(103.2)
    assert sum(w.values()) * 360 / 32 == pytest.approx(103.2)
    assert all(0 < v <= 1 for v in w.values())


def test_all_unknown_gain_matches_frustum_enumeration():
    g = VoxelGrid((0, 0, 0), (8, 8, 6), 0.2)
    p = np.array((4.0, 4.0, 3.0))
    r = static_gain(g, p)
    want = view_volume(g, p, r.best_yaw, SensorModel(), sub=1)[0]
    assert r.gain == pytest.approx(want, rel=0.10)


def test_dynamic_gain_without_tracks_equals_static():
    g, p = random_grid(3)
    a = static_gain(g, p)
    b = dynamic_gain(g, p, 5.0, [])
    assert a == b


def test_obstacle_outside_frustum_leaves_gain_unchanged():
    g, p = random_grid(4)
    far = new_track(0, (p[0] - 0.2, p[1], p[2] + 6.0), 0.0)  # far above the vertical FoV and range
    a = static_gain(g, p)
    b = dynamic_gain(g, p, 0.0, [far])
    assert a.gain == b.gain and a.best_yaw == b.best_yaw


def test_obstacle_ahead_reduces_gain_by_its_shadow():
    g = VoxelGrid((0, 0, 0), (8, 6, 4), 0.2)
    p = np.array((3.0, 3.0, 2.0))
    s = SensorModel(rays_horizontal=256, rays_vertical=64)
    tr = new_track(0, (4.0, 3.0, 0.5), 0.0)
    cyl = tuple(Predictor().cylinders([tr], tr.last_update)[0])
    st_ = static_gain(g, p, s)
    dy = dynamic_gain(g, p, 0.0, [tr], s)
    assert dy.gain < st_.gain
    yi = 16
    deficit = window_at(st_, yi, s) - window_at(dy, yi, s)
    want = view_volume(g, p, 0.0, s, sub=2, cyl=cyl)[1]
    assert deficit == pytest.approx(want, rel=0.10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 5))
def test_dynamic_never_exceeds_static(seed, dt):
    rng = np.random.default_rng(seed)
    g, p = random_grid(seed)
    tracks = [new_track(i, rng.uniform((0, 0, 0), (4, 4, 2)), 0.0) for i in range(int(rng.integers(1, 4)))]
    a = static_gain(g, p)
    b = dynamic_gain(g, p, dt, tracks)
    assert b.gain <= a.gain + 1e-12
    assert all(y <= x + 1e-12 for x, y in zip(a.yaw_bins, b.yaw_bins))
    assert -math.pi <= b.best_yaw < math.pi and b.gain >= 0


def test_observed_obstacle_equals_marking_it_occupied():
    # the same cylinder once as a predicted volume and once as occupied cells
    g = VoxelGrid((0, 0, 0), (10, 10, 4), 0.2)
    p = np.array((5.1, 5.1, 1.1))
    cyl = (7.1, 5.1, 0.0, 4.0, 0.5)
    dyn = gain_with_cylinders(g, p, [cyl])
    occ = g.copy()
    centers = occ.bbox_min + (np.argwhere(np.ones(occ.dims, bool)) + 0.5) * occ.resolution
    inside = (centers[:, 0] - cyl[0]) ** 2 + (centers[:, 1] - cyl[1]) ** 2 < cyl[4] ** 2
    occ.cells.reshape(-1)[np.flatnonzero(inside)] = CellState.OCCUPIED
    sta = static_gain(occ, p)
    assert dyn.gain == pytest.approx(sta.gain, rel=0.10)
    assert abs(dyn.best_yaw - sta.best_yaw) <= 2 * math.pi / 32 + 1e-12


def test_ray_density_convergence():
    # fixed scene: a room with a pillar and a partition, mapped by one scan from the viewpoint
    scen = Scenario("room", (0, 0, 0), (8, 6, 3), 0.2,
                    static_solids=[[3.0, 2.6, 0.0, 3.8, 3.4, 3.0], [5.0, 0.0, 0.0, 5.4, 4.0, 3.0]],
                    start_poses=[(1, 1, 1)] * 5)
    pose = Pose(1.1, 3.1, 1.3, 0.0)
    scan = render_depth(World(scen, dynamic=False), pose)
    g = VoxelGrid(scen.bbox_min, scen.bbox_max, scen.resolution)
    insert_scan(g, scan.origin, scan.hits, scan.misses, 5.0, scan.miss_ranges)
    base = static_gain(g, pose.position)
    doubled = static_gain(g, pose.position, SensorModel(rays_horizontal=64, rays_vertical=16))
    assert abs(doubled.gain - base.gain) < 0.05 * base.gain


def test_gain_in_a_simulated_room_is_finite_and_positive():
    scen = Scenario("r", (0, 0, 0), (6, 6, 3), 0.2, static_solids=[[2, 2, 0, 3, 3, 3]], start_poses=[(1, 1, 1)] * 5,
                    obstacle_paths=[{"waypoints": [(4.5, 1, 0), (4.5, 5, 0)], "mode": "back-and-forth"}])
    w = World(scen)
    obs = observe_obstacles(w, Pose(1, 1, 1))
    tracks = [new_track(i, p, 0.0) for i, p in obs]
    g = VoxelGrid(scen.bbox_min, scen.bbox_max, scen.resolution)
    r = dynamic_gain(g, (1, 1, 1), 1.0, tracks)
    assert 0 < r.gain < scen.volume
