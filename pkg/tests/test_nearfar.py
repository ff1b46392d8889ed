"""Near-far filter: rank displacement vs a brute-force oracle, thresholds."""

import numpy as np
import pytest

from depthvo.depthmap import DepthMap
from depthvo.errors import NonPositiveDepth, TooFewPoints
from depthvo.geometry import CameraIntrinsics, PoseSE3
from depthvo.nearfar import (
    ProjectedPoint,
    default_sigma,
    project_local_map,
    rank_displacement,
    select_outliers,
)
from depthvo.vo import LocalMap, MapPoint

K = CameraIntrinsics(fx=100.0, fy=100.0, cx=32.0, cy=24.0, width=64, height=48)


def make_points(rng, n, tie_fraction=0.0):
    ids = rng.permutation(10 * n)[:n]
    z_vo = rng.uniform(1.0, 50.0, n)
    z_pred = rng.uniform(1.0, 50.0, n)
    n_tie = int(tie_fraction * n)
    if n_tie:
        z_vo[:n_tie] = z_vo[0]
        z_pred[-n_tie:] = z_pred[-1]
    return [
        ProjectedPoint(int(i), 0.0, 0.0, float(a), float(b))
        for i, a, b in zip(ids, z_vo, z_pred)
    ]


def brute_force_ranks(points, key):
    # 1-based rank by counting strictly-smaller pairs, ties broken by id.
    out = {}
    for p in points:
        smaller = sum(
            1
            for q in points
            if key(q) < key(p) or (key(q) == key(p) and q.map_point_id < p.map_point_id)
        )
        out[p.map_point_id] = smaller + 1
    return out


def test_rank_displacement_matches_brute_force_oracle():
    rng = np.random.Generator(np.random.PCG64(0))
    for trial in range(300):
        n = int(rng.integers(2, 60))
        points = make_points(rng, n, tie_fraction=0.3 if trial % 3 == 0 else 0.0)
        report = rank_displacement(points)
        vo = brute_force_ranks(points, lambda p: p.z_vo)
        pred = brute_force_ranks(points, lambda p: p.z_pred)
        for p in points:
            assert report.lambdas[p.map_point_id] == abs(
                vo[p.map_point_id] - pred[p.map_point_id]
            )


def test_exact_ties_contribute_zero_displacement():
    points = [ProjectedPoint(i, 0.0, 0.0, 5.0, 9.0) for i in range(8)]
    report = rank_displacement(points)
    assert all(lam == 0 for lam in report.lambdas.values())


def test_monotone_transform_invariance():
    rng = np.random.Generator(np.random.PCG64(1))
    points = make_points(rng, 80)
    base = rank_displacement(points).lambdas
    for seed in range(50):
        t_rng = np.random.Generator(np.random.PCG64(seed))
        a = float(t_rng.uniform(0.1, 5.0))
        b = float(t_rng.uniform(0.0, 3.0))
        power = float(t_rng.uniform(0.3, 2.0))
        mapped = [
            ProjectedPoint(p.map_point_id, p.u, p.v, p.z_vo, a * p.z_pred**power + b)
            for p in points
        ]
        assert rank_displacement(mapped).lambdas == base


def test_default_sigma():
    assert default_sigma(2) == 3.0
    assert default_sigma(10) == 3.0
    assert default_sigma(31) == 4.0
    assert default_sigma(95) == 10.0
    assert default_sigma(100) == 10.0
    assert default_sigma(1000) == 100.0


def test_select_outliers_strict_threshold():
    rng = np.random.Generator(np.random.PCG64(2))
    points = make_points(rng, 40)
    report = rank_displacement(points)
    lam_max = max(report.lambdas.values())
    assert select_outliers(report, lam_max) == set()
    below = select_outliers(report, lam_max - 1)
    assert below == {pid for pid, lam in report.lambdas.items() if lam == lam_max}
    assert report.sigma == lam_max - 1
    with pytest.raises(ValueError):
        select_outliers(report, -1.0)


def test_sigma_at_least_n_minus_one_never_fires():
    # The largest possible displacement on n points is n - 1.
    rng = np.random.Generator(np.random.PCG64(3))
    for _ in range(50):
        n = int(rng.integers(2, 200))
        points = make_points(rng, n)
        report = rank_displacement(points)
        assert max(report.lambdas.values()) <= n - 1
        assert select_outliers(report, n - 1) == set()


def test_rank_displacement_needs_two_points():
    with pytest.raises(TooFewPoints):
        rank_displacement([ProjectedPoint(0, 0.0, 0.0, 1.0, 1.0)])


def test_projected_point_rejects_non_positive_depth():
    with pytest.raises(NonPositiveDepth):
        ProjectedPoint(0, 0.0, 0.0, 0.0, 1.0)
    with pytest.raises(NonPositiveDepth):
        ProjectedPoint(0, 0.0, 0.0, 1.0, -2.0)


def test_project_local_map_filters_unusable_points():
    depth = DepthMap(np.full((48, 64), 4.0))
    points = [
        MapPoint(1, np.array([0.0, 0.0, 5.0]), 0),  # usable
        MapPoint(2, np.array([0.0, 0.0, -1.0]), 0),  # behind the camera
        MapPoint(3, np.array([100.0, 0.0, 5.0]), 0),  # projects out of bounds
    ]
    out = project_local_map(points, PoseSE3.identity(), K, depth)
    assert [p.map_point_id for p in out] == [1]
    assert out[0].z_vo == 5.0 and out[0].z_pred == 4.0
    assert out[0].u == K.cx and out[0].v == K.cy


def test_project_local_map_skips_invalid_depth_samples():
    valid = np.zeros((48, 64), dtype=bool)
    depth = DepthMap(np.ones((48, 64)), valid)
    points = [MapPoint(1, np.array([0.0, 0.0, 5.0]), 0)]
    assert project_local_map(points, PoseSE3.identity(), K, depth) == []


def test_apply_filter_removes_from_local_map():
    local_map = LocalMap()
    for i in range(5):
        local_map.add(MapPoint(i, np.array([0.0, 0.0, float(i + 1)]), 0))
    from depthvo.nearfar import apply_filter

    assert apply_filter(local_map, [1, 3]) == 2
    assert set(local_map.points) == {0, 2, 4}
    assert local_map.removed_ids == {1, 3}
