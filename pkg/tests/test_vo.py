"""Tracking loop pieces: Huber kernel, pose refinement, triangulation,
keyframe policy, local map bookkeeping."""

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from depthvo.errors import (
    InsufficientObservations,
    LowParallax,
    NegativeDepth,
    UnknownId,
)
from depthvo.geometry import CameraIntrinsics, PoseSE3, project
from depthvo.vo import (
    Frame,
    Keyframe,
    LocalMap,
    MapPoint,
    TrackerConfig,
    estimate_pose,
    huber,
    keyframe_decision,
    triangulate,
)

K = CameraIntrinsics(fx=320.0, fy=320.0, cx=160.0, cy=120.0, width=320, height=240)


def test_huber_branches():
    assert huber(4.0, 3.0) == (4.0, 1.0)
    assert huber(9.0, 3.0) == (9.0, 1.0)  # boundary: |r| = k
    cost, w = huber(25.0, 3.0)
    assert abs(cost - (2 * 3 * 5 - 9)) < 1e-12
    assert abs(w - 3.0 / 5.0) < 1e-12
    with pytest.raises(ValueError):
        huber(1.0, 0.0)


def random_pose(rng, spread=0.5):
    rot = Rotation.from_rotvec(rng.uniform(-0.3, 0.3, 3)).as_matrix()
    return PoseSE3(rot, rng.uniform(-spread, spread, 3))


def build_problem(rng, n_points=60, outlier_fraction=0.0, noise_px=0.0):
    gt_pose = random_pose(rng)
    points = rng.uniform(-4.0, 4.0, (n_points, 3))
    points[:, 2] = rng.uniform(6.0, 20.0, n_points)
    points = np.linalg.inv(gt_pose.rotation) @ (points - gt_pose.translation).T
    points = points.T  # world points with positive depth in the gt camera
    local_map = LocalMap()
    obs = []
    n_out = int(outlier_fraction * n_points)
    for i, p in enumerate(points):
        pix = project(K, gt_pose, p)
        u = pix.u + rng.normal(0, noise_px)
        v = pix.v + rng.normal(0, noise_px)
        if i < n_out:
            u += rng.uniform(30.0, 80.0) * rng.choice([-1.0, 1.0])
            v += rng.uniform(30.0, 80.0) * rng.choice([-1.0, 1.0])
        local_map.add(MapPoint(i, p, 0))
        obs.append((i, float(u), float(v)))
    frame = Frame(1, 0.1, obs)
    return gt_pose, local_map, frame


def pose_error(a, b):
    dr = Rotation.from_matrix(a.rotation @ b.rotation.T).magnitude()
    dt = np.linalg.norm(a.camera_center - b.camera_center)
    return dr + dt


def perturbed(pose, rng, rot_mag=0.02, trans_mag=0.1):
    wobble = Rotation.from_rotvec(rng.uniform(-rot_mag, rot_mag, 3)).as_matrix()
    return PoseSE3(wobble @ pose.rotation, pose.translation + rng.uniform(-trans_mag, trans_mag, 3))


def test_noise_free_pose_recovery():
    cfg = TrackerConfig(max_iterations=30)
    for seed in range(10):
        rng = np.random.Generator(np.random.PCG64(seed))
        gt_pose, local_map, frame = build_problem(rng)
        est = estimate_pose(frame, local_map, K, perturbed(gt_pose, rng), cfg)
        assert pose_error(est, gt_pose) < 1e-6


def test_outlier_robustness_with_huber():
    cfg = TrackerConfig(max_iterations=40)
    for seed in range(8):
        rng = np.random.Generator(np.random.PCG64(100 + seed))
        gt_pose, local_map, frame = build_problem(rng, outlier_fraction=0.2)
        init = perturbed(gt_pose, rng, rot_mag=0.01, trans_mag=0.05)
        est = estimate_pose(frame, local_map, K, init, cfg)
        assert pose_error(est, gt_pose) < 0.05
        plain = TrackerConfig(max_iterations=40, robust=False)
        est_sq = estimate_pose(frame, local_map, K, init, plain)
        assert pose_error(est, gt_pose) < pose_error(est_sq, gt_pose)


def test_estimate_pose_needs_three_matches():
    local_map = LocalMap()
    local_map.add(MapPoint(0, np.array([0.0, 0.0, 5.0]), 0))
    frame = Frame(0, 0.0, [(0, 160.0, 120.0), (99, 10.0, 10.0)])
    with pytest.raises(InsufficientObservations):
        estimate_pose(frame, local_map, K, PoseSE3.identity(), TrackerConfig())


def test_triangulate_exact_on_perfect_observations():
    rng = np.random.Generator(np.random.PCG64(0))
    pose1 = PoseSE3.identity()
    pose2 = PoseSE3(np.eye(3), np.array([-2.0, 0.0, 0.0]))
    for _ in range(50):
        p = np.array([rng.uniform(-2, 2), rng.uniform(-1.5, 1.5), rng.uniform(5, 20)])
        o1 = project(K, pose1, p)
        o2 = project(K, pose2, p)
        got = triangulate((o1.u, o1.v), (o2.u, o2.v), pose1, pose2, K)
        assert np.linalg.norm(got - p) < 1e-9


def test_triangulate_low_parallax():
    pose1 = PoseSE3.identity()
    pose2 = PoseSE3(np.eye(3), np.array([-1e-4, 0.0, 0.0]))
    p = np.array([0.3, 0.1, 50.0])
    o1 = project(K, pose1, p)
    o2 = project(K, pose2, p)
    with pytest.raises(LowParallax):
        triangulate((o1.u, o1.v), (o2.u, o2.v), pose1, pose2, K)


def test_triangulate_negative_depth():
    pose1 = PoseSE3.identity()
    pose2 = PoseSE3(np.eye(3), np.array([-2.0, 0.0, 0.0]))
    # Crossed rays meet behind both cameras.
    with pytest.raises(NegativeDepth):
        triangulate((40.0, 120.0), (300.0, 120.0), pose1, pose2, K)


def test_keyframe_decision_policy():
    kf_pose = PoseSE3.identity()
    kf = Keyframe(10, 1.0, kf_pose, [])
    near = Frame(12, 1.2, [], PoseSE3(np.eye(3), np.array([-0.4, 0.0, 0.0])))
    far = Frame(12, 1.2, [], PoseSE3(np.eye(3), np.array([-1.0, 0.0, 0.0])))
    assert keyframe_decision(Frame(0, 0.0, [], kf_pose), None, 1.0, 5)
    assert not keyframe_decision(near, kf, 1.0, 5)
    assert keyframe_decision(far, kf, 1.0, 5)  # threshold is inclusive
    stale = Frame(16, 1.6, [], near.pose)
    assert keyframe_decision(stale, kf, 1.0, 5)
    assert not keyframe_decision(Frame(15, 1.5, [], near.pose), kf, 1.0, 5)


def test_local_map_removals_are_final():
    local_map = LocalMap()
    for i in range(4):
        local_map.add(MapPoint(i, np.zeros(3), 0))
    local_map.record_observation(2, 7)
    assert local_map.points[2].observation_count == 1
    assert local_map.remove_points([2, 3]) == 2
    assert local_map.removed_ids == {2, 3}
    assert 2 not in local_map.observers
    with pytest.raises(UnknownId):
        local_map.remove_points([2])
    local_map.record_observation(2, 8)  # silently ignored after removal
    assert len(local_map) == 2
