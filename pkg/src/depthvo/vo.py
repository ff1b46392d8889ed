"""The host visual-odometry loop.

Per frame: constant-velocity pose prediction, robust reprojection-error
minimization (IRLS with a Huber kernel and Levenberg damping), then the
near-far consistency filter. Per keyframe: triangulation of new map points,
scale recovery of the learned depth, and storage of the rescaled depth for
dense mapping. Keyframe poses freeze at selection; there is no global bundle
adjustment or loop closure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .depthmap import DepthMap, SparseDepthMap
from .errors import (
    Diverged,
    InsufficientObservations,
    LowParallax,
    NegativeDepth,
    TrackingLost,
    UnknownId,
)
from .geometry import CameraIntrinsics, PoseSE3, Trajectory, compose, inverse
from . import nearfar
from .provider import normalize_sparse
from .scale import recover_scale, rescale_depth


@dataclass
class Frame:
    id: int
    timestamp: float
    observations: list  # (track_id, u, v)
    pose: PoseSE3 | None = None


@dataclass
class MapPoint:
    id: int
    position: np.ndarray
    ref_keyframe_id: int
    observation_count: int = 0


@dataclass
class Keyframe:
    frame_id: int
    timestamp: float
    pose: PoseSE3
    observations: list
    depth: DepthMap | None = None  # rescaled predicted depth, for mapping
    theta_s: float | None = None
    sparse_vo: SparseDepthMap | None = None


class LocalMap:
    """Map points plus per-point frame-observation bookkeeping.

    Single-writer: the tracking loop is the only mutator.
    """

    def __init__(self):
        self.points: dict[int, MapPoint] = {}
        self.observers: dict[int, set] = {}
        self.removed_ids: set = set()

    def __len__(self):
        return len(self.points)

    def add(self, point: MapPoint):
        self.points[point.id] = point
        self.observers[point.id] = set()

    def record_observation(self, point_id: int, frame_id: int):
        if point_id in self.points:
            self.observers[point_id].add(frame_id)
            self.points[point_id].observation_count += 1

    def remove_points(self, ids) -> int:
        """Remove points and their observation records; removals are final."""
        removed = 0
        for pid in ids:
            if pid not in self.points:
                raise UnknownId(f"map point {pid} not in the local map")
            del self.points[pid]
            del self.observers[pid]
            self.removed_ids.add(pid)
            removed += 1
        return removed


def huber(residual_sq: float, k: float):
    """Huber cost of a squared residual and the matching IRLS weight.

    Quadratic below k^2, linear above; the two branches agree at |r| = k.
    """
    if k <= 0:
        raise ValueError("huber threshold must be positive")
    r = math.sqrt(residual_sq)
    if r <= k:
        return residual_sq, 1.0
    return 2 * k * r - k * k, k / r


@dataclass
class TrackerConfig:
    filter_enabled: bool = True
    sigma: float | str = "adaptive"  # near-far threshold, or "adaptive"
    min_filter_set_size: int = nearfar.MIN_FILTER_SET_SIZE
    keyframe_translation_factor: float = 0.2  # x median scene depth
    max_gap: int = 10
    sigma_px: float = 1.0
    huber_k: float = 1.345  # in units of sigma_px
    robust: bool = True
    max_iterations: int = 10
    min_parallax_deg: float = 1.0
    predict_keyframe_depth: bool = False
    replay_removals: dict | None = None  # frame_id -> iterable of point ids


def _observed_map_points(frame: Frame, local_map: LocalMap):
    matched = []
    for tid, u, v in frame.observations:
        mp = local_map.points.get(tid)
        if mp is not None:
            matched.append((mp, u, v))
    return matched


def _project_residuals(points, obs, pose: PoseSE3, K, sigma_px):
    """Camera-frame points and whitened reprojection residuals, batched."""
    p_cam = points @ pose.rotation.T + pose.translation
    z = p_cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        ru = (p_cam[:, 0] / z * K.fx + K.cx - obs[:, 0]) / sigma_px
        rv = (p_cam[:, 1] / z * K.fy + K.cy - obs[:, 1]) / sigma_px
    return p_cam, ru, rv


def _robust_cost(points, obs, pose, K, sigma_px, k, robust):
    p_cam, ru, rv = _project_residuals(points, obs, pose, K, sigma_px)
    if np.any(p_cam[:, 2] <= 1e-9):
        return np.inf, 0  # a point moved behind the camera
    r_sq = ru * ru + rv * rv
    if robust:
        r = np.sqrt(r_sq)
        per_point = np.where(r <= k, r_sq, 2 * k * r - k * k)
    else:
        per_point = r_sq
    return float(per_point.sum()), len(per_point)


def _normal_equations(points, obs, pose: PoseSE3, K, sigma_px, k, robust):
    """Huber-weighted Gauss-Newton system for a left pose increment.

    Residual r = projected - observed (in units of sigma_px). The local
    increment is (rotation, translation); a camera point responds as
    dp = omega x p + dt, so dp/ddelta = [-[p]x | I], and the pixel rows
    follow from the pinhole projection Jacobian.
    """
    p_cam, ru, rv = _project_residuals(points, obs, pose, K, sigma_px)
    front = p_cam[:, 2] > 1e-9
    p_cam, ru, rv = p_cam[front], ru[front], rv[front]
    x, y, z = p_cam[:, 0], p_cam[:, 1], p_cam[:, 2]
    a = K.fx / (z * sigma_px)
    b = -K.fx * x / (z * z * sigma_px)
    c = K.fy / (z * sigma_px)
    d = -K.fy * y / (z * z * sigma_px)
    zero = np.zeros_like(a)
    ju = np.stack([b * y, a * z - b * x, -a * y, a, zero, b], axis=1)
    jv = np.stack([d * y - c * z, -d * x, c * x, zero, c, d], axis=1)
    if robust:
        r = np.hypot(ru, rv)
        w = np.where(r <= k, 1.0, k / np.maximum(r, 1e-300))
    else:
        w = np.ones_like(ru)
    h = ju.T @ (ju * w[:, None]) + jv.T @ (jv * w[:, None])
    g = ju.T @ (w * ru) + jv.T @ (w * rv)
    return h, g


def _retract(pose: PoseSE3, delta: np.ndarray) -> PoseSE3:
    rot = Rotation.from_rotvec(delta[:3]).as_matrix()
    increment = PoseSE3(rot, delta[3:])
    return compose(increment, pose)


def estimate_pose(
    frame: Frame,
    local_map: LocalMap,
    K: CameraIntrinsics,
    init: PoseSE3,
    config: TrackerConfig,
) -> PoseSE3:
    """IRLS pose refinement minimizing Huber-weighted reprojection error."""
    matched = _observed_map_points(frame, local_map)
    if len(matched) < 3:
        raise InsufficientObservations(
            f"frame {frame.id}: {len(matched)} observed map points, need >= 3"
        )
    points = np.array([mp.position for mp, _, _ in matched])
    obs = np.array([[u, v] for _, u, v in matched])
    k = config.huber_k
    pose = init
    cost, n_used = _robust_cost(points, obs, pose, K, config.sigma_px, k, config.robust)
    if n_used < 3:
        raise InsufficientObservations(
            f"frame {frame.id}: only {n_used} points in front of the camera"
        )
    lam = 1e-4
    for _ in range(config.max_iterations):
        h, g = _normal_equations(points, obs, pose, K, config.sigma_px, k, config.robust)
        rejections = 0
        converged = False
        while True:
            try:
                delta = np.linalg.solve(h + lam * np.eye(6), -g)
            except np.linalg.LinAlgError:
                delta = np.linalg.lstsq(h + lam * np.eye(6), -g, rcond=None)[0]
            if np.linalg.norm(delta) < 1e-8:
                # The damped step has shrunk to nothing: we are at a minimum,
                # not diverging, even if larger steps were just rejected.
                converged = True
                break
            candidate = _retract(pose, delta)
            cand_cost, _ = _robust_cost(
                points, obs, candidate, K, config.sigma_px, k, config.robust
            )
            if cand_cost <= cost + 1e-15:
                pose = candidate
                cost = cand_cost
                lam = max(lam * 0.5, 1e-12)
                break
            lam *= 10.0
            rejections += 1
            if rejections >= 3:
                raise Diverged(f"frame {frame.id}: cost increased 3 times in a row")
        if converged or np.linalg.norm(delta) < 1e-8:
            break
    return pose


def triangulate(obs1, obs2, pose1: PoseSE3, pose2: PoseSE3, K: CameraIntrinsics):
    """Two-view triangulation: midpoint of the common perpendicular."""
    c1 = pose1.camera_center
    c2 = pose2.camera_center

    def ray(pose, obs):
        u, v = obs
        d_cam = np.array([(u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0])
        d = pose.rotation.T @ d_cam
        return d / np.linalg.norm(d)

    d1 = ray(pose1, obs1)
    d2 = ray(pose2, obs2)
    cos_parallax = np.clip(np.dot(d1, d2), -1.0, 1.0)
    if np.degrees(np.arccos(cos_parallax)) < 1.0:
        raise LowParallax("triangulation rays closer than 1 degree")
    baseline = c2 - c1
    a = np.array([[1.0, -cos_parallax], [cos_parallax, -1.0]])
    b = np.array([np.dot(d1, baseline), np.dot(d2, baseline)])
    s, t = np.linalg.solve(a, b)
    point = 0.5 * ((c1 + s * d1) + (c2 + t * d2))
    for pose in (pose1, pose2):
        if pose.apply(point)[2] <= 0:
            raise NegativeDepth("triangulated point behind a camera")
    return point


def keyframe_decision(frame: Frame, last_kf, translation_threshold, max_gap) -> bool:
    """Inclusive translation threshold, or a frame gap above max_gap."""
    if last_kf is None:
        return True
    moved = np.linalg.norm(frame.pose.camera_center - last_kf.pose.camera_center)
    return bool(moved >= translation_threshold or frame.id - last_kf.frame_id > max_gap)


@dataclass
class TrackResult:
    trajectory: Trajectory
    local_map: LocalMap
    keyframes: list
    removal_log: list = field(default_factory=list)  # rows as dicts
    removed_ids: set = field(default_factory=set)
    lost: bool = False
    lost_at_frame: int | None = None


def _triangulate_new_points(
    kf_prev: Keyframe,
    kf_new: Keyframe,
    local_map: LocalMap,
    K: CameraIntrinsics,
    corruption: dict,
):
    prev_obs = {tid: (u, v) for tid, u, v in kf_prev.observations}
    for tid, u, v in kf_new.observations:
        if tid in local_map.points or tid in local_map.removed_ids:
            continue
        if tid not in prev_obs:
            continue
        try:
            point = triangulate(prev_obs[tid], (u, v), kf_prev.pose, kf_new.pose, K)
        except (LowParallax, NegativeDepth):
            continue
        factor = corruption.get(tid)
        if factor is not None:
            # Injected depth corruption: scale the camera-frame depth in the
            # new keyframe along the viewing ray (same pixel, wrong depth).
            p_cam = kf_new.pose.apply(point) * factor
            point = inverse(kf_new.pose).apply(p_cam)
        local_map.add(MapPoint(tid, point, kf_new.frame_id))


def _keyframe_depth(
    kf: Keyframe, local_map: LocalMap, K: CameraIntrinsics, depth_provider
):
    """Mode-2 prediction anchored to VO sparse depth, then rescaled by the
    median VO/predicted ratio."""
    samples = []
    seen = set()
    for tid, u, v in kf.observations:
        mp = local_map.points.get(tid)
        if mp is None:
            continue
        z = kf.pose.apply(mp.position)[2]
        iu, iv = int(round(u)), int(round(v))
        if z <= 0 or not (0 <= iu < K.width and 0 <= iv < K.height):
            continue
        if (iu, iv) in seen:
            continue
        seen.add((iu, iv))
        samples.append((iu, iv, float(z)))
    if len(samples) < 1:
        return
    sparse = SparseDepthMap(samples, K.width, K.height)
    kf.sparse_vo = sparse
    predicted = depth_provider.predict_mode2(kf.frame_id, normalize_sparse(sparse))
    pairs = []
    for iu, iv, z in samples:
        z_pred = predicted.sample_bilinear(float(iu), float(iv))
        if z_pred is not None and z_pred > 0:
            pairs.append((z, z_pred))
    if not pairs:
        return
    estimate = recover_scale(pairs)
    kf.theta_s = estimate.theta_s
    kf.depth = rescale_depth(predicted, estimate.theta_s)


def track_sequence(
    frames,
    depth_provider,
    K: CameraIntrinsics,
    config: TrackerConfig,
    bootstrap_pose_fn,
    median_scene_depth: float,
    corruption: dict | None = None,
) -> TrackResult:
    """Run the tracking loop over a frame sequence.

    bootstrap_pose_fn(frame_id) supplies poses until the second keyframe is
    selected and the initial map is triangulated; after that, tracking is on
    its own. corruption maps track ids to the injected depth-corruption
    factor applied when those landmarks are bootstrapped.
    """
    corruption = corruption or {}
    local_map = LocalMap()
    result = TrackResult(Trajectory(), local_map, [])
    translation_threshold = config.keyframe_translation_factor * median_scene_depth

    last_kf: Keyframe | None = None
    bootstrapped = False
    prev_pose: PoseSE3 | None = None
    prev_prev_pose: PoseSE3 | None = None

    for frame in frames:
        frame = Frame(frame.id, frame.timestamp, list(frame.observations))
        if not bootstrapped:
            frame.pose = bootstrap_pose_fn(frame.id)
            if keyframe_decision(frame, last_kf, translation_threshold, config.max_gap):
                kf = Keyframe(frame.id, frame.timestamp, frame.pose, frame.observations)
                result.keyframes.append(kf)
                if last_kf is not None:
                    _triangulate_new_points(last_kf, kf, local_map, K, corruption)
                    if config.predict_keyframe_depth and len(local_map):
                        _keyframe_depth(kf, local_map, K, depth_provider)
                    bootstrapped = True
                last_kf = kf
        else:
            init = prev_pose
            if prev_prev_pose is not None:
                velocity = compose(prev_pose, inverse(prev_prev_pose))
                init = compose(velocity, prev_pose)
            try:
                frame.pose = estimate_pose(frame, local_map, K, init, config)
            except (Diverged, InsufficientObservations):
                try:
                    frame.pose = estimate_pose(frame, local_map, K, last_kf.pose, config)
                except (Diverged, InsufficientObservations) as exc:
                    result.lost = True
                    result.lost_at_frame = frame.id
                    raise TrackingLost(
                        f"tracking failed at frame {frame.id}: {exc}", partial=result
                    ) from exc

            for tid, _, _ in frame.observations:
                local_map.record_observation(tid, frame.id)

            _run_filter(frame, local_map, K, depth_provider, config, result)

            if keyframe_decision(frame, last_kf, translation_threshold, config.max_gap):
                kf = Keyframe(frame.id, frame.timestamp, frame.pose, frame.observations)
                result.keyframes.append(kf)
                _triangulate_new_points(last_kf, kf, local_map, K, corruption)
                if config.predict_keyframe_depth and len(local_map):
                    _keyframe_depth(kf, local_map, K, depth_provider)
                last_kf = kf

        result.trajectory.append(frame.timestamp, frame.pose)
        prev_prev_pose = prev_pose
        prev_pose = frame.pose
    return result


def _run_filter(frame, local_map, K, depth_provider, config, result):
    if config.replay_removals is not None:
        ids = [
            pid
            for pid in config.replay_removals.get(frame.id, ())
            if pid in local_map.points
        ]
        if ids:
            nearfar.apply_filter(local_map, ids)
            result.removed_ids.update(ids)
        return
    if not config.filter_enabled or len(local_map) < config.min_filter_set_size:
        return
    depth_pred = depth_provider.predict_mode1(frame.id)
    # Only points actually observed in this frame: an occluded map point
    # projects onto whatever surface hides it, and its predicted depth there
    # says nothing about the point's own depth.
    observed = [
        local_map.points[tid]
        for tid, _, _ in frame.observations
        if tid in local_map.points
    ]
    projected = nearfar.project_local_map(observed, frame.pose, K, depth_pred)
    if len(projected) < max(2, config.min_filter_set_size):
        return
    report = nearfar.rank_displacement(projected)
    sigma = (
        nearfar.default_sigma(report.n)
        if config.sigma == "adaptive"
        else float(config.sigma)
    )
    outliers = nearfar.select_outliers(report, sigma)
    for p in projected:
        result.removal_log.append(
            {
                "frame_id": frame.id,
                "map_point_id": p.map_point_id,
                "z_vo": p.z_vo,
                "z_pred": p.z_pred,
                "lambda": report.lambdas[p.map_point_id],
                "removed": p.map_point_id in outliers,
            }
        )
    if outliers:
        nearfar.apply_filter(local_map, outliers)
        result.removed_ids.update(outliers)
