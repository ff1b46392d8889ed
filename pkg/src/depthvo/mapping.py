"""Consistency-checked dense mapping into a fused point cloud.

Each keyframe pixel is unprojected with its (rescaled) depth, transferred
into the neighbor keyframe's camera frame, and reprojected. A pixel passes
when the reprojection lands in bounds with positive depth, the neighbor's
depth agrees within delta, and the intensities agree within gamma. Passing
pixels are fused into a voxel-downsampled world point cloud.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .depthmap import DepthMap
from .errors import MissingDepth, MissingPose
from .geometry import CameraIntrinsics, PoseSE3, compose, inverse


def consistency_check(
    kf2,
    kf1,
    depth2: DepthMap,
    depth1: DepthMap,
    img2: np.ndarray,
    img1: np.ndarray,
    K: CameraIntrinsics,
    delta: float,
    gamma: float,
) -> np.ndarray:
    """Per-pixel pass mask for kf2 against its neighbor kf1.

    Depth and intensity of kf1 are sampled bilinearly at the reprojected
    sub-pixel location; a sample touching any invalid neighbor pixel fails.
    """
    if delta <= 0 or gamma <= 0:
        raise ValueError("delta and gamma must be positive")
    pose2 = getattr(kf2, "pose", None)
    pose1 = getattr(kf1, "pose", None)
    if pose2 is None or pose1 is None:
        raise MissingPose("both keyframes must carry poses")
    if depth2 is None or depth1 is None:
        raise MissingDepth("both keyframes must carry depth maps")

    h, w = depth2.values.shape
    relative = compose(pose1, inverse(pose2))  # camera-2 frame -> camera-1 frame

    vv, uu = np.nonzero(depth2.valid)
    z2 = depth2.values[vv, uu]
    x2 = (uu - K.cx) / K.fx * z2
    y2 = (vv - K.cy) / K.fy * z2
    p2 = np.stack([x2, y2, z2], axis=1)
    p12 = p2 @ relative.rotation.T + relative.translation

    z12 = p12[:, 2]
    ok = z12 > 1e-12
    u12 = np.full(len(p12), -1.0)
    v12 = np.full(len(p12), -1.0)
    u12[ok] = p12[ok, 0] / z12[ok] * K.fx + K.cx
    v12[ok] = p12[ok, 1] / z12[ok] * K.fy + K.cy
    ok &= (u12 >= 0) & (u12 <= w - 1) & (v12 >= 0) & (v12 <= h - 1)

    valid1 = depth1.valid & (img1 >= 0)
    z1, z1_ok = _bilinear_batch(depth1.values, valid1, u12, v12, ok)
    i1, i1_ok = _bilinear_batch(img1, valid1, u12, v12, ok)
    ok &= z1_ok & i1_ok
    ok &= np.abs(z1 - z12) < delta
    ok &= np.abs(i1 - img2[vv, uu]) < gamma
    ok &= img2[vv, uu] >= 0

    mask = np.zeros((h, w), dtype=bool)
    mask[vv[ok], uu[ok]] = True
    return mask


def _bilinear_batch(values, valid, u, v, active):
    """Vectorized bilinear sampling; a sample is ok only if all 4 neighbors
    are valid and the location is active and in bounds."""
    h, w = values.shape
    out = np.zeros(len(u))
    ok = active.copy()
    uc = np.clip(u, 0, w - 1)
    vc = np.clip(v, 0, h - 1)
    u0 = np.clip(np.floor(uc).astype(int), 0, max(w - 2, 0))
    v0 = np.clip(np.floor(vc).astype(int), 0, max(h - 2, 0))
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    fu = uc - u0
    fv = vc - v0
    ok &= valid[v0, u0] & valid[v0, u1] & valid[v1, u0] & valid[v1, u1]
    top = values[v0, u0] * (1 - fu) + values[v0, u1] * fu
    bot = values[v1, u0] * (1 - fu) + values[v1, u1] * fu
    out = top * (1 - fv) + bot * fv
    return out, ok


@dataclass
class PointCloud:
    """Append-only world point cloud with voxel-grid downsampling."""

    voxel: float
    points: list = field(default_factory=list)
    intensities: list = field(default_factory=list)
    _occupied: set = field(default_factory=set)

    def __len__(self):
        return len(self.points)

    def add(self, point, intensity=None) -> bool:
        """Append unless the point's voxel is already occupied (first wins)."""
        key = tuple(np.floor(np.asarray(point, dtype=float) / self.voxel).astype(int))
        if key in self._occupied:
            return False
        self._occupied.add(key)
        self.points.append(np.asarray(point, dtype=float))
        if intensity is not None:
            self.intensities.append(float(intensity))
        return True

    def as_array(self) -> np.ndarray:
        if not self.points:
            return np.zeros((0, 3))
        return np.stack(self.points)


def fuse_keyframe(
    cloud: PointCloud,
    kf,
    depth: DepthMap,
    pass_mask: np.ndarray,
    K: CameraIntrinsics,
    image: np.ndarray | None = None,
) -> int:
    """Unproject passing pixels to world coordinates and append to the cloud.

    Returns the number of points actually added (after voxel deduplication).
    """
    if pass_mask.shape != depth.values.shape:
        raise ValueError("pass mask dimensions must match the depth map")
    pose = getattr(kf, "pose", None)
    if pose is None:
        raise MissingPose("keyframe must carry a pose")
    cam_to_world = inverse(pose)
    vv, uu = np.nonzero(pass_mask & depth.valid)
    if len(vv) == 0:
        return 0
    z = depth.values[vv, uu]
    x = (uu - K.cx) / K.fx * z
    y = (vv - K.cy) / K.fy * z
    world = np.stack([x, y, z], axis=1) @ cam_to_world.rotation.T
    world += cam_to_world.translation
    added = 0
    for row, (pv, pu) in enumerate(zip(vv, uu)):
        intensity = image[pv, pu] if image is not None else None
        if cloud.add(world[row], intensity):
            added += 1
    return added
