"""Camera model, rigid/similarity transforms, projection, and 7DoF alignment.

Conventions: poses are world-to-camera (R_cw, t_cw), the camera looks down +z,
the image origin is top-left, and pixel centers sit at integer coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateConfiguration,
    NonPositiveDepth,
    TooFewPoses,
)

_MIN_DEPTH = 1e-12
_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics with image size in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def contains(self, u, v) -> bool:
        return bool(0 <= u < self.width and 0 <= v < self.height)


def _orthonormality_error(rotation: np.ndarray) -> float:
    return float(np.max(np.abs(rotation.T @ rotation - np.eye(3))))


def _project_to_so3(m: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (polar projection via SVD)."""
    u, _, vt = np.linalg.svd(m)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] *= -1.0
        r = u @ vt
    return r


@dataclass(frozen=True)
class PoseSE3:
    """Rigid world-to-camera transform."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rotation = np.asarray(self.rotation, dtype=float)
        translation = np.asarray(self.translation, dtype=float).reshape(3)
        if rotation.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        ortho_error = _orthonormality_error(rotation)
        if ortho_error > 1e-6:
            raise ValueError("rotation is not orthonormal")
        if ortho_error > _ORTHO_TOL:
            # Round-trip drift only; snap back to the nearest rotation.
            rotation = _project_to_so3(rotation)
        if np.linalg.det(rotation) < 0:
            raise ValueError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls) -> "PoseSE3":
        return cls(np.eye(3), np.zeros(3))

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @property
    def camera_center(self) -> np.ndarray:
        """Camera position in world coordinates (-R^T t)."""
        return -self.rotation.T @ self.translation

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform world points (..., 3) into the camera frame."""
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation


@dataclass(frozen=True)
class Sim3:
    """Similarity transform p -> scale * R @ p + t."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        rotation = np.asarray(self.rotation, dtype=float)
        translation = np.asarray(self.translation, dtype=float).reshape(3)
        if _orthonormality_error(rotation) > _ORTHO_TOL:
            raise ValueError("rotation must be orthonormal")
        if np.linalg.det(rotation) < 0:
            raise ValueError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls) -> "Sim3":
        return cls(1.0, np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return self.scale * (points @ self.rotation.T) + self.translation

    def inverse(self) -> "Sim3":
        r_inv = self.rotation.T
        return Sim3(1.0 / self.scale, r_inv, -r_inv @ self.translation / self.scale)


@dataclass(frozen=True)
class PixelPoint:
    """Sub-pixel image location with optional depth."""

    u: float
    v: float
    z: float | None = None


@dataclass
class Trajectory:
    """Timestamped pose sequence with strictly increasing timestamps."""

    timestamps: list = field(default_factory=list)
    poses: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.timestamps) != len(self.poses):
            raise ValueError("timestamps and poses must have equal length")
        ts = np.asarray(self.timestamps, dtype=float)
        if len(ts) > 1 and not np.all(np.diff(ts) > 0):
            raise ValueError("timestamps must be strictly increasing")

    def __len__(self):
        return len(self.poses)

    def append(self, timestamp: float, pose: PoseSE3):
        if self.timestamps and timestamp <= self.timestamps[-1]:
            raise ValueError("timestamps must be strictly increasing")
        self.timestamps.append(float(timestamp))
        self.poses.append(pose)

    def positions(self) -> np.ndarray:
        """Camera centers in world coordinates, shape (n, 3)."""
        if not self.poses:
            return np.zeros((0, 3))
        return np.stack([p.camera_center for p in self.poses])


def project(K: CameraIntrinsics, pose: PoseSE3, p_world) -> PixelPoint:
    """Project a world point through a pose into pixel coordinates.

    May return pixels outside the image bounds; visibility is the caller's
    concern.
    """
    p_cam = pose.apply(np.asarray(p_world, dtype=float))
    z = p_cam[2]
    if z <= _MIN_DEPTH:
        raise NonPositiveDepth(f"camera-frame depth {z} is not positive")
    u = (p_cam[0] / z) * K.fx + K.cx
    v = (p_cam[1] / z) * K.fy + K.cy
    return PixelPoint(float(u), float(v), float(z))


def unproject(K: CameraIntrinsics, pixel: PixelPoint) -> np.ndarray:
    """Back-project a pixel with depth into the camera frame."""
    if pixel.z is None or pixel.z <= 0:
        raise NonPositiveDepth(f"depth {pixel.z} is not positive")
    x = (pixel.u - K.cx) / K.fx * pixel.z
    y = (pixel.v - K.cy) / K.fy * pixel.z
    return np.array([x, y, pixel.z])


def compose(a: PoseSE3, b: PoseSE3) -> PoseSE3:
    """Composition a o b: apply b first, then a."""
    return PoseSE3(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def inverse(a: PoseSE3) -> PoseSE3:
    return PoseSE3(a.rotation.T, -a.rotation.T @ a.translation)


def transfer_point(pose_from: PoseSE3, pose_to: PoseSE3, p_from) -> np.ndarray:
    """Move a point from one camera frame to another via the world frame."""
    relative = compose(pose_to, inverse(pose_from))
    return relative.apply(np.asarray(p_from, dtype=float))


def project_transferred(p12, K: CameraIntrinsics):
    """Pinhole projection of a camera-frame point; returns (u, v)."""
    p12 = np.asarray(p12, dtype=float)
    z = p12[2]
    if z <= _MIN_DEPTH:
        raise NonPositiveDepth(f"camera-frame depth {z} is not positive")
    return float(p12[0] / z * K.fx + K.cx), float(p12[1] / z * K.fy + K.cy)


def umeyama_sim3(traj_est: Trajectory, traj_gt: Trajectory) -> Sim3:
    """Least-squares similarity transform aligning estimate onto ground truth.

    Minimizes sum ||s R p_est + t - p_gt||^2 over the camera centers using
    Umeyama's closed form (centroid subtraction, cross-covariance SVD, scale
    from the variance ratio).
    """
    p_est = traj_est.positions()
    p_gt = traj_gt.positions()
    n = len(p_est)
    if n != len(p_gt):
        raise ValueError("trajectories must have equal length")
    if n < 3:
        raise TooFewPoses(f"need at least 3 poses, got {n}")

    mu_est = p_est.mean(axis=0)
    mu_gt = p_gt.mean(axis=0)
    x = p_est - mu_est
    y = p_gt - mu_gt

    cov = y.T @ x / n
    var_est = float(np.mean(np.sum(x**2, axis=1)))
    if var_est <= 0:
        raise DegenerateConfiguration("estimate positions are all identical")

    u, d, vt = np.linalg.svd(cov)
    # Rank-deficient covariance (collinear or planar paths) leaves part of the
    # rotation as gauge freedom; the SVD solution is still a least-squares
    # minimizer, so no special casing is needed.
    s = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[2, 2] = -1.0
    rotation = u @ s @ vt
    scale = float(np.trace(np.diag(d) @ s) / var_est)
    if scale <= 0:
        raise DegenerateConfiguration("non-positive alignment scale")
    translation = mu_gt - scale * rotation @ mu_est
    return Sim3(scale, rotation, translation)


def apply_sim3_to_trajectory(transform: Sim3, traj: Trajectory) -> Trajectory:
    """Apply a similarity transform to every pose of a trajectory.

    The aligned pose keeps the world-to-camera convention: its camera center
    is the transformed center and its orientation is rotated accordingly.
    """
    out = Trajectory()
    for ts, pose in zip(traj.timestamps, traj.poses):
        center = transform.apply(pose.camera_center)
        rotation = pose.rotation @ transform.rotation.T
        out.append(ts, PoseSE3(rotation, -rotation @ center))
    return out
