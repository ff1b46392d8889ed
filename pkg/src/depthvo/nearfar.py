"""Near-far consistency filter.

Local-map points are projected into the current frame; their depth ordering
under VO is compared against their ordering under the predicted relative
depth. A point whose rank displacement exceeds a threshold is an outlier and
is removed from the map. Only the ordering of the predicted depth matters,
which is what lets scale-free relative depth drive the filter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .depthmap import DepthMap
from .errors import NonPositiveDepth, TooFewPoints
from .geometry import CameraIntrinsics, PoseSE3

# Rank statistics on tiny sets are noise; the filter skips below this size.
MIN_FILTER_SET_SIZE = 10


@dataclass(frozen=True)
class ProjectedPoint:
    """A local-map point projected into the current frame."""

    map_point_id: int
    u: float
    v: float
    z_vo: float
    z_pred: float

    def __post_init__(self):
        if self.z_vo <= 0 or self.z_pred <= 0:
            raise NonPositiveDepth("projected point depths must be positive")


@dataclass
class RankReport:
    """Per-point rank displacements and the resulting outlier set."""

    lambdas: dict  # map_point_id -> rank displacement
    sigma: float | None = None
    outlier_ids: set = field(default_factory=set)

    @property
    def n(self) -> int:
        return len(self.lambdas)


def default_sigma(n: int) -> float:
    """Adaptive threshold: max(3, ceil(0.1 n))."""
    return float(max(3, math.ceil(0.1 * n)))


def project_local_map(
    map_points, pose: PoseSE3, K: CameraIntrinsics, depth_pred: DepthMap
):
    """Project map points into the frame, keeping only usable ones.

    A point survives when it has positive camera-frame depth, projects inside
    the image, and the predicted depth map has a valid (bilinear, with a
    1-pixel nearest-valid fallback) sample at the projection.
    """
    out = []
    for mp in map_points:
        p_cam = pose.apply(mp.position)
        z = p_cam[2]
        if z <= 1e-12:
            continue
        u = p_cam[0] / z * K.fx + K.cx
        v = p_cam[1] / z * K.fy + K.cy
        if not (0 <= u < K.width and 0 <= v < K.height):
            continue
        z_pred = depth_pred.sample_bilinear(u, v)
        if z_pred is None or z_pred <= 0:
            continue
        out.append(ProjectedPoint(mp.id, float(u), float(v), float(z), z_pred))
    return out


def _ranks(points, key) -> dict:
    """1-based rank of each point under the key, ties broken by point id.

    The same tie policy is applied to both orderings, so exact ties
    contribute zero displacement.
    """
    ordered = sorted(points, key=lambda p: (key(p), p.map_point_id))
    return {p.map_point_id: i + 1 for i, p in enumerate(ordered)}


def rank_displacement(points) -> RankReport:
    """Rank displacement lambda = |i - j| between the two depth orderings."""
    points = list(points)
    if len(points) < 2:
        raise TooFewPoints(f"need >= 2 projected points, got {len(points)}")
    rank_vo = _ranks(points, lambda p: p.z_vo)
    rank_pred = _ranks(points, lambda p: p.z_pred)
    lambdas = {
        pid: abs(rank_vo[pid] - rank_pred[pid]) for pid in rank_vo
    }
    return RankReport(lambdas)


def select_outliers(report: RankReport, sigma: float) -> set:
    """Points with displacement strictly greater than sigma."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    outliers = {pid for pid, lam in report.lambdas.items() if lam > sigma}
    report.sigma = sigma
    report.outlier_ids = outliers
    return outliers


def apply_filter(local_map, outlier_ids):
    """Remove the listed points from the map and all frame observations.

    Returns the number of removed points. local_map is a vo.LocalMap.
    """
    return local_map.remove_points(outlier_ids)
