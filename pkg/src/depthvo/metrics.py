"""Trajectory and depth evaluation: ATE RMSE under 7DoF alignment, the five
standard depth metrics, and precision/recall scoring of the outlier filter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .depthmap import DepthMap
from .errors import EmptyOverlap, NonPositiveDepth, NoTimestampOverlap, TooFewPoses
from .geometry import Trajectory, apply_sim3_to_trajectory, umeyama_sim3

ASSOCIATION_TOLERANCE_S = 0.02


@dataclass(frozen=True)
class DepthMetrics:
    abs_rel: float
    sq_rel: float
    rms: float
    rms_log: float
    delta1: float
    delta2: float
    delta3: float


def associate(est: Trajectory, gt: Trajectory):
    """Nearest-timestamp association within tolerance, each pose used once."""
    if len(est) == len(gt) and np.allclose(est.timestamps, gt.timestamps):
        return list(range(len(est))), list(range(len(gt)))
    est_ts = np.asarray(est.timestamps)
    gt_ts = np.asarray(gt.timestamps)
    candidates = []
    for i, t in enumerate(est_ts):
        j = int(np.argmin(np.abs(gt_ts - t)))
        dt = abs(gt_ts[j] - t)
        if dt <= ASSOCIATION_TOLERANCE_S:
            candidates.append((dt, i, j))
    candidates.sort()
    used_i, used_j = set(), set()
    pairs = []
    for _, i, j in candidates:
        if i in used_i or j in used_j:
            continue
        used_i.add(i)
        used_j.add(j)
        pairs.append((i, j))
    if not pairs:
        raise NoTimestampOverlap("no timestamp matches within tolerance")
    pairs.sort()
    return [i for i, _ in pairs], [j for _, j in pairs]


def _subset(traj: Trajectory, idx) -> Trajectory:
    out = Trajectory()
    for i in idx:
        out.append(traj.timestamps[i], traj.poses[i])
    return out


def ate_rmse(est: Trajectory, gt: Trajectory, align_7dof: bool = True) -> float:
    """RMSE of translational residuals, optionally after Sim(3) alignment."""
    idx_e, idx_g = associate(est, gt)
    est_m = _subset(est, idx_e)
    gt_m = _subset(gt, idx_g)
    if len(est_m) < 2:
        raise TooFewPoses("ATE needs at least 2 associated poses")
    if align_7dof:
        est_m = apply_sim3_to_trajectory(umeyama_sim3(est_m, gt_m), est_m)
    diff = est_m.positions() - gt_m.positions()
    return float(np.sqrt(np.mean(np.sum(diff**2, axis=1))))


def depth_metrics(
    pred: DepthMap, gt: DepthMap, scale_recover: bool = False
) -> DepthMetrics:
    """The five depth metrics over jointly-valid pixels.

    With scale_recover, the prediction is pre-multiplied by the median
    gt/pred ratio (the protocol used for relative-depth evaluation). The
    relative errors are normalized by the predicted depth, matching the
    metric definitions as stated with z* the prediction.
    """
    if pred.values.shape != gt.values.shape:
        raise ValueError("prediction and ground truth must have equal dimensions")
    mask = pred.valid & gt.valid
    if not mask.any():
        raise EmptyOverlap("no jointly-valid pixels")
    z_pred = pred.values[mask].astype(float)
    z_gt = gt.values[mask].astype(float)
    if np.any(z_pred <= 0) or np.any(z_gt <= 0):
        raise NonPositiveDepth("depth metrics need positive depths")
    if scale_recover:
        z_pred = z_pred * np.median(z_gt / z_pred)

    abs_rel = float(np.mean(np.abs(z_gt - z_pred) / z_pred))
    sq_rel = float(np.mean((z_gt - z_pred) ** 2 / z_pred))
    rms = float(np.sqrt(np.mean((z_gt - z_pred) ** 2)))
    rms_log = float(np.sqrt(np.mean((np.log10(z_gt) - np.log10(z_pred)) ** 2)))
    ratio = np.maximum(z_gt / z_pred, z_pred / z_gt)
    return DepthMetrics(
        abs_rel,
        sq_rel,
        rms,
        rms_log,
        float(np.mean(ratio < 1.25)),
        float(np.mean(ratio < 1.25**2)),
        float(np.mean(ratio < 1.25**3)),
    )


def filter_score(removed_ids, corruption_labels):
    """(precision, recall) of removed ids against corrupted-landmark labels.

    Empty removal set: precision is 1 by convention, recall 0.
    """
    removed = set(removed_ids)
    corrupted = set(corruption_labels)
    hits = len(removed & corrupted)
    precision = hits / len(removed) if removed else 1.0
    recall = hits / len(corrupted) if corrupted else 1.0
    return precision, recall
