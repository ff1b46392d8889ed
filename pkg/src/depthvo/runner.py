"""Orchestration shared by the CLI and the experiment suites: building
scenes and sequences from a config, running the tracker, and writing run
artifacts (trajectories, removal logs, keyframe depths, summaries)."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .depthmap import DepthMap
from . import fileio, metrics, simulator, vo
from .geometry import CameraIntrinsics, Trajectory
from .provider import DepthProviderConfig, OracleDepthProvider


def intrinsics_from_config(cfg: dict) -> CameraIntrinsics:
    return CameraIntrinsics(**cfg["intrinsics"])


def scene_from_config(cfg: dict) -> simulator.Scene:
    return simulator.make_scene(**cfg["scene"])


def sequence_spec_from_config(cfg: dict) -> simulator.SequenceSpec:
    raw = dict(cfg["sequence"])
    if "outlier_factor_range" in raw:
        raw["outlier_factor_range"] = tuple(raw["outlier_factor_range"])
    if "start" in raw and raw["start"] is not None:
        raw["start"] = tuple(raw["start"])
    if "direction" in raw:
        raw["direction"] = tuple(raw["direction"])
    return simulator.SequenceSpec(**raw)


def provider_config_from_config(cfg: dict) -> DepthProviderConfig:
    raw = dict(cfg["provider"])
    raw["outlier_factor_range"] = tuple(raw["outlier_factor_range"])
    return DepthProviderConfig(**raw)


def generate_sequence(cfg: dict) -> simulator.SimSequence:
    scene = scene_from_config(cfg)
    K = intrinsics_from_config(cfg)
    spec = sequence_spec_from_config(cfg)
    return simulator.generate_sequence(scene, K, spec)


class InMemorySource:
    """Sequence source backed by a live simulator (renders on demand)."""

    def __init__(self, seq: simulator.SimSequence):
        self.seq = seq
        self.K = seq.K
        self.frames = seq.frames
        self.trajectory = seq.trajectory
        self.corruption = seq.corruption
        self._depth_cache = {}

    def gt_depth(self, frame_id: int) -> DepthMap:
        if frame_id not in self._depth_cache:
            if len(self._depth_cache) > 4:
                self._depth_cache.clear()
            self._depth_cache[frame_id] = simulator.render_depth(
                self.seq.scene, self.seq.gt_pose(frame_id), self.K
            )
        return self._depth_cache[frame_id]

    def intensity(self, frame_id: int) -> np.ndarray:
        return simulator.render_intensity(
            self.seq.scene, self.seq.gt_pose(frame_id), self.K
        )


def tracker_config_from_config(
    cfg: dict,
    filter_enabled: bool | None = None,
    sigma_override=None,
    predict_keyframe_depth: bool = False,
) -> vo.TrackerConfig:
    fcfg = cfg["filter"]
    kcfg = cfg["keyframe"]
    return vo.TrackerConfig(
        filter_enabled=fcfg["enabled"] if filter_enabled is None else filter_enabled,
        sigma=fcfg["sigma"] if sigma_override is None else sigma_override,
        min_filter_set_size=fcfg["min_set_size"],
        keyframe_translation_factor=kcfg["translation_factor"],
        max_gap=kcfg["max_gap"],
        predict_keyframe_depth=predict_keyframe_depth,
    )


@dataclass
class RunOutputs:
    result: vo.TrackResult
    median_scene_depth: float
    provider: OracleDepthProvider


def run_tracking(source, cfg: dict, tracker_config: vo.TrackerConfig) -> RunOutputs:
    provider = OracleDepthProvider(source.gt_depth, provider_config_from_config(cfg))
    first = source.frames[0].id
    depth0 = source.gt_depth(first)
    median_scene_depth = float(np.median(depth0.values[depth0.valid]))
    frames = [vo.Frame(f.id, f.timestamp, f.observations) for f in source.frames]
    result = vo.track_sequence(
        frames,
        provider,
        source.K,
        tracker_config,
        bootstrap_pose_fn=lambda fid: source.trajectory.poses[fid],
        median_scene_depth=median_scene_depth,
        corruption=source.corruption,
    )
    return RunOutputs(result, median_scene_depth, provider)


REMOVAL_LOG_FIELDS = ["frame_id", "map_point_id", "z_vo", "z_pred", "lambda", "removed"]


def write_removal_log(path, rows):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=REMOVAL_LOG_FIELDS)
        writer.writeheader()
        for row in rows:
            out = dict(row)
            out["z_vo"] = f"{row['z_vo']:.9f}"
            out["z_pred"] = f"{row['z_pred']:.9f}"
            out["removed"] = int(row["removed"])
            writer.writerow(out)


def read_removal_log(path):
    rows = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            rows.append(
                {
                    "frame_id": int(row["frame_id"]),
                    "map_point_id": int(row["map_point_id"]),
                    "z_vo": float(row["z_vo"]),
                    "z_pred": float(row["z_pred"]),
                    "lambda": int(row["lambda"]),
                    "removed": bool(int(row["removed"])),
                }
            )
    return rows


def _pose_record(pose):
    from scipy.spatial.transform import Rotation

    q = Rotation.from_matrix(pose.rotation.T).as_quat()
    c = pose.camera_center
    return {"t": [float(x) for x in c], "q": [float(x) for x in q]}


def write_run_outputs(out_dir, outputs: RunOutputs, cfg: dict, seq_dir=None):
    """Write trajectory, removal log, keyframe depths, and a summary JSON."""
    os.makedirs(out_dir, exist_ok=True)
    result = outputs.result
    fileio.write_tum_trajectory(os.path.join(out_dir, "trajectory.txt"), result.trajectory)
    write_removal_log(os.path.join(out_dir, "removals.csv"), result.removal_log)

    keyframes_meta = []
    for kf in result.keyframes:
        entry = {
            "frame_id": kf.frame_id,
            "timestamp": kf.timestamp,
            "pose": _pose_record(kf.pose),
            "theta_s": kf.theta_s,
            "depth": None,
        }
        if kf.depth is not None:
            name = f"kf_{kf.frame_id:06d}"
            fileio.write_depth_with_mask(os.path.join(out_dir, name), kf.depth)
            entry["depth"] = name
        keyframes_meta.append(entry)

    summary = {
        "n_frames": len(result.trajectory),
        "n_keyframes": len(result.keyframes),
        "n_map_points": len(result.local_map),
        "removed_ids": sorted(int(i) for i in result.removed_ids),
        "median_scene_depth": outputs.median_scene_depth,
        "tracking_lost": result.lost,
        "sequence_dir": str(seq_dir) if seq_dir is not None else None,
        "config": cfg,
    }
    with open(os.path.join(out_dir, "keyframes.json"), "w") as f:
        json.dump(keyframes_meta, f, indent=1, sort_keys=True)
    with open(os.path.join(out_dir, "summary.json"), "w") as f:
        json.dump(summary, f, indent=1, sort_keys=True)
    return summary


def evaluate_ate(result_trajectory: Trajectory, gt: Trajectory) -> float:
    return metrics.ate_rmse(result_trajectory, gt, align_7dof=True)
