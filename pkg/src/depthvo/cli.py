"""Command-line entry point.

Subcommands compose the library into reproducible experiments:

  depthvo sim generate   render a synthetic sequence directory
  depthvo vo run         track a sequence, with the near-far filter on or off
  depthvo map build      fuse keyframe depths into a consistency-checked cloud
  depthvo eval ate       trajectory error table, CSV, and SVG plot
  depthvo eval depth     the five depth metrics between two depth maps
  depthvo eval filter    precision/recall of the filter against sim labels
  depthvo losses gradcheck   finite-difference check of the loss gradients

Exit codes: 0 success, 1 I/O failure, 2 config/validation failure,
3 tracking failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np
from scipy.spatial.transform import Rotation

from . import fileio, losses, mapping, metrics, runner
from .config import DEFAULT_CONFIG, load_config, validate_config
from .depthmap import DepthMap, SparseDepthMap
from .errors import ConfigError, DepthVOError, MissingFile, TrackingLost
from .geometry import CameraIntrinsics, PoseSE3
from .simulator import SequenceDirectory, export_sequence

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_TRACKING = 3


def _load_config_arg(path) -> dict:
    if path is None:
        return validate_config({})
    return load_config(path)


# ---------------------------------------------------------------------------
# sim generate

def cmd_sim_generate(args) -> int:
    cfg = _load_config_arg(args.config)
    seq = runner.generate_sequence(cfg)
    manifest = export_sequence(seq, args.out, config=cfg)
    print(manifest)
    return EXIT_OK


# ---------------------------------------------------------------------------
# vo run

def cmd_vo_run(args) -> int:
    source = SequenceDirectory(args.seq)
    if args.config is not None:
        cfg = load_config(args.config)
    elif source.config is not None:
        cfg = validate_config(source.config)
    else:
        cfg = validate_config({})
    tracker_cfg = runner.tracker_config_from_config(
        cfg,
        filter_enabled=(args.filter == "on"),
        sigma_override=args.sigma,
        predict_keyframe_depth=True,
    )
    exit_code = EXIT_OK
    try:
        outputs = runner.run_tracking(source, cfg, tracker_cfg)
    except TrackingLost as exc:
        outputs = runner.RunOutputs(exc.partial, float("nan"), None)
        exit_code = EXIT_TRACKING
        print(f"tracking lost at frame {exc.partial.lost_at_frame}", file=sys.stderr)
    summary = runner.write_run_outputs(args.out, outputs, cfg, seq_dir=args.seq)
    if not outputs.result.lost and len(outputs.result.trajectory) >= 2:
        ate = metrics.ate_rmse(outputs.result.trajectory, source.trajectory)
        summary["ate_rmse"] = ate
        with open(os.path.join(args.out, "summary.json"), "w") as f:
            json.dump(summary, f, indent=1, sort_keys=True)
        print(f"ate_rmse {ate:.6f}")
    return exit_code


# ---------------------------------------------------------------------------
# map build

def _pose_from_record(rec) -> PoseSE3:
    r_cw = Rotation.from_quat(rec["q"]).as_matrix().T
    center = np.asarray(rec["t"], dtype=float)
    return PoseSE3(r_cw, -r_cw @ center)


def cmd_map_build(args) -> int:
    run_dir = args.run
    with open(os.path.join(run_dir, "summary.json")) as f:
        summary = json.load(f)
    with open(os.path.join(run_dir, "keyframes.json")) as f:
        keyframes = json.load(f)
    if summary.get("sequence_dir") is None:
        raise MissingFile("run summary does not reference a sequence directory")
    source = SequenceDirectory(summary["sequence_dir"])
    cfg = summary["config"]
    median_depth = summary["median_scene_depth"]
    delta = args.delta if args.delta is not None else (
        cfg["mapping"]["delta_factor"] * median_depth
    )
    gamma = args.gamma if args.gamma is not None else cfg["mapping"]["gamma"]
    voxel = cfg["mapping"]["voxel_factor"] * median_depth

    loaded = []
    for rec in keyframes:
        if rec["depth"] is None:
            continue
        depth = fileio.read_depth_with_mask(os.path.join(run_dir, rec["depth"]))
        image = source.intensity(rec["frame_id"])
        loaded.append((rec["frame_id"], _pose_from_record(rec["pose"]), depth, image))
    if len(loaded) < 2:
        raise MissingFile("map build needs at least two keyframes with depth")

    class _KF:
        def __init__(self, pose):
            self.pose = pose

    cloud = mapping.PointCloud(voxel)
    rows = []
    for (fid1, pose1, depth1, img1), (fid2, pose2, depth2, img2) in zip(
        loaded, loaded[1:]
    ):
        pass_mask = mapping.consistency_check(
            _KF(pose2), _KF(pose1), depth2, depth1, img2, img1,
            source.K, delta, gamma,
        )
        fused = mapping.fuse_keyframe(
            cloud, _KF(pose2), depth2, pass_mask, source.K, image=img2
        )
        rows.append(
            {
                "kf_id": fid2,
                "pixels": int(depth2.valid.sum()),
                "passed": int(pass_mask.sum()),
                "fused": fused,
            }
        )

    fileio.write_ply(args.out, cloud.as_array(), np.asarray(cloud.intensities))
    csv_path = os.path.splitext(args.out)[0] + ".passrates.csv"
    with open(csv_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["kf_id", "pixels", "passed", "fused"])
        writer.writeheader()
        writer.writerows(rows)
    print(f"{len(cloud)} points, pass-rate CSV at {csv_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval

def cmd_eval_ate(args) -> int:
    est = fileio.read_tum_trajectory(args.est)
    gt = fileio.read_tum_trajectory(args.gt)
    ate = metrics.ate_rmse(est, gt, align_7dof=not args.no_align)
    print(f"ate_rmse {ate:.6f}")
    if args.out:
        with open(args.out, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["est", "gt", "aligned", "ate_rmse"])
            writer.writerow([args.est, args.gt, int(not args.no_align), f"{ate:.9f}"])
    if args.plot:
        from .plotting import plot_trajectory_topdown

        plot_trajectory_topdown(args.plot, est, gt)
    return EXIT_OK


DEPTH_METRIC_FIELDS = [
    "abs_rel", "sq_rel", "rms", "rms_log", "delta1", "delta2", "delta3",
]


def cmd_eval_depth(args) -> int:
    pred = fileio.read_depth_with_mask(args.pred)
    gt = fileio.read_depth_with_mask(args.gt)
    m = metrics.depth_metrics(pred, gt, scale_recover=args.scale_recover)
    for name in DEPTH_METRIC_FIELDS:
        print(f"{name:8s} {getattr(m, name):.6f}")
    if args.out:
        with open(args.out, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["pred", "gt", "scale_recover"] + DEPTH_METRIC_FIELDS)
            writer.writerow(
                [args.pred, args.gt, int(args.scale_recover)]
                + [f"{getattr(m, name):.9f}" for name in DEPTH_METRIC_FIELDS]
            )
    return EXIT_OK


def cmd_eval_filter(args) -> int:
    with open(os.path.join(args.run, "summary.json")) as f:
        summary = json.load(f)
    source = SequenceDirectory(args.seq)
    precision, recall = metrics.filter_score(
        summary["removed_ids"], source.corruption.keys()
    )
    print(f"precision {precision:.6f}")
    print(f"recall    {recall:.6f}")
    if args.out:
        with open(args.out, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["run", "seq", "precision", "recall"])
            writer.writerow([args.run, args.seq, f"{precision:.9f}", f"{recall:.9f}"])
    return EXIT_OK


# ---------------------------------------------------------------------------
# losses gradcheck

GRADCHECK_TOLERANCE = 1e-4


def _finite_difference(loss_fn, values, valid, indices, step=1e-5):
    grads = []
    for iv, iu in indices:
        bumped = values.copy()
        bumped[iv, iu] += step
        hi = loss_fn(DepthMap(bumped, valid))
        bumped[iv, iu] -= 2 * step
        lo = loss_fn(DepthMap(bumped, valid))
        grads.append((hi - lo) / (2 * step))
    return np.array(grads)


def run_gradcheck(seed: int, verbose: bool = True) -> float:
    """Worst relative gradient error of the combined loss on a random instance."""
    rng = np.random.Generator(np.random.PCG64(seed))
    h, w = 12, 16
    K = CameraIntrinsics(fx=20.0, fy=20.0, cx=w / 2, cy=h / 2, width=w, height=h)
    gt_vals = 2.0 + rng.random((h, w)) * 3.0
    pred_vals = gt_vals * 1.2 + 0.1 + rng.normal(0, 0.05, (h, w))
    pred_vals = np.clip(pred_vals, 0.1, None)
    valid = np.ones((h, w), dtype=bool)
    valid[rng.integers(0, h, 5), rng.integers(0, w, 5)] = False
    gt = DepthMap(gt_vals, valid)
    samples = [
        (int(u), int(v), float(gt_vals[v, u]))
        for u, v in zip(rng.integers(0, w, 20), rng.integers(0, h, 20))
        if valid[v, u]
    ]
    seen = set()
    samples = [s for s in samples if not (s[:2] in seen or seen.add(s[:2]))]
    sparse = SparseDepthMap(samples, w, h)

    def loss_fn(pred):
        return losses.combined_loss(
            pred, gt, mode=2, gt_sparse=sparse, K=K, n_triplets=400, seed=seed
        ).value

    analytic = losses.combined_loss(
        DepthMap(pred_vals, valid), gt, mode=2, gt_sparse=sparse, K=K,
        n_triplets=400, seed=seed,
    ).gradient
    idx_v, idx_u = np.nonzero(valid)
    pick = rng.choice(len(idx_v), size=40, replace=False)
    indices = list(zip(idx_v[pick], idx_u[pick]))
    numeric = _finite_difference(loss_fn, pred_vals, valid, indices)
    got = np.array([analytic[iv, iu] for iv, iu in indices])
    scale = np.maximum(np.abs(numeric), np.abs(got))
    rel = np.abs(numeric - got) / np.maximum(scale, 1e-8)
    worst = float(rel.max())
    if verbose:
        print(f"gradcheck seed {seed}: worst relative error {worst:.3e}")
    return worst


def cmd_losses_gradcheck(args) -> int:
    worst = run_gradcheck(args.seed)
    if worst >= GRADCHECK_TOLERANCE:
        print(f"FAIL: relative error {worst:.3e} >= {GRADCHECK_TOLERANCE}")
        return EXIT_IO
    print("OK")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="depthvo",
        description="Depth-assisted monocular visual odometry toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("sim", help="synthetic sequence generation")
    sim_sub = sim.add_subparsers(dest="subcommand", required=True)
    gen = sim_sub.add_parser("generate", help="render a sequence directory")
    gen.add_argument("--config", help="JSON run config (merged over defaults)")
    gen.add_argument("--out", required=True, help="output sequence directory")
    gen.set_defaults(func=cmd_sim_generate)

    vo = sub.add_parser("vo", help="visual odometry")
    vo_sub = vo.add_subparsers(dest="subcommand", required=True)
    run = vo_sub.add_parser("run", help="track a sequence directory")
    run.add_argument("--seq", required=True, help="sequence directory")
    run.add_argument("--filter", choices=["on", "off"], default="on")
    run.add_argument("--sigma", type=float, help="fixed near-far threshold")
    run.add_argument("--config", help="override the config embedded in the manifest")
    run.add_argument("--out", required=True, help="output run directory")
    run.set_defaults(func=cmd_vo_run)

    mp = sub.add_parser("map", help="dense mapping")
    mp_sub = mp.add_subparsers(dest="subcommand", required=True)
    build = mp_sub.add_parser("build", help="fuse keyframe depths into a cloud")
    build.add_argument("--run", required=True, help="vo run output directory")
    build.add_argument("--delta", type=float, help="depth consistency threshold")
    build.add_argument("--gamma", type=float, help="intensity consistency threshold")
    build.add_argument("--out", required=True, help="output PLY path")
    build.set_defaults(func=cmd_map_build)

    ev = sub.add_parser("eval", help="evaluation")
    ev_sub = ev.add_subparsers(dest="subcommand", required=True)
    ate = ev_sub.add_parser("ate", help="absolute trajectory error")
    ate.add_argument("--est", required=True, help="estimated trajectory (TUM)")
    ate.add_argument("--gt", required=True, help="ground-truth trajectory (TUM)")
    ate.add_argument("--no-align", action="store_true", help="skip Sim3 alignment")
    ate.add_argument("--out", help="CSV output path")
    ate.add_argument("--plot", help="SVG top-down trajectory plot path")
    ate.set_defaults(func=cmd_eval_ate)
    dep = ev_sub.add_parser("depth", help="depth metrics")
    dep.add_argument("--pred", required=True, help="predicted depth prefix (.pfm)")
    dep.add_argument("--gt", required=True, help="ground-truth depth prefix (.pfm)")
    dep.add_argument("--scale-recover", action="store_true")
    dep.add_argument("--out", help="CSV output path")
    dep.set_defaults(func=cmd_eval_depth)
    filt = ev_sub.add_parser("filter", help="filter precision/recall")
    filt.add_argument("--run", required=True, help="vo run output directory")
    filt.add_argument("--seq", required=True, help="sequence directory with labels")
    filt.add_argument("--out", help="CSV output path")
    filt.set_defaults(func=cmd_eval_filter)

    ls = sub.add_parser("losses", help="loss diagnostics")
    ls_sub = ls.add_subparsers(dest="subcommand", required=True)
    gc = ls_sub.add_parser("gradcheck", help="finite-difference gradient check")
    gc.add_argument("--seed", type=int, default=0)
    gc.set_defaults(func=cmd_losses_gradcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingFile, FileNotFoundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TrackingLost as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRACKING
    except DepthVOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
