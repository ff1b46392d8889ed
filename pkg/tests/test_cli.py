"""End-to-end CLI chain on a small sequence, plus exit-code behavior."""

import json

import numpy as np
import pytest

from depthvo import fileio
from depthvo.cli import main

SMALL_CONFIG = {
    "intrinsics": {
        "fx": 125.0, "fy": 125.0, "cx": 80.0, "cy": 60.0,
        "width": 160, "height": 120,
    },
    "sequence": {"n_frames": 40, "landmark_count": 200, "seed": 5, "step": 0.3},
    "keyframe": {"translation_factor": 0.1, "max_gap": 8},
}


@pytest.fixture(scope="module")
def chain(tmp_path_factory):
    """sim generate -> vo run -> map build, shared by the checks below."""
    root = tmp_path_factory.mktemp("chain")
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(SMALL_CONFIG))
    seq = root / "seq"
    run = root / "run"
    ply = root / "cloud.ply"
    assert main(["sim", "generate", "--config", str(cfg_path), "--out", str(seq)]) == 0
    assert main(["vo", "run", "--seq", str(seq), "--filter", "on", "--out", str(run)]) == 0
    assert main(["map", "build", "--run", str(run), "--out", str(ply)]) == 0
    return root, seq, run, ply


def test_sim_generate_outputs(chain):
    _, seq, _, _ = chain
    manifest = json.loads((seq / "manifest.json").read_text())
    assert len(manifest["frames"]) == 40
    assert (seq / "000000.pfm").exists()
    assert (seq / "000000.mask.pgm").exists()
    assert (seq / "000000.pgm").exists()
    assert (seq / "groundtruth.txt").exists()


def test_vo_run_outputs(chain):
    _, _, run, _ = chain
    summary = json.loads((run / "summary.json").read_text())
    assert not summary["tracking_lost"]
    assert summary["n_frames"] == 40
    assert summary["n_keyframes"] >= 3
    assert summary["ate_rmse"] < 1.0
    assert (run / "trajectory.txt").exists()
    assert (run / "removals.csv").exists()
    kfs = json.loads((run / "keyframes.json").read_text())
    assert sum(1 for k in kfs if k["depth"] is not None) >= 2


def test_map_build_outputs(chain):
    root, _, _, ply = chain
    points, intensity = fileio.read_ply(ply)
    assert len(points) > 100
    assert intensity is not None and len(intensity) == len(points)
    rates = (root / "cloud.passrates.csv").read_text().splitlines()
    assert rates[0] == "kf_id,pixels,passed,fused"
    assert len(rates) >= 3


def test_eval_ate_with_csv_and_plot(chain, capsys):
    root, seq, run, _ = chain
    csv_out = root / "ate.csv"
    svg_out = root / "ate.svg"
    code = main([
        "eval", "ate",
        "--est", str(run / "trajectory.txt"),
        "--gt", str(seq / "groundtruth.txt"),
        "--out", str(csv_out), "--plot", str(svg_out),
    ])
    assert code == 0
    assert "ate_rmse" in capsys.readouterr().out
    assert csv_out.read_text().splitlines()[0] == "est,gt,aligned,ate_rmse"
    head = svg_out.read_text()[:200]
    assert "<?xml" in head or "<svg" in head


def test_eval_depth_self_comparison(chain, capsys):
    root, seq, _, _ = chain
    csv_out = root / "depth.csv"
    code = main([
        "eval", "depth",
        "--pred", str(seq / "000000"), "--gt", str(seq / "000000"),
        "--out", str(csv_out),
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "delta1   1.000000" in out
    assert "abs_rel  0.000000" in out
    assert csv_out.exists()


def test_eval_filter_scores(chain, capsys):
    root, seq, run, _ = chain
    csv_out = root / "filter.csv"
    code = main([
        "eval", "filter", "--run", str(run), "--seq", str(seq),
        "--out", str(csv_out),
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "precision" in out and "recall" in out
    assert csv_out.read_text().splitlines()[0] == "run,seq,precision,recall"


def test_vo_run_is_byte_deterministic(chain):
    root, seq, run, _ = chain
    rerun = root / "rerun"
    assert main(["vo", "run", "--seq", str(seq), "--filter", "on", "--out", str(rerun)]) == 0
    for name in ("trajectory.txt", "removals.csv"):
        assert (rerun / name).read_bytes() == (run / name).read_bytes()


def test_losses_gradcheck(capsys):
    assert main(["losses", "gradcheck", "--seed", "3"]) == 0
    assert "OK" in capsys.readouterr().out


def test_io_error_exit_code(tmp_path):
    code = main([
        "vo", "run", "--seq", str(tmp_path / "missing"),
        "--out", str(tmp_path / "out"),
    ])
    assert code == 1


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"sequence": {"n_frames": 1}}')
    code = main([
        "sim", "generate", "--config", str(bad), "--out", str(tmp_path / "seq"),
    ])
    assert code == 2


def test_tracking_lost_exit_code(tmp_path):
    # Two far landmarks triangulate with too little parallax, so tracking has
    # no map to lean on once the ground-truth bootstrap phase ends.
    cfg = dict(SMALL_CONFIG)
    cfg["sequence"] = dict(SMALL_CONFIG["sequence"], landmark_count=2)
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    seq = tmp_path / "seq"
    assert main(["sim", "generate", "--config", str(cfg_path), "--out", str(seq)]) == 0
    code = main(["vo", "run", "--seq", str(seq), "--filter", "off",
                 "--out", str(tmp_path / "run")])
    assert code == 3
