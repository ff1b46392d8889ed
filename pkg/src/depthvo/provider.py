"""Two-mode depth providers: a ground-truth-backed oracle and a file reader.

Mode 1 returns relative depth (correct up to an affine map of the true
depth); mode 2 returns scale-consistent depth anchored to a sparse depth map
by a median ratio. The oracle corrupts a configurable fraction of pixels so
downstream outlier filters can be scored against known labels.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .depthmap import DepthMap, SparseDepthMap
from .errors import EmptySparseSet, MissingFile, MissingGroundTruth, NonPositiveDepth
from .fast import fast_corners
from . import fileio
from .scale import upper_median


@dataclass(frozen=True)
class DepthProviderConfig:
    """Oracle fidelity knobs simulating a learned depth network."""

    affine_scale: float = 1.0
    affine_shift: float = 0.0
    noise_sigma: float = 0.0  # multiplicative log-normal
    outlier_fraction: float = 0.0
    outlier_factor_range: tuple = (1.5, 3.0)
    seed: int = 0

    def __post_init__(self):
        if self.affine_scale <= 0:
            raise ValueError("affine_scale must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if not 0 <= self.outlier_fraction < 1:
            raise ValueError("outlier_fraction must be in [0, 1)")
        low, high = self.outlier_factor_range
        if not (1 < low <= high):
            raise ValueError("outlier_factor_range must satisfy 1 < low <= high")


class OracleDepthProvider:
    """Depth provider backed by ground-truth depth, with configured corruption.

    Prediction is pure given (frame_id, config): every call derives its own
    RNG from (seed, frame_id), so calls are reproducible and order-free.
    """

    def __init__(self, gt_depth_fn, config: DepthProviderConfig):
        self._gt_depth_fn = gt_depth_fn
        self.config = config

    def _ground_truth(self, frame_id: int) -> DepthMap:
        gt = self._gt_depth_fn(frame_id)
        if gt is None:
            raise MissingGroundTruth(f"no ground-truth depth for frame {frame_id}")
        return gt

    def _rng(self, frame_id: int) -> np.random.Generator:
        return np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([self.config.seed, frame_id]))
        )

    def _noisy(self, values, mask, rng) -> np.ndarray:
        out = values.copy()
        if self.config.noise_sigma > 0:
            eps = rng.standard_normal(values.shape)
            out = out * np.exp(self.config.noise_sigma * eps)
        else:
            rng.standard_normal(values.shape)  # keep the stream position fixed
        return out

    def predict_mode1(self, frame_id: int) -> DepthMap:
        """Relative depth: affine map of ground truth + noise + outliers."""
        gt = self._ground_truth(frame_id)
        cfg = self.config
        rng = self._rng(frame_id)
        values = cfg.affine_scale * gt.values + cfg.affine_shift
        values = self._noisy(values, gt.valid, rng)
        if cfg.outlier_fraction > 0:
            flat_idx = np.flatnonzero(gt.valid)
            n_out = int(round(cfg.outlier_fraction * flat_idx.size))
            if n_out:
                chosen = rng.choice(flat_idx, size=n_out, replace=False)
                low, high = cfg.outlier_factor_range
                factors = rng.uniform(low, high, size=n_out)
                flat = values.reshape(-1)
                flat[chosen] = flat[chosen] * factors
        values[~gt.valid] = 1.0
        return DepthMap(values, gt.valid.copy())

    def predict_mode2(self, frame_id: int, sparse: SparseDepthMap) -> DepthMap:
        """Scale-consistent depth anchored so median(sparse / pred) = 1."""
        sparse.require_nonempty()
        gt = self._ground_truth(frame_id)
        rng = self._rng(frame_id)
        values = self._noisy(gt.values, gt.valid, rng)
        ratios = []
        for u, v, z in sparse.samples:
            pred_z = values[int(round(v)), int(round(u))]
            if pred_z > 0:
                ratios.append(z / pred_z)
        if not ratios:
            raise EmptySparseSet("no usable sparse anchors for mode-2 scaling")
        factor = upper_median(ratios)
        values = values * factor
        values[~gt.valid] = 1.0
        return DepthMap(values, gt.valid.copy())


class FileDepthProvider:
    """Reads predicted depth maps by frame index from a directory.

    Files are named ``<frame_id:06d>.pfm`` with an optional
    ``<frame_id:06d>.mask.pgm`` sidecar. A missing file is an error.
    """

    def __init__(self, directory):
        self.directory = str(directory)

    def _path_prefix(self, frame_id: int) -> str:
        return os.path.join(self.directory, f"{frame_id:06d}")

    def predict_mode1(self, frame_id: int) -> DepthMap:
        prefix = self._path_prefix(frame_id)
        if not os.path.exists(prefix + ".pfm"):
            raise MissingFile(f"no depth map for frame {frame_id} in {self.directory}")
        return fileio.read_depth_with_mask(prefix)

    def predict_mode2(self, frame_id: int, sparse: SparseDepthMap) -> DepthMap:
        sparse.require_nonempty()
        return self.predict_mode1(frame_id)


def normalize_sparse(sparse: SparseDepthMap) -> SparseDepthMap:
    """Divide all depths by the maximum depth; the output maximum is 1."""
    sparse.require_nonempty()
    z_max = max(z for _, _, z in sparse.samples)
    if z_max <= 0:
        raise NonPositiveDepth("maximum sparse depth must be positive")
    samples = [(u, v, z / z_max) for u, v, z in sparse.samples]
    return SparseDepthMap(
        samples, sparse.width, sparse.height, sparse.from_grid_fallback
    )


def sample_sparse_depth(
    image: np.ndarray,
    gt_depth: DepthMap,
    target_count: int,
    contrast_threshold: float = 0.05,
) -> SparseDepthMap:
    """Sample sparse depth at the strongest FAST corners with valid depth.

    Falls back to a uniform grid (flagged in the result) when the detector
    yields fewer than target_count usable corners.
    """
    if target_count < 1:
        raise ValueError("target_count must be >= 1")
    h, w = gt_depth.values.shape
    corners = fast_corners(image, contrast_threshold)
    corners.sort(key=lambda c: (-c[2], c[0], c[1]))

    samples = []
    used = set()
    for u, v, _score in corners:
        if len(samples) >= target_count:
            break
        if (u, v) in used or not gt_depth.valid[v, u]:
            continue
        used.add((u, v))
        samples.append((u, v, float(gt_depth.values[v, u])))

    fallback = len(samples) < target_count
    if fallback:
        n_valid = int(gt_depth.valid.sum())
        want = min(target_count, n_valid)
        stride = max(1, int(np.floor(np.sqrt(h * w / max(want, 1)))))
        for step in (stride, 1):
            _fill_from_grid(samples, used, gt_depth, want, step)
            if len(samples) >= want:
                break
    return SparseDepthMap(samples, w, h, from_grid_fallback=fallback)


def _fill_from_grid(samples, used, gt_depth, want, stride):
    h, w = gt_depth.values.shape
    for v in range(0, h, stride):
        for u in range(0, w, stride):
            if len(samples) >= want:
                return
            if (u, v) in used or not gt_depth.valid[v, u]:
                continue
            used.add((u, v))
            samples.append((u, v, float(gt_depth.values[v, u])))
