"""Depth providers: oracle fidelity, determinism, mode-2 anchoring, files."""

import numpy as np
import pytest

from depthvo.depthmap import DepthMap, SparseDepthMap
from depthvo.errors import EmptySparseSet, MissingFile, MissingGroundTruth
from depthvo.provider import (
    DepthProviderConfig,
    FileDepthProvider,
    OracleDepthProvider,
    normalize_sparse,
    sample_sparse_depth,
)
from depthvo.scale import upper_median
from depthvo import fileio

H, W = 12, 16


def make_gt(seed=0):
    rng = np.random.Generator(np.random.PCG64(seed))
    values = 2.0 + 8.0 * rng.random((H, W))
    valid = np.ones((H, W), dtype=bool)
    valid[0, :3] = False
    return DepthMap(values, valid)


def make_provider(**kwargs):
    gt = make_gt()
    return OracleDepthProvider(lambda fid: gt, DepthProviderConfig(**kwargs)), gt


def test_config_validation():
    with pytest.raises(ValueError):
        DepthProviderConfig(affine_scale=0.0)
    with pytest.raises(ValueError):
        DepthProviderConfig(noise_sigma=-0.1)
    with pytest.raises(ValueError):
        DepthProviderConfig(outlier_fraction=1.0)
    with pytest.raises(ValueError):
        DepthProviderConfig(outlier_factor_range=(0.5, 2.0))


def test_mode1_is_exact_affine_without_noise():
    provider, gt = make_provider(affine_scale=1.7, affine_shift=0.3)
    pred = provider.predict_mode1(4)
    expected = 1.7 * gt.values + 0.3
    assert np.allclose(pred.values[gt.valid], expected[gt.valid], atol=1e-12)
    assert np.array_equal(pred.valid, gt.valid)


def test_mode1_determinism_per_frame():
    provider, _ = make_provider(noise_sigma=0.05, outlier_fraction=0.1)
    a = provider.predict_mode1(7)
    b = provider.predict_mode1(7)
    assert np.array_equal(a.values, b.values)
    c = provider.predict_mode1(8)
    assert not np.array_equal(a.values, c.values)


def test_mode1_calls_are_order_free():
    provider, _ = make_provider(noise_sigma=0.05)
    first = provider.predict_mode1(3).values
    provider.predict_mode1(11)
    provider.predict_mode1(5)
    assert np.array_equal(provider.predict_mode1(3).values, first)


def test_outlier_pixels_independent_of_noise_setting():
    # The RNG stream position is pinned, so which pixels get corrupted does
    # not change when the noise term is switched off.
    noisy, gt = make_provider(noise_sigma=0.05, outlier_fraction=0.2)
    clean, _ = make_provider(noise_sigma=0.0, outlier_fraction=0.2)
    ratio_noisy = noisy.predict_mode1(2).values / gt.values
    ratio_clean = clean.predict_mode1(2).values / gt.values
    hit_noisy = ratio_noisy > 1.4  # factors start at 1.5; noise is ~5%
    hit_clean = ratio_clean > 1.4
    assert np.array_equal(hit_noisy & gt.valid, hit_clean & gt.valid)
    n_expected = int(round(0.2 * gt.valid.sum()))
    assert (hit_clean & gt.valid).sum() == n_expected


def test_mode2_median_anchoring():
    provider, gt = make_provider(noise_sigma=0.03)
    sparse = SparseDepthMap(
        [(1, 1, 4.0), (5, 3, 6.5), (10, 8, 3.2), (14, 11, 9.0), (7, 6, 5.0)], W, H
    )
    pred = provider.predict_mode2(6, sparse)
    ratios = [z / pred.values[v, u] for u, v, z in sparse.samples]
    assert abs(upper_median(ratios) - 1.0) < 1e-12


def test_mode2_requires_sparse_anchors():
    provider, _ = make_provider()
    with pytest.raises(EmptySparseSet):
        provider.predict_mode2(0, SparseDepthMap([], W, H))


def test_missing_ground_truth():
    provider = OracleDepthProvider(lambda fid: None, DepthProviderConfig())
    with pytest.raises(MissingGroundTruth):
        provider.predict_mode1(0)


def test_file_provider_round_trip(tmp_path):
    gt = make_gt()
    fileio.write_depth_with_mask(str(tmp_path / "000004"), gt)
    provider = FileDepthProvider(tmp_path)
    pred = provider.predict_mode1(4)
    assert np.allclose(pred.values[gt.valid], gt.values[gt.valid], rtol=1e-6)
    assert np.array_equal(pred.valid, gt.valid)
    with pytest.raises(MissingFile):
        provider.predict_mode1(5)


def test_normalize_sparse():
    sparse = SparseDepthMap([(0, 0, 2.0), (1, 1, 8.0)], W, H)
    out = normalize_sparse(sparse)
    assert max(z for _, _, z in out.samples) == 1.0
    assert out.samples[0][2] == 0.25


def test_sample_sparse_depth_prefers_corners():
    rng = np.random.Generator(np.random.PCG64(3))
    image = np.full((40, 40), 0.5)
    image[10:30, 10:30] = 0.9  # a square: corners at its vertices
    gt = DepthMap(2.0 + rng.random((40, 40)))
    sparse = sample_sparse_depth(image, gt, target_count=4)
    assert not sparse.from_grid_fallback
    assert len(sparse) == 4
    for u, v, z in sparse.samples:
        assert z == gt.values[v, u]
        assert min(abs(u - 10), abs(u - 29)) <= 3
        assert min(abs(v - 10), abs(v - 29)) <= 3


def test_sample_sparse_depth_grid_fallback_on_flat_image():
    image = np.full((20, 20), 0.5)
    gt = DepthMap(np.full((20, 20), 3.0))
    sparse = sample_sparse_depth(image, gt, target_count=9)
    assert sparse.from_grid_fallback
    assert len(sparse) == 9
