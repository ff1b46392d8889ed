"""Losses: affine invariance, analytic gradients vs finite differences, VNL
scale invariance and range, sparse MSE oracle."""

import numpy as np
import pytest

from depthvo.depthmap import DepthMap, SparseDepthMap
from depthvo.errors import (
    EmptySparseSet,
    InsufficientOverlap,
    SingularNormalMatrix,
)
from depthvo.geometry import CameraIntrinsics
from depthvo.losses import (
    combined_loss,
    mse_sparse_loss,
    ssi_loss,
    virtual_normal_loss,
)

H, W = 10, 14
K = CameraIntrinsics(fx=18.0, fy=18.0, cx=W / 2, cy=H / 2, width=W, height=H)


def random_maps(seed, holes=4):
    rng = np.random.Generator(np.random.PCG64(seed))
    gt = 2.0 + 3.0 * rng.random((H, W))
    pred = np.clip(gt * 1.3 + 0.2 + rng.normal(0, 0.08, (H, W)), 0.2, None)
    valid = np.ones((H, W), dtype=bool)
    valid[rng.integers(0, H, holes), rng.integers(0, W, holes)] = False
    return DepthMap(pred, valid), DepthMap(gt, valid.copy())


def finite_difference(loss_fn, pred, indices, step=1e-5):
    grads = []
    for iv, iu in indices:
        bumped = pred.values.copy()
        bumped[iv, iu] += step
        hi = loss_fn(DepthMap(bumped, pred.valid))
        bumped[iv, iu] -= 2 * step
        lo = loss_fn(DepthMap(bumped, pred.valid))
        grads.append((hi - lo) / (2 * step))
    return np.array(grads)


def probe_indices(pred, rng, count):
    idx_v, idx_u = np.nonzero(pred.valid)
    pick = rng.choice(len(idx_v), size=count, replace=False)
    return list(zip(idx_v[pick], idx_u[pick]))


def check_gradient(loss_fn, gradient, pred, seed, count=25, tol=1e-4):
    rng = np.random.Generator(np.random.PCG64(seed + 1000))
    indices = probe_indices(pred, rng, count)
    numeric = finite_difference(loss_fn, pred, indices)
    analytic = np.array([gradient[iv, iu] for iv, iu in indices])
    scale = np.maximum(np.maximum(np.abs(numeric), np.abs(analytic)), 1e-8)
    assert np.max(np.abs(numeric - analytic) / scale) < tol


def test_ssi_zero_on_affine_ground_truth():
    rng = np.random.Generator(np.random.PCG64(0))
    for seed in range(20):
        pred, _ = random_maps(seed)
        s = float(rng.uniform(0.1, 5.0))
        t = float(rng.uniform(0.0, 4.0))
        gt = DepthMap(pred.values * s + t, pred.valid.copy())
        result, h = ssi_loss(pred, gt)
        assert abs(result.value) < 1e-10
        assert abs(h[0] - s) < 1e-8 and abs(h[1] - t) < 1e-8
        assert np.max(np.abs(result.gradient)) < 1e-9


def test_ssi_gradient_matches_finite_differences():
    for seed in range(4):
        pred, gt = random_maps(seed)
        result, _ = ssi_loss(pred, gt)
        check_gradient(lambda p: ssi_loss(p, gt)[0].value, result.gradient, pred, seed)


def test_ssi_gradient_zero_at_invalid_pixels():
    pred, gt = random_maps(0)
    result, _ = ssi_loss(pred, gt)
    assert np.all(result.gradient[~pred.valid] == 0.0)


def test_ssi_rejects_constant_prediction():
    gt = DepthMap(2.0 + np.random.default_rng(0).random((H, W)))
    with pytest.raises(SingularNormalMatrix):
        ssi_loss(DepthMap(np.full((H, W), 3.0)), gt)
    tiny = np.zeros((H, W), dtype=bool)
    tiny[0, 0] = True
    with pytest.raises(InsufficientOverlap):
        ssi_loss(DepthMap(np.ones((H, W)), tiny), DepthMap(np.ones((H, W)), tiny))


def test_vnl_gradient_matches_finite_differences():
    for seed in range(3):
        pred, gt = random_maps(seed)
        result = virtual_normal_loss(pred, gt, K, n_triplets=150, seed=seed)
        check_gradient(
            lambda p: virtual_normal_loss(p, gt, K, n_triplets=150, seed=seed).value,
            result.gradient,
            pred,
            seed,
            count=20,
        )


def test_vnl_scale_invariance_and_range():
    rng = np.random.Generator(np.random.PCG64(9))
    for seed in range(100):
        pred, gt = random_maps(seed, holes=2)
        value = virtual_normal_loss(pred, gt, K, n_triplets=60, seed=seed).value
        assert 0.0 <= value <= 2.0 * np.sqrt(3.0)
        c = float(rng.uniform(0.2, 8.0))
        scaled = DepthMap(pred.values * c, pred.valid.copy())
        scaled_value = virtual_normal_loss(scaled, gt, K, n_triplets=60, seed=seed).value
        assert abs(scaled_value - value) < 1e-9


def test_vnl_zero_when_prediction_is_scaled_truth():
    _, gt = random_maps(3)
    pred = DepthMap(gt.values * 2.0, gt.valid.copy())
    value = virtual_normal_loss(pred, gt, K, n_triplets=80, seed=3).value
    assert value < 1e-10


def test_mse_sparse_against_hand_computed_oracle():
    pred = DepthMap(np.arange(1, H * W + 1, dtype=float).reshape(H, W))
    sparse = SparseDepthMap([(2, 1, 10.0), (5, 4, 50.0)], W, H)
    result = mse_sparse_loss(pred, sparse)
    r1 = pred.values[1, 2] - 10.0
    r2 = pred.values[4, 5] - 50.0
    assert abs(result.value - (r1 * r1 + r2 * r2) / 4.0) < 1e-12
    assert abs(result.gradient[1, 2] - r1 / 2.0) < 1e-12
    assert abs(result.gradient[4, 5] - r2 / 2.0) < 1e-12
    assert np.count_nonzero(result.gradient) == 2


def test_mse_sparse_gradient_matches_finite_differences():
    pred, gt = random_maps(5)
    rng = np.random.Generator(np.random.PCG64(5))
    samples = []
    seen = set()
    for u, v in zip(rng.integers(0, W, 15), rng.integers(0, H, 15)):
        if (int(u), int(v)) not in seen:
            seen.add((int(u), int(v)))
            samples.append((int(u), int(v), float(gt.values[v, u])))
    sparse = SparseDepthMap(samples, W, H)
    result = mse_sparse_loss(pred, sparse)
    check_gradient(lambda p: mse_sparse_loss(p, sparse).value, result.gradient, pred, 5)


def test_combined_loss_modes():
    pred, gt = random_maps(6)
    sparse = SparseDepthMap([(3, 3, float(gt.values[3, 3]))], W, H)
    mode1 = combined_loss(pred, gt, mode=1, K=K, n_triplets=50, seed=6)
    mode2 = combined_loss(pred, gt, mode=2, gt_sparse=sparse, K=K, n_triplets=50, seed=6)
    extra = mse_sparse_loss(pred, sparse)
    assert abs(mode2.value - mode1.value - extra.value) < 1e-12
    assert np.allclose(mode2.gradient, mode1.gradient + extra.gradient, atol=1e-12)
    with pytest.raises(ValueError):
        combined_loss(pred, gt, mode=3, K=K)
    with pytest.raises(ValueError):
        combined_loss(pred, gt, mode=1)
    with pytest.raises(EmptySparseSet):
        combined_loss(pred, gt, mode=2, K=K)
