"""Scale recovery: median ratio between VO depths and learned relative depths."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .depthmap import DepthMap
from .errors import EmptyPairSet, NonPositiveDepth


def upper_median(values) -> float:
    """Median fixed to the element at 0-based sorted index floor(n/2).

    For odd counts this is the ordinary median; for even counts it is the
    upper of the two middle elements, so the estimator always returns an
    observed ratio.
    """
    values = np.sort(np.asarray(values, dtype=float))
    if values.size == 0:
        raise EmptyPairSet("median of an empty set")
    return float(values[values.size // 2])


@dataclass(frozen=True)
class ScaleEstimate:
    """Recovered scale factor between VO depth and predicted relative depth."""

    theta_s: float
    n_pairs: int
    ratio_dispersion: float  # median absolute deviation of the ratios


def recover_scale(pairs) -> ScaleEstimate:
    """Estimate theta_s = median(z_vo / z_pred) over (z_vo, z_pred) pairs."""
    pairs = list(pairs)
    if not pairs:
        raise EmptyPairSet("scale recovery needs at least one depth pair")
    z_vo = np.array([p[0] for p in pairs], dtype=float)
    z_pred = np.array([p[1] for p in pairs], dtype=float)
    if np.any(z_vo <= 0) or np.any(z_pred <= 0):
        raise NonPositiveDepth("all depths in scale recovery must be positive")
    ratios = z_vo / z_pred
    theta_s = upper_median(ratios)
    dispersion = float(np.median(np.abs(ratios - np.median(ratios))))
    return ScaleEstimate(theta_s, len(pairs), dispersion)


def rescale_depth(depth: DepthMap, theta_s: float) -> DepthMap:
    """Multiply every valid depth by theta_s; the mask is unchanged."""
    if theta_s <= 0:
        raise ValueError("theta_s must be positive")
    if theta_s == 1.0:
        return depth.copy()
    values = depth.values.copy()
    values[depth.valid] = values[depth.valid] * theta_s
    return DepthMap(values, depth.valid.copy())
