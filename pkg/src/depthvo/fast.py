"""FAST-9 corner detection on intensity images.

Segment test on the 16-pixel Bresenham circle of radius 3: a pixel is a
corner when 9 contiguous circle pixels are all brighter than center +
threshold or all darker than center - threshold. The score is the sum of
absolute center differences over the qualifying arc; 3x3 non-maximum
suppression keeps local score maxima only.
"""

from __future__ import annotations

import numpy as np

# Bresenham circle of radius 3, clockwise from 12 o'clock: (du, dv) offsets.
CIRCLE_OFFSETS = [
    (0, -3), (1, -3), (2, -2), (3, -1),
    (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1),
    (-3, 0), (-3, -1), (-2, -2), (-1, -3),
]

ARC_LENGTH = 9


def fast_corners(image: np.ndarray, contrast_threshold: float):
    """Detect FAST-9 corners; returns a list of (u, v, score).

    The segment test uses intensity differences only, so the output is
    invariant under adding a constant to the whole image.
    """
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    if h < 7 or w < 7:
        raise ValueError("image must be at least 7x7")

    interior = image[3 : h - 3, 3 : w - 3]
    # circle[k] holds the intensity of circle pixel k for every interior pixel.
    circle = np.stack(
        [image[3 + dv : h - 3 + dv, 3 + du : w - 3 + du] for du, dv in CIRCLE_OFFSETS]
    )
    brighter = circle > interior + contrast_threshold
    darker = circle < interior - contrast_threshold

    score_map = np.zeros((h, w))
    corner_mask = np.zeros((h, w), dtype=bool)
    for polarity in (brighter, darker):
        arc_ok, arc_score = _contiguous_arc(polarity, np.abs(circle - interior))
        update = arc_ok & (arc_score > score_map[3 : h - 3, 3 : w - 3])
        score_map[3 : h - 3, 3 : w - 3][update] = arc_score[update]
        corner_mask[3 : h - 3, 3 : w - 3] |= arc_ok

    corners = []
    for v, u in zip(*np.nonzero(corner_mask)):
        s = score_map[v, u]
        window = score_map[max(0, v - 1) : v + 2, max(0, u - 1) : u + 2]
        if s >= window.max():  # 3x3 non-maximum suppression
            corners.append((int(u), int(v), float(s)))
    return corners


def _contiguous_arc(flags: np.ndarray, diffs: np.ndarray):
    """Check for >= ARC_LENGTH contiguous set flags around the 16-circle.

    flags, diffs: shape (16, H, W). Returns (passes, best score) where the
    score is the maximum over qualifying arcs of the summed differences of
    an ARC_LENGTH window.
    """
    wrapped = np.concatenate([flags, flags[: ARC_LENGTH - 1]], axis=0)
    wrapped_diffs = np.concatenate([diffs, diffs[: ARC_LENGTH - 1]], axis=0)
    passes = np.zeros(flags.shape[1:], dtype=bool)
    score = np.zeros(flags.shape[1:])
    for start in range(16):
        window = wrapped[start : start + ARC_LENGTH]
        ok = window.all(axis=0)
        if not ok.any():
            continue
        window_score = wrapped_diffs[start : start + ARC_LENGTH].sum(axis=0)
        better = ok & (window_score > score)
        score[better] = window_score[better]
        passes |= ok
    return passes, score
