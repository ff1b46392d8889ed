"""FAST-9 corner detector on synthetic patterns."""

import numpy as np
import pytest

from depthvo.fast import ARC_LENGTH, CIRCLE_OFFSETS, fast_corners


def square_image(h=30, w=30, lo=0.2, hi=0.9):
    img = np.full((h, w), lo)
    img[10:20, 10:20] = hi
    return img


def test_circle_geometry():
    assert len(CIRCLE_OFFSETS) == 16
    assert len(set(CIRCLE_OFFSETS)) == 16
    for du, dv in CIRCLE_OFFSETS:
        assert max(abs(du), abs(dv)) == 3 or round(np.hypot(du, dv)) == 3
    assert ARC_LENGTH == 9


def test_flat_image_has_no_corners():
    assert fast_corners(np.full((20, 20), 0.5), 0.05) == []


def test_square_corners_detected():
    corners = fast_corners(square_image(), 0.2)
    assert corners
    # Every detection is near one of the square's four vertices.
    vertices = [(10, 10), (19, 10), (10, 19), (19, 19)]
    for u, v, score in corners:
        assert score > 0
        assert min(abs(u - a) + abs(v - b) for a, b in vertices) <= 3


def test_dark_corner_also_detected():
    img = 1.0 - square_image()
    assert fast_corners(img, 0.2)


def test_straight_edge_is_not_a_corner():
    img = np.full((30, 30), 0.2)
    img[:, 15:] = 0.9
    for u, v, _ in fast_corners(img, 0.2):
        assert False, f"edge pixel ({u}, {v}) reported as corner"


def test_intensity_offset_invariance():
    img = square_image()
    base = fast_corners(img, 0.2)
    shifted = fast_corners(img + 0.07, 0.2)
    assert base == shifted


def test_non_maximum_suppression_is_local():
    corners = fast_corners(square_image(), 0.2)
    pos = [(u, v) for u, v, _ in corners]
    for i, (u, v) in enumerate(pos):
        for u2, v2 in pos[i + 1 :]:
            # NMS may keep equal-score neighbors but positions stay distinct.
            assert (u, v) != (u2, v2)


def test_rejects_tiny_images():
    with pytest.raises(ValueError):
        fast_corners(np.zeros((6, 10)), 0.1)
