"""Dense and sparse depth containers shared by the losses, providers, and VO."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySparseSet, NonPositiveDepth


@dataclass
class DepthMap:
    """Per-pixel depth with a validity mask.

    Values at valid pixels must be finite and positive; invalid pixels are
    excluded from every reduction.
    """

    values: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("depth values must be a 2D array")
        if self.valid is None:
            self.valid = np.ones(self.values.shape, dtype=bool)
        else:
            self.valid = np.asarray(self.valid, dtype=bool)
        if self.valid.shape != self.values.shape:
            raise ValueError("mask shape must match value shape")
        v = self.values[self.valid]
        if v.size and (not np.all(np.isfinite(v)) or np.any(v <= 0)):
            raise ValueError("valid depths must be finite and positive")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def copy(self) -> "DepthMap":
        return DepthMap(self.values.copy(), self.valid.copy())

    def sample_bilinear(self, u: float, v: float) -> float | None:
        """Bilinearly interpolated depth at sub-pixel (u, v).

        Requires all four neighbor pixels valid; falls back to the nearest
        valid pixel within a 1-pixel radius, else returns None.
        """
        return _sample_bilinear(self.values, self.valid, u, v)


def _sample_bilinear(values, valid, u, v):
    h, w = values.shape
    if not (0 <= u <= w - 1 and 0 <= v <= h - 1):
        return None
    u0 = int(np.floor(u))
    v0 = int(np.floor(v))
    u0 = min(u0, w - 2) if w > 1 else 0
    v0 = min(v0, h - 2) if h > 1 else 0
    u1 = min(u0 + 1, w - 1)
    v1 = min(v0 + 1, h - 1)
    fu = u - u0
    fv = v - v0
    corners = ((v0, u0), (v0, u1), (v1, u0), (v1, u1))
    if all(valid[cv, cu] for cv, cu in corners):
        top = values[v0, u0] * (1 - fu) + values[v0, u1] * fu
        bot = values[v1, u0] * (1 - fu) + values[v1, u1] * fu
        return float(top * (1 - fv) + bot * fv)
    # Nearest valid pixel within 1 pixel of (u, v).
    best = None
    best_d = np.inf
    for cv in range(max(0, int(np.floor(v - 1))), min(h, int(np.ceil(v + 1)) + 1)):
        for cu in range(max(0, int(np.floor(u - 1))), min(w, int(np.ceil(u + 1)) + 1)):
            if valid[cv, cu]:
                d = (cu - u) ** 2 + (cv - v) ** 2
                if d < best_d and d <= 1.0:
                    best_d = d
                    best = float(values[cv, cu])
    return best


@dataclass
class SparseDepthMap:
    """Sparse (u, v, z) depth samples bound to an image size."""

    samples: list
    width: int
    height: int
    from_grid_fallback: bool = False

    def __post_init__(self):
        seen = set()
        for u, v, z in self.samples:
            if not (0 <= u < self.width and 0 <= v < self.height):
                raise ValueError(f"sample ({u}, {v}) outside image bounds")
            if z <= 0:
                raise NonPositiveDepth(f"sparse depth {z} at ({u}, {v})")
            if (u, v) in seen:
                raise ValueError(f"duplicate sparse pixel ({u}, {v})")
            seen.add((u, v))

    def __len__(self):
        return len(self.samples)

    def depths(self) -> np.ndarray:
        return np.array([z for _, _, z in self.samples], dtype=float)

    def require_nonempty(self):
        if not self.samples:
            raise EmptySparseSet("sparse depth map has no samples")
