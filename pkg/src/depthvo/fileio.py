"""File formats: PFM depth maps, PGM masks/images, PLY clouds, TUM trajectories."""

from __future__ import annotations

import os

import numpy as np
from scipy.spatial.transform import Rotation

from .depthmap import DepthMap
from .geometry import PoseSE3, Trajectory


# ---------------------------------------------------------------------------
# PFM (portable float map): little-endian float32, scale field -1.0,
# rows stored bottom-to-top per the format definition.

def write_pfm(path, values: np.ndarray):
    values = np.asarray(values, dtype=np.float32)
    if values.ndim != 2:
        raise ValueError("PFM writer expects a 2D array")
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{values.shape[1]} {values.shape[0]}\n".encode())
        f.write(b"-1.0\n")
        f.write(np.flipud(values).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.readline().strip() != b"Pf":
            raise ValueError(f"{path}: not a grayscale PFM file")
        width, height = (int(tok) for tok in f.readline().split())
        scale = float(f.readline())
        data = np.frombuffer(f.read(width * height * 4),
                             dtype="<f4" if scale < 0 else ">f4")
    if data.size != width * height:
        raise ValueError(f"{path}: truncated PFM payload")
    return np.flipud(data.reshape(height, width)).astype(np.float64)


# ---------------------------------------------------------------------------
# PGM: binary P5. Masks use maxval 255 (0 / 255); intensity images use
# maxval 65535 (big-endian, per the format) to keep quantization negligible.

def write_pgm_mask(path, mask: np.ndarray):
    mask = np.asarray(mask, dtype=bool)
    with open(path, "wb") as f:
        f.write(f"P5\n{mask.shape[1]} {mask.shape[0]}\n255\n".encode())
        f.write((mask.astype(np.uint8) * 255).tobytes())


def write_pgm_intensity(path, image: np.ndarray):
    """Write an intensity image in [0, 1] as a 16-bit PGM."""
    image = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    quantized = np.round(image * 65535.0).astype(">u2")
    with open(path, "wb") as f:
        f.write(f"P5\n{image.shape[1]} {image.shape[0]}\n65535\n".encode())
        f.write(quantized.tobytes())


def _read_pgm_tokens(f):
    # Header tokens may be separated by arbitrary whitespace and comments.
    tokens = []
    while len(tokens) < 4:
        line = f.readline()
        if not line:
            raise ValueError("truncated PGM header")
        stripped = line.split(b"#")[0]
        tokens.extend(stripped.split())
    return tokens


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM; returns floats in [0, 1]."""
    with open(path, "rb") as f:
        magic, w, h, maxval = _read_pgm_tokens(f)
        if magic != b"P5":
            raise ValueError(f"{path}: not a binary PGM file")
        w, h, maxval = int(w), int(h), int(maxval)
        dtype = ">u2" if maxval > 255 else np.uint8
        data = np.frombuffer(f.read(), dtype=dtype)[: w * h]
    if data.size != w * h:
        raise ValueError(f"{path}: truncated PGM payload")
    return data.reshape(h, w).astype(np.float64) / maxval


def write_depth_with_mask(path_prefix, depth: DepthMap):
    """Write <prefix>.pfm plus the <prefix>.mask.pgm sidecar."""
    write_pfm(str(path_prefix) + ".pfm", depth.values)
    write_pgm_mask(str(path_prefix) + ".mask.pgm", depth.valid)


def read_depth_with_mask(path_prefix) -> DepthMap:
    values = read_pfm(str(path_prefix) + ".pfm")
    mask_path = str(path_prefix) + ".mask.pgm"
    valid = read_pgm(mask_path) > 0.5 if os.path.exists(mask_path) else None
    if valid is not None:
        values = np.where(valid, values, 1.0)
    return DepthMap(values, valid)


# ---------------------------------------------------------------------------
# TUM trajectory text format: "timestamp tx ty tz qx qy qz qw" per line,
# camera-to-world pose, '#' comment lines ignored.

def write_tum_trajectory(path, traj: Trajectory):
    with open(path, "w") as f:
        f.write("# timestamp tx ty tz qx qy qz qw\n")
        for ts, pose in zip(traj.timestamps, traj.poses):
            center = pose.camera_center
            q = Rotation.from_matrix(pose.rotation.T).as_quat()  # (x, y, z, w)
            fields = [ts, *center, *q]
            f.write(" ".join(f"{x:.9f}" for x in fields) + "\n")


def read_tum_trajectory(path) -> Trajectory:
    traj = Trajectory()
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            vals = [float(tok) for tok in line.split()]
            if len(vals) != 8:
                raise ValueError(f"{path}: malformed trajectory line: {line!r}")
            ts, tx, ty, tz = vals[:4]
            r_wc = Rotation.from_quat(vals[4:8]).as_matrix()
            r_cw = r_wc.T
            traj.append(ts, PoseSE3(r_cw, -r_cw @ np.array([tx, ty, tz])))
    return traj


# ---------------------------------------------------------------------------
# PLY point clouds: binary little-endian, float32 x y z (+ optional intensity).

def write_ply(path, points: np.ndarray, intensity: np.ndarray | None = None):
    points = np.asarray(points, dtype=np.float32).reshape(-1, 3)
    header = [
        "ply",
        "format binary_little_endian 1.0",
        f"element vertex {len(points)}",
        "property float x",
        "property float y",
        "property float z",
    ]
    if intensity is not None:
        intensity = np.asarray(intensity, dtype=np.float32).reshape(-1)
        if len(intensity) != len(points):
            raise ValueError("intensity length must match point count")
        header.append("property float intensity")
    header.append("end_header")
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode())
        if intensity is None:
            f.write(points.astype("<f4").tobytes())
        else:
            rows = np.concatenate([points, intensity[:, None]], axis=1)
            f.write(rows.astype("<f4").tobytes())


def read_ply(path):
    """Minimal reader for the clouds this package writes.

    Returns (points, intensity-or-None).
    """
    with open(path, "rb") as f:
        if f.readline().strip() != b"ply":
            raise ValueError(f"{path}: not a PLY file")
        n_vertices = 0
        properties = []
        while True:
            line = f.readline().strip()
            if line == b"end_header":
                break
            parts = line.split()
            if parts[:2] == [b"element", b"vertex"]:
                n_vertices = int(parts[2])
            elif parts and parts[0] == b"property":
                properties.append(parts[2].decode())
        data = np.frombuffer(
            f.read(n_vertices * 4 * len(properties)), dtype="<f4"
        ).reshape(n_vertices, len(properties))
    points = data[:, :3].astype(np.float64)
    intensity = None
    if "intensity" in properties:
        intensity = data[:, properties.index("intensity")].astype(np.float64)
    return points, intensity
