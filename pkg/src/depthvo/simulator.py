"""Deterministic synthetic world: analytic surfaces, procedural texture,
ray-cast depth/intensity rendering, trajectory generation, and labeled
feature tracks with controllable outlier injection.

Everything is a pure function of its inputs and seeds, so rendered frames
and generated sequences are bitwise reproducible.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .depthmap import DepthMap
from .errors import NoVisibleLandmarks
from . import fileio
from .geometry import CameraIntrinsics, PoseSE3, Trajectory


# ---------------------------------------------------------------------------
# Procedural texture: two octaves of hash-gradient value noise over surface
# parameter coordinates, mapped into [0, 1]. Pure and vectorized.

_MIX1 = np.uint64(0x9E3779B97F4A7C15)
_MIX2 = np.uint64(0xC2B2AE3D27D4EB4F)
_MIX3 = np.uint64(0x165667B19E3779F9)


def _hash_angle(ix, iy, seed):
    # Wraparound multiplies are the point of the hash; mask the seed term in
    # Python ints so numpy does not warn about intentional uint64 overflow.
    seed_term = np.uint64((int(seed) * int(_MIX3)) & 0xFFFFFFFFFFFFFFFF)
    h = ix.astype(np.uint64) * _MIX1 + iy.astype(np.uint64) * _MIX2 + seed_term
    h ^= h >> np.uint64(33)
    h *= _MIX2
    h ^= h >> np.uint64(29)
    return (h / np.float64(2**64)) * (2 * np.pi)


def _gradient_noise(x, y, seed):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = x - x0
    fy = y - y0
    ix = x0.astype(np.int64)
    iy = y0.astype(np.int64)

    def corner_dot(dx, dy):
        angle = _hash_angle(ix + dx, iy + dy, seed)
        return np.cos(angle) * (fx - dx) + np.sin(angle) * (fy - dy)

    # Quintic fade keeps first and second derivatives continuous.
    ux = fx**3 * (fx * (fx * 6 - 15) + 10)
    uy = fy**3 * (fy * (fy * 6 - 15) + 10)
    top = corner_dot(0, 0) * (1 - ux) + corner_dot(1, 0) * ux
    bot = corner_dot(0, 1) * (1 - ux) + corner_dot(1, 1) * ux
    return top * (1 - uy) + bot * uy


def texture_intensity(a, b, seed, frequency=1.5, amplitude=0.4):
    """Deterministic surface texture in [0, 1] from parameter coordinates."""
    base = _gradient_noise(a * frequency, b * frequency, seed)
    detail = _gradient_noise(a * frequency * 2 + 17.0, b * frequency * 2 + 9.0, seed + 1)
    value = 0.5 + amplitude * (base + 0.5 * detail)
    return np.clip(value, 0.02, 0.98)


# ---------------------------------------------------------------------------
# Analytic surfaces. Each exposes vectorized ray intersection, a point-to-
# surface distance, parameter coordinates for texturing, and point sampling.

class AxisAlignedPlane:
    """Finite rectangle on a plane with one axis-aligned normal."""

    def __init__(self, axis: int, offset: float, extent_lo, extent_hi):
        self.axis = axis
        self.offset = float(offset)
        self.other = [i for i in range(3) if i != axis]
        self.extent_lo = np.asarray(extent_lo, dtype=float)  # the 2 in-plane axes
        self.extent_hi = np.asarray(extent_hi, dtype=float)

    def intersect(self, origins, dirs):
        d_axis = dirs[:, self.axis]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (self.offset - origins[:, self.axis]) / d_axis
            a = origins[:, self.other[0]] + t * dirs[:, self.other[0]]
            b = origins[:, self.other[1]] + t * dirs[:, self.other[1]]
        inside = (
            (t > 1e-9) & np.isfinite(t)
            & (a >= self.extent_lo[0]) & (a <= self.extent_hi[0])
            & (b >= self.extent_lo[1]) & (b <= self.extent_hi[1])
        )
        t = np.where(inside, t, np.inf)
        return t, a, b

    def distance(self, points):
        points = np.atleast_2d(points)
        return np.abs(points[:, self.axis] - self.offset)

    def sample(self, rng, n):
        ab = rng.uniform(self.extent_lo, self.extent_hi, size=(n, 2))
        pts = np.empty((n, 3))
        pts[:, self.axis] = self.offset
        pts[:, self.other[0]] = ab[:, 0]
        pts[:, self.other[1]] = ab[:, 1]
        return pts

    @property
    def area(self):
        span = self.extent_hi - self.extent_lo
        return float(span[0] * span[1])

    @property
    def center(self):
        c = np.empty(3)
        c[self.axis] = self.offset
        mid = (self.extent_lo + self.extent_hi) / 2
        c[self.other[0]] = mid[0]
        c[self.other[1]] = mid[1]
        return c


class Sphere:
    def __init__(self, center, radius: float):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)

    def intersect(self, origins, dirs):
        oc = origins - self.center
        a = np.sum(dirs * dirs, axis=1)
        b = 2 * np.sum(dirs * oc, axis=1)
        c = np.sum(oc * oc, axis=1) - self.radius**2
        disc = b * b - 4 * a * c
        t = np.full(len(dirs), np.inf)
        hit = disc >= 0
        sq = np.sqrt(np.maximum(disc, 0))
        t1 = (-b - sq) / (2 * a)
        t2 = (-b + sq) / (2 * a)
        t_near = np.where(t1 > 1e-9, t1, np.where(t2 > 1e-9, t2, np.inf))
        t[hit] = t_near[hit]
        t_safe = np.where(np.isfinite(t), t, 1.0)
        pts = origins + t_safe[:, None] * dirs
        rel = pts - self.center
        # Spherical angles scaled by radius so texture frequency is metric.
        theta = np.arctan2(rel[:, 1], rel[:, 0]) * self.radius
        phi = np.arccos(np.clip(rel[:, 2] / self.radius, -1, 1)) * self.radius
        return t, theta, phi

    def distance(self, points):
        points = np.atleast_2d(points)
        return np.abs(np.linalg.norm(points - self.center, axis=1) - self.radius)

    def sample(self, rng, n):
        v = rng.standard_normal((n, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return self.center + self.radius * v

    @property
    def area(self):
        return float(4 * np.pi * self.radius**2)


class HeightFieldPatch:
    """Smooth height field z = z0 + amplitude * sin(kx x) * cos(ky y) over a
    rectangle in (x, y), intersected by marching plus bisection."""

    def __init__(self, z0, amplitude, kx, ky, x_range, y_range, steps=96):
        self.z0 = float(z0)
        self.amplitude = float(amplitude)
        self.kx = float(kx)
        self.ky = float(ky)
        self.x_range = tuple(float(v) for v in x_range)
        self.y_range = tuple(float(v) for v in y_range)
        self.steps = steps

    def height(self, x, y):
        return self.z0 + self.amplitude * np.sin(self.kx * x) * np.cos(self.ky * y)

    def _residual(self, origins, dirs, t):
        pts = origins + t[:, None] * dirs
        return pts[:, 2] - self.height(pts[:, 0], pts[:, 1]), pts

    def intersect(self, origins, dirs):
        n = len(dirs)
        t_lo = np.full(n, 1e-6)
        t_hi = np.full(n, 1e3)
        found_lo = np.full(n, np.inf)
        found_hi = np.full(n, np.inf)
        prev_r, _ = self._residual(origins, dirs, t_lo)
        prev_t = t_lo
        ts = np.linspace(0, 1, self.steps + 1)[1:]
        for frac in ts:
            t_cur = t_lo + (t_hi - t_lo) * frac
            r, pts = self._residual(origins, dirs, t_cur)
            in_rect = (
                (pts[:, 0] >= self.x_range[0]) & (pts[:, 0] <= self.x_range[1])
                & (pts[:, 1] >= self.y_range[0]) & (pts[:, 1] <= self.y_range[1])
            )
            crossing = (np.sign(r) != np.sign(prev_r)) & in_rect & np.isinf(found_lo)
            found_lo[crossing] = prev_t[crossing]
            found_hi[crossing] = t_cur[crossing]
            prev_r = r
            prev_t = t_cur
        hit = np.isfinite(found_lo)
        t = np.full(n, np.inf)
        if hit.any():
            lo = found_lo[hit]
            hi = found_hi[hit]
            o = origins[hit] if origins.shape[0] == n else origins
            d = dirs[hit]
            for _ in range(48):
                mid = (lo + hi) / 2
                r_mid, _ = self._residual(o, d, mid)
                r_lo, _ = self._residual(o, d, lo)
                same = np.sign(r_mid) == np.sign(r_lo)
                lo = np.where(same, mid, lo)
                hi = np.where(same, hi, mid)
            t[hit] = (lo + hi) / 2
        t_safe = np.where(np.isfinite(t), t, 1.0)
        pts = origins + t_safe[:, None] * dirs
        return t, pts[:, 0], pts[:, 1]

    def distance(self, points):
        # Vertical residual; exact for points on the surface, an upper bound
        # elsewhere, which is all the on-surface tests need.
        points = np.atleast_2d(points)
        return np.abs(points[:, 2] - self.height(points[:, 0], points[:, 1]))

    def sample(self, rng, n):
        x = rng.uniform(self.x_range[0], self.x_range[1], n)
        y = rng.uniform(self.y_range[0], self.y_range[1], n)
        return np.stack([x, y, self.height(x, y)], axis=1)

    @property
    def area(self):
        return float(
            (self.x_range[1] - self.x_range[0]) * (self.y_range[1] - self.y_range[0])
        )


@dataclass
class Scene:
    """Analytic world: surfaces plus a deterministic texture.

    landmark_sampler, if set, replaces the default area-proportional placement
    of landmarks: it is called with (rng, n) and returns (n, 3) world points on
    the surfaces (useful to shape the landmark depth distribution).
    """

    surfaces: list
    texture_seed: int = 0
    texture_frequency: float = 1.5
    texture_amplitude: float = 0.4
    landmark_sampler: object = None

    @property
    def scene_diameter(self) -> float:
        pts = []
        for s in self.surfaces:
            if isinstance(s, Sphere):
                pts.append(s.center - s.radius)
                pts.append(s.center + s.radius)
            elif isinstance(s, AxisAlignedPlane):
                lo = np.empty(3)
                hi = np.empty(3)
                lo[s.axis] = hi[s.axis] = s.offset
                lo[s.other[0]], lo[s.other[1]] = s.extent_lo
                hi[s.other[0]], hi[s.other[1]] = s.extent_hi
                pts.extend([lo, hi])
            else:
                pts.append(np.array([s.x_range[0], s.y_range[0], s.z0 - s.amplitude]))
                pts.append(np.array([s.x_range[1], s.y_range[1], s.z0 + s.amplitude]))
        pts = np.stack(pts)
        return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))

    @property
    def centroid(self) -> np.ndarray:
        centers = []
        for s in self.surfaces:
            if isinstance(s, Sphere):
                centers.append(s.center)
            elif isinstance(s, AxisAlignedPlane):
                centers.append(s.center)
            else:
                centers.append(
                    np.array(
                        [
                            (s.x_range[0] + s.x_range[1]) / 2,
                            (s.y_range[0] + s.y_range[1]) / 2,
                            s.z0,
                        ]
                    )
                )
        return np.mean(np.stack(centers), axis=0)

    def raycast(self, origins, dirs):
        """Nearest intersection of each ray.

        Returns (t, surface_index, param_a, param_b); misses have t = inf
        and surface_index = -1.
        """
        n = len(dirs)
        best_t = np.full(n, np.inf)
        best_sid = np.full(n, -1, dtype=int)
        best_a = np.zeros(n)
        best_b = np.zeros(n)
        for sid, surf in enumerate(self.surfaces):
            t, a, b = surf.intersect(origins, dirs)
            closer = t < best_t
            best_t[closer] = t[closer]
            best_sid[closer] = sid
            best_a[closer] = a[closer]
            best_b[closer] = b[closer]
        return best_t, best_sid, best_a, best_b

    def intensity_at(self, sid, a, b):
        out = np.full(np.shape(sid), -1.0)
        sid = np.asarray(sid)
        for s in range(len(self.surfaces)):
            on = sid == s
            if np.any(on):
                out[on] = texture_intensity(
                    np.asarray(a)[on],
                    np.asarray(b)[on],
                    self.texture_seed + 101 * s,
                    self.texture_frequency,
                    self.texture_amplitude,
                )
        return out

    def surface_distance(self, points) -> np.ndarray:
        """Distance from each point to the nearest scene surface."""
        points = np.atleast_2d(points)
        return np.min(
            np.stack([s.distance(points) for s in self.surfaces]), axis=0
        )


def _pixel_rays(K: CameraIntrinsics, pose: PoseSE3):
    """World-frame rays through all pixel centers, scaled so t equals the
    camera-frame depth of the hit."""
    us, vs = np.meshgrid(np.arange(K.width), np.arange(K.height))
    d_cam = np.stack(
        [(us - K.cx) / K.fx, (vs - K.cy) / K.fy, np.ones_like(us, dtype=float)],
        axis=-1,
    ).reshape(-1, 3)
    dirs = d_cam @ pose.rotation  # R_cw^T applied to each row
    origin = pose.camera_center
    return np.broadcast_to(origin, dirs.shape), dirs


def render_depth(scene: Scene, pose: PoseSE3, K: CameraIntrinsics) -> DepthMap:
    """Ray-cast per-pixel depth; pixels that hit nothing are invalid."""
    origins, dirs = _pixel_rays(K, pose)
    t, _, _, _ = scene.raycast(origins, dirs)
    valid = np.isfinite(t) & (t > 0)
    values = np.where(valid, t, 1.0).reshape(K.height, K.width)
    return DepthMap(values, valid.reshape(K.height, K.width))


def render_intensity(scene: Scene, pose: PoseSE3, K: CameraIntrinsics) -> np.ndarray:
    """Lambertian-constant intensity image; no-hit pixels get sentinel -1."""
    origins, dirs = _pixel_rays(K, pose)
    t, sid, a, b = scene.raycast(origins, dirs)
    img = scene.intensity_at(sid, a, b)
    img[~np.isfinite(t)] = -1.0
    return img.reshape(K.height, K.width)


# ---------------------------------------------------------------------------
# Trajectory generation.

@dataclass(frozen=True)
class SequenceSpec:
    """Controls for one generated sequence."""

    kind: str = "orbit"  # straight | orbit | random-walk
    n_frames: int = 100
    frame_rate: float = 10.0
    pixel_noise_sigma: float = 0.0
    landmark_count: int = 500
    outlier_fraction: float = 0.0
    outlier_factor_range: tuple = (1.5, 3.0)
    seed: int = 0
    start: tuple | None = None
    direction: tuple = (1.0, 0.0, 0.0)
    step: float | None = None
    orbit_radius: float | None = None
    orbit_arc_deg: float = 60.0

    def __post_init__(self):
        if self.kind not in ("straight", "orbit", "random-walk"):
            raise ValueError(f"unknown trajectory kind: {self.kind}")
        if self.n_frames < 2:
            raise ValueError("n_frames must be >= 2")
        if not 0 <= self.outlier_fraction < 1:
            raise ValueError("outlier_fraction must be in [0, 1)")
        if self.pixel_noise_sigma < 0:
            raise ValueError("pixel_noise_sigma must be >= 0")


def look_at(center: np.ndarray, target: np.ndarray, up=(0.0, 1.0, 0.0)) -> PoseSE3:
    """World-to-camera pose with the camera at `center` looking at `target`.

    `up` is the world direction that should map near the image's +v axis.
    """
    z_cam = target - center
    z_cam = z_cam / np.linalg.norm(z_cam)
    up = np.asarray(up, dtype=float)
    x_cam = np.cross(up, z_cam)
    nx = np.linalg.norm(x_cam)
    if nx < 1e-12:
        up = np.array([0.0, 0.0, 1.0])
        x_cam = np.cross(up, z_cam)
        nx = np.linalg.norm(x_cam)
    x_cam /= nx
    y_cam = np.cross(z_cam, x_cam)
    rotation = np.stack([x_cam, y_cam, z_cam])
    return PoseSE3(rotation, -rotation @ center)


def _default_start(scene: Scene, spec: SequenceSpec) -> np.ndarray:
    if spec.start is not None:
        return np.asarray(spec.start, dtype=float)
    centroid = scene.centroid
    return centroid - np.array([0.0, 0.0, 0.75 * scene.scene_diameter])


def generate_trajectory(spec: SequenceSpec, scene: Scene) -> Trajectory:
    """Smooth, seeded ground-truth trajectory of the requested kind."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([spec.seed, 1])))
    centroid = scene.centroid
    traj = Trajectory()
    dt = 1.0 / spec.frame_rate

    if spec.kind == "straight":
        start = _default_start(scene, spec)
        direction = np.asarray(spec.direction, dtype=float)
        direction = direction / np.linalg.norm(direction)
        step = spec.step if spec.step is not None else 0.002 * scene.scene_diameter
        rotation = look_at(start, centroid).rotation
        for i in range(spec.n_frames):
            center = start + i * step * direction
            traj.append(i * dt, PoseSE3(rotation, -rotation @ center))
    elif spec.kind == "orbit":
        radius = (
            spec.orbit_radius
            if spec.orbit_radius is not None
            else 0.75 * scene.scene_diameter
        )
        arc = np.deg2rad(spec.orbit_arc_deg)
        theta0 = -np.pi / 2 - arc / 2
        for i in range(spec.n_frames):
            theta = theta0 + arc * i / (spec.n_frames - 1)
            center = centroid + radius * np.array([np.cos(theta), 0.0, np.sin(theta)])
            traj.append(i * dt, look_at(center, centroid))
    else:  # random-walk
        center = _default_start(scene, spec)
        step = spec.step if spec.step is not None else 0.003 * scene.scene_diameter
        max_turn = 0.01  # radians per frame on top of the look-at motion
        for i in range(spec.n_frames):
            if i > 0:
                delta = rng.standard_normal(3)
                delta = delta / np.linalg.norm(delta) * step
                center = center + delta
            base = look_at(center, centroid)
            wobble = Rotation.from_rotvec(rng.uniform(-max_turn, max_turn, 3)).as_matrix()
            rotation = wobble @ base.rotation
            traj.append(i * dt, PoseSE3(rotation, -rotation @ center))
    return traj


# ---------------------------------------------------------------------------
# Observation generation with labeled depth-corrupted landmarks.

@dataclass
class SimFrame:
    """One simulated frame: timestamp plus labeled (track_id, u, v) tracks."""

    id: int
    timestamp: float
    observations: list  # (track_id, u, v)


@dataclass
class SimSequence:
    """A fully generated sequence with ground truth and corruption labels."""

    K: CameraIntrinsics
    spec: SequenceSpec
    scene: Scene
    trajectory: Trajectory
    frames: list
    landmarks: np.ndarray  # true, uncorrupted positions
    corruption: dict  # track_id -> injected depth factor

    def gt_pose(self, frame_id: int) -> PoseSE3:
        return self.trajectory.poses[frame_id]


def visible_landmarks(scene: Scene, pose: PoseSE3, K: CameraIntrinsics, points):
    """Visibility of world points: in front, in bounds, and unoccluded.

    A point survives occlusion when the ray-cast depth toward it is within
    1e-6 + 1e-4 * depth of the point's own depth.
    """
    points = np.atleast_2d(points)
    p_cam = pose.apply(points)
    z = p_cam[:, 2]
    ok = z > 1e-9
    u = np.zeros(len(points))
    v = np.zeros(len(points))
    u[ok] = p_cam[ok, 0] / z[ok] * K.fx + K.cx
    v[ok] = p_cam[ok, 1] / z[ok] * K.fy + K.cy
    ok &= (u >= 0) & (u < K.width) & (v >= 0) & (v < K.height)
    if ok.any():
        center = pose.camera_center
        dirs = points[ok] - center
        origins = np.broadcast_to(center, dirs.shape)
        t, _, _, _ = scene.raycast(origins, dirs)
        z_hit = t * z[ok]  # rays scaled so t=1 at the landmark
        tol = 1e-6 + 1e-4 * z[ok]
        visible = z_hit >= z[ok] - tol
        sub = np.zeros(len(points), dtype=bool)
        sub[np.nonzero(ok)[0][visible]] = True
        ok = sub
    return ok, u, v, z


def generate_observations(
    scene: Scene, trajectory: Trajectory, K: CameraIntrinsics, spec: SequenceSpec
) -> SimSequence:
    """Sample landmarks on the surfaces and observe them along the trajectory.

    An outlier_fraction of landmarks is labeled depth-corrupted together with
    the multiplicative factor the VO pipeline must apply when bootstrapping
    them; the true geometry is kept so filter precision/recall is computable.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([spec.seed, 2])))

    if scene.landmark_sampler is not None:
        landmarks = np.asarray(scene.landmark_sampler(rng, spec.landmark_count), float)
    else:
        weights = np.array([s.area for s in scene.surfaces])
        counts = rng.multinomial(spec.landmark_count, weights / weights.sum())
        landmark_chunks = [
            surf.sample(rng, int(n)) for surf, n in zip(scene.surfaces, counts) if n
        ]
        landmarks = np.concatenate(landmark_chunks, axis=0)
    order = rng.permutation(len(landmarks))
    landmarks = landmarks[order]

    n_corrupt = int(round(spec.outlier_fraction * len(landmarks)))
    corrupted_ids = rng.choice(len(landmarks), size=n_corrupt, replace=False)
    low, high = spec.outlier_factor_range
    corruption = {
        int(tid): float(f)
        for tid, f in zip(corrupted_ids, rng.uniform(low, high, n_corrupt))
    }

    frames = []
    any_visible = False
    for fid, (ts, pose) in enumerate(zip(trajectory.timestamps, trajectory.poses)):
        ok, u, v, _ = visible_landmarks(scene, pose, K, landmarks)
        noise = rng.standard_normal((len(landmarks), 2)) * spec.pixel_noise_sigma
        observations = []
        for tid in np.nonzero(ok)[0]:
            uu = u[tid] + noise[tid, 0]
            vv = v[tid] + noise[tid, 1]
            if 0 <= uu < K.width and 0 <= vv < K.height:
                observations.append((int(tid), float(uu), float(vv)))
        if observations:
            any_visible = True
        frames.append(SimFrame(fid, float(ts), observations))
    if not any_visible:
        raise NoVisibleLandmarks("no landmark is visible in any frame")
    return SimSequence(K, spec, scene, trajectory, frames, landmarks, corruption)


def generate_sequence(
    scene: Scene, K: CameraIntrinsics, spec: SequenceSpec
) -> SimSequence:
    return generate_observations(scene, generate_trajectory(spec, scene), K, spec)


# ---------------------------------------------------------------------------
# Scene presets.

def make_scene(preset: str = "box", texture_seed: int = 0) -> Scene:
    if preset == "box":
        surfaces = [
            AxisAlignedPlane(2, 20.0, (-16.0, -9.0), (16.0, 9.0)),  # back wall
            AxisAlignedPlane(1, 4.0, (-16.0, 0.0), (16.0, 20.0)),  # ground
            AxisAlignedPlane(0, -12.0, (-9.0, 0.0), (4.0, 20.0)),  # side wall
            Sphere((4.0, 0.0, 12.0), 2.0),
            Sphere((-4.0, -1.0, 8.0), 1.5),
        ]
    elif preset == "plane":
        surfaces = [AxisAlignedPlane(2, 5.0, (-40.0, -40.0), (40.0, 40.0))]
    elif preset == "heightfield":
        surfaces = [
            HeightFieldPatch(10.0, 0.5, 0.8, 0.6, (-12.0, 12.0), (-12.0, 12.0)),
        ]
    elif preset == "floor":
        return _floor_scene(texture_seed)
    else:
        raise ValueError(f"unknown scene preset: {preset}")
    return Scene(surfaces, texture_seed=texture_seed)


def _floor_landmarks(rng, n):
    """Log-uniform landmark depths on the floor, one decade from 40 to 400.

    The lateral band at each depth stays inside the view frustum of every
    camera position on the default straight path (about 30 units of travel
    along +x), with a few units of margin so projections never graze the
    image border or the plane's edge.
    """
    z = 40.0 * 10.0 ** rng.uniform(0.0, 1.0, n)
    lo = 36.0 - 0.58 * z
    hi = 0.69 * z - 6.0
    x = rng.uniform(lo, hi)
    return np.stack([x, np.full(n, 10.0), z], axis=1)


def _floor_scene(texture_seed: int) -> Scene:
    """A single grazing ground plane seen from a camera gliding above it.

    Depth varies smoothly over roughly one decade with no discontinuities or
    occlusion anywhere, so the near-far filter's rank statistics are clean:
    every predicted-depth sample lands on the observed surface, multiplicative
    prediction noise moves a point by a small fraction of the log-depth range,
    and a 1.5x depth corruption moves it much further at every depth.
    """
    floor = AxisAlignedPlane(1, 10.0, (-250.0, 25.0), (280.0, 500.0))
    return Scene([floor], texture_seed=texture_seed, landmark_sampler=_floor_landmarks)


# ---------------------------------------------------------------------------
# Sequence export/import: PFM depth + PGM intensity per frame plus a JSON
# manifest; the VO pipeline can run from the directory with no simulator.

def export_sequence(seq: SimSequence, out_dir, config: dict | None = None):
    os.makedirs(out_dir, exist_ok=True)
    traj_file = "groundtruth.txt"
    fileio.write_tum_trajectory(os.path.join(out_dir, traj_file), seq.trajectory)
    frames_meta = []
    for frame in seq.frames:
        pose = seq.gt_pose(frame.id)
        depth = render_depth(seq.scene, pose, seq.K)
        image = render_intensity(seq.scene, pose, seq.K)
        prefix = f"{frame.id:06d}"
        fileio.write_depth_with_mask(os.path.join(out_dir, prefix), depth)
        fileio.write_pgm_intensity(
            os.path.join(out_dir, prefix + ".pgm"), np.where(image < 0, 0.0, image)
        )
        frames_meta.append(
            {
                "id": frame.id,
                "timestamp": frame.timestamp,
                "depth": prefix + ".pfm",
                "intensity": prefix + ".pgm",
                "observations": [
                    [tid, u, v] for tid, u, v in frame.observations
                ],
            }
        )
    manifest = {
        "intrinsics": {
            "fx": seq.K.fx,
            "fy": seq.K.fy,
            "cx": seq.K.cx,
            "cy": seq.K.cy,
            "width": seq.K.width,
            "height": seq.K.height,
        },
        "trajectory_file": traj_file,
        "frames": frames_meta,
        "corruption": {str(k): v for k, v in sorted(seq.corruption.items())},
        "landmarks": [list(map(float, p)) for p in seq.landmarks],
        "scene_diameter": seq.scene.scene_diameter,
        "config": config,
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return manifest_path


@dataclass
class SequenceDirectory:
    """Read access to an exported sequence directory."""

    path: str
    K: CameraIntrinsics = field(init=False)
    frames: list = field(init=False)
    corruption: dict = field(init=False)
    trajectory: Trajectory = field(init=False)
    scene_diameter: float | None = field(init=False)
    config: dict | None = field(init=False)

    def __post_init__(self):
        with open(os.path.join(self.path, "manifest.json")) as f:
            manifest = json.load(f)
        intr = manifest["intrinsics"]
        self.K = CameraIntrinsics(**intr)
        self.scene_diameter = manifest.get("scene_diameter")
        self.config = manifest.get("config")
        self.frames = [
            SimFrame(
                m["id"],
                m["timestamp"],
                [(int(t), float(u), float(v)) for t, u, v in m["observations"]],
            )
            for m in manifest["frames"]
        ]
        self._depth_files = {m["id"]: m["depth"] for m in manifest["frames"]}
        self._image_files = {m["id"]: m["intensity"] for m in manifest["frames"]}
        self.corruption = {int(k): float(v) for k, v in manifest["corruption"].items()}
        self.trajectory = fileio.read_tum_trajectory(
            os.path.join(self.path, manifest["trajectory_file"])
        )

    def gt_depth(self, frame_id: int) -> DepthMap:
        prefix = os.path.join(self.path, self._depth_files[frame_id][: -len(".pfm")])
        return fileio.read_depth_with_mask(prefix)

    def intensity(self, frame_id: int) -> np.ndarray:
        return fileio.read_pgm(os.path.join(self.path, self._image_files[frame_id]))
