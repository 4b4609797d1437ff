"""Synthetic oracle scenes: analytic primitives ray-traced to ground truth.

Builds camera rings around a satellite-like mock-up (body box, two solar
panels, an antenna sphere), renders Lambertian ground-truth images, and
fabricates a sparse surface point cloud so the whole training pipeline runs
hermetically without any external SfM tool.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import PinholeCamera, look_at
from .colmap import (
    PosedView,
    SparsePoint,
    write_cameras,
    write_points,
    write_views,
)
from .dataset import Dataset, SfmBundle, split_train_test, write_manifest
from .image import save_png

RAY_EPS = 1e-9


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float
    albedo: np.ndarray

    def area(self) -> float:
        return 4.0 * math.pi * self.radius ** 2


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray
    albedo: np.ndarray

    def area(self) -> float:
        d = self.hi - self.lo
        return float(2.0 * (d[0] * d[1] + d[1] * d[2] + d[0] * d[2]))


@dataclass
class PrimitiveScene:
    """Spheres and axis-aligned boxes under one directional light."""

    spheres: list[Sphere]
    boxes: list[Box]
    light_dir: np.ndarray           # unit vector pointing toward the light
    light_intensity: float = 0.75
    ambient: float = 0.25
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.light_dir = np.asarray(self.light_dir, dtype=np.float64)
        self.light_dir = self.light_dir / np.linalg.norm(self.light_dir)
        for s in self.spheres:
            if s.radius <= 0:
                raise ValueError("sphere radius must be positive")
        for b in self.boxes:
            if not np.all(b.lo < b.hi):
                raise ValueError("box min must be below max componentwise")

    def primitives(self) -> list:
        return list(self.spheres) + list(self.boxes)


def mockup_scene() -> PrimitiveScene:
    """Satellite-like default: body box, two lateral panels, antenna sphere."""
    body = Box(lo=np.array([-0.2, -0.2, -0.3]), hi=np.array([0.2, 0.2, 0.3]),
               albedo=np.array([0.55, 0.55, 0.62]))
    panel_r = Box(lo=np.array([0.2, -0.01, -0.15]),
                  hi=np.array([0.8, 0.01, 0.15]),
                  albedo=np.array([0.16, 0.22, 0.58]))
    panel_l = Box(lo=np.array([-0.8, -0.01, -0.15]),
                  hi=np.array([-0.2, 0.01, 0.15]),
                  albedo=np.array([0.16, 0.22, 0.58]))
    antenna = Sphere(center=np.array([0.0, 0.0, 0.38]), radius=0.12,
                     albedo=np.array([0.82, 0.79, 0.74]))
    return PrimitiveScene(spheres=[antenna], boxes=[body, panel_r, panel_l],
                          light_dir=np.array([0.35, -0.45, 0.82]))


def wall_scene(color=(0.7, 0.3, 0.2)) -> PrimitiveScene:
    """A single flat-colored wall; the simplest trainable scene."""
    wall = Box(lo=np.array([-0.6, -0.02, -0.45]),
               hi=np.array([0.6, 0.02, 0.45]),
               albedo=np.asarray(color, dtype=np.float64))
    return PrimitiveScene(spheres=[], boxes=[wall],
                          light_dir=np.array([0.0, -1.0, 0.35]))


def ring_pose(i: int, n: int, radius: float, height: float,
              target: np.ndarray = (0.0, 0.0, 0.0)
              ) -> tuple[np.ndarray, np.ndarray]:
    """Pose of the i-th of n equally spaced ring cameras (i wraps mod n)."""
    target = np.asarray(target, dtype=np.float64)
    angle = 2.0 * math.pi * (i % n) / n
    center = np.array([radius * math.cos(angle),
                       radius * math.sin(angle), height]) + target
    return look_at(center, target, np.array([0.0, 0.0, 1.0]))


def ring_cameras(n: int, radius: float, height: float,
                 target: np.ndarray = (0.0, 0.0, 0.0),
                 width: int = 640, height_px: int = 480,
                 fov_y_deg: float = 50.0) -> list[PinholeCamera]:
    """Cameras equally spaced on a horizontal circle, all aimed at target."""
    if n < 2:
        raise ValueError("a camera ring needs at least 2 views")
    fy = 0.5 * height_px / math.tan(math.radians(fov_y_deg) / 2.0)
    cams = []
    for i in range(n):
        q, t = ring_pose(i, n, radius, height, target)
        cams.append(PinholeCamera(
            camera_id=i + 1, width=width, height=height_px,
            fx=fy, fy=fy, cx=width / 2.0, cy=height_px / 2.0,
            rotation=q, translation=t))
    return cams


def _intersect_sphere(origin: np.ndarray, dirs: np.ndarray,
                      sphere: Sphere) -> tuple[np.ndarray, np.ndarray]:
    """Nearest positive hit distance per ray (inf on miss) and normals."""
    oc = origin - sphere.center
    b = 2.0 * dirs @ oc
    c = float(oc @ oc) - sphere.radius ** 2
    disc = b * b - 4.0 * c
    hit = disc > 0.0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t0 = (-b - sq) / 2.0
    t1 = (-b + sq) / 2.0
    t = np.where(t0 > RAY_EPS, t0, t1)
    t = np.where(hit & (t > RAY_EPS), t, np.inf)
    points = origin + dirs * t[:, None]
    normals = (points - sphere.center) / sphere.radius
    return t, normals


def _intersect_box(origin: np.ndarray, dirs: np.ndarray,
                   box: Box) -> tuple[np.ndarray, np.ndarray]:
    """Slab test: nearest positive hit per ray (inf on miss) and normals."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t_lo = (box.lo - origin) * inv
        t_hi = (box.hi - origin) * inv
    t_near = np.minimum(t_lo, t_hi)
    t_far = np.maximum(t_lo, t_hi)
    # rays parallel to a slab: inside gives (-inf, inf), outside misses
    parallel = dirs == 0.0
    inside = (origin >= box.lo) & (origin <= box.hi)
    t_near = np.where(parallel, np.where(inside, -np.inf, np.inf), t_near)
    t_far = np.where(parallel, np.where(inside, np.inf, -np.inf), t_far)
    enter_axis = np.argmax(t_near, axis=1)
    t_enter = np.take_along_axis(t_near, enter_axis[:, None], axis=1)[:, 0]
    t_exit = t_far.min(axis=1)
    hit = (t_exit >= np.maximum(t_enter, RAY_EPS)) & (t_enter > RAY_EPS)
    t = np.where(hit, t_enter, np.inf)
    normals = np.zeros_like(dirs)
    rows = np.arange(len(dirs))
    normals[rows, enter_axis] = -np.sign(
        np.take_along_axis(dirs, enter_axis[:, None], axis=1)[:, 0])
    return t, normals


def _trace(scene: PrimitiveScene, origin: np.ndarray,
           dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nearest-hit distances, normals and albedos over all primitives."""
    n = len(dirs)
    best_t = np.full(n, np.inf)
    best_n = np.zeros((n, 3))
    best_albedo = np.zeros((n, 3))
    for prim in scene.primitives():
        if isinstance(prim, Sphere):
            t, normals = _intersect_sphere(origin, dirs, prim)
        else:
            t, normals = _intersect_box(origin, dirs, prim)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_n[closer] = normals[closer]
        best_albedo[closer] = prim.albedo
    return best_t, best_n, best_albedo


def raytrace(scene: PrimitiveScene, cam: PinholeCamera) -> np.ndarray:
    """Render one view: nearest hit, Lambertian shading, no shadows."""
    xs = np.arange(cam.width, dtype=np.float64)
    ys = np.arange(cam.height, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    dirs_cam = np.stack([(gx - cam.cx) / cam.fx,
                         (gy - cam.cy) / cam.fy,
                         np.ones_like(gx)], axis=-1).reshape(-1, 3)
    rot = cam.rotation_matrix()
    dirs = dirs_cam @ rot  # R^T per row
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    origin = cam.center()

    t, normals, albedo = _trace(scene, origin, dirs)
    hit = np.isfinite(t)
    lambert = np.maximum(normals @ scene.light_dir, 0.0)
    shade = scene.ambient + scene.light_intensity * lambert
    colors = np.where(hit[:, None], albedo * shade[:, None],
                      scene.background)
    return np.clip(colors.reshape(cam.height, cam.width, 3), 0.0, 1.0)


def _sample_surface(scene: PrimitiveScene, n_points: int,
                    rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Area-stratified surface samples with per-primitive albedo colors."""
    prims = scene.primitives()
    areas = np.array([p.area() for p in prims])
    counts = np.floor(areas / areas.sum() * n_points).astype(int)
    # hand leftovers to the largest primitives, deterministically
    for i in np.argsort(-areas)[:n_points - counts.sum()]:
        counts[i] += 1
    points = []
    colors = []
    for prim, count in zip(prims, counts):
        if count == 0:
            continue
        if isinstance(prim, Sphere):
            v = rng.normal(size=(count, 3))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            pts = prim.center + prim.radius * v
        else:
            d = prim.hi - prim.lo
            face_areas = np.array([d[1] * d[2], d[1] * d[2],
                                   d[0] * d[2], d[0] * d[2],
                                   d[0] * d[1], d[0] * d[1]])
            faces = rng.choice(6, size=count, p=face_areas / face_areas.sum())
            uv = rng.uniform(size=(count, 2))
            pts = np.empty((count, 3))
            for f in range(6):
                sel = faces == f
                axis = f // 2
                side = f % 2
                others = [a for a in range(3) if a != axis]
                pts[sel, axis] = prim.hi[axis] if side else prim.lo[axis]
                pts[sel, others[0]] = prim.lo[others[0]] + uv[sel, 0] * d[others[0]]
                pts[sel, others[1]] = prim.lo[others[1]] + uv[sel, 1] * d[others[1]]
        points.append(pts)
        colors.append(np.tile(prim.albedo, (count, 1)))
    return np.concatenate(points), np.concatenate(colors)


def _visibility_counts(scene: PrimitiveScene, points: np.ndarray,
                       cams: list[PinholeCamera]) -> np.ndarray:
    """Number of cameras that see each point unoccluded and in frame."""
    counts = np.zeros(len(points), dtype=np.int64)
    for cam in cams:
        origin = cam.center()
        offs = points - origin
        dist = np.linalg.norm(offs, axis=1)
        dirs = offs / dist[:, None]
        t, _, _ = _trace(scene, origin, dirs)
        unoccluded = t >= dist - 1e-6
        cam_pts = points @ cam.rotation_matrix().T + cam.translation
        z = cam_pts[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = cam.fx * cam_pts[:, 0] / z + cam.cx
            v = cam.fy * cam_pts[:, 1] / z + cam.cy
        in_frame = (z > 0) & (u >= 0) & (u <= cam.width - 1) & \
                   (v >= 0) & (v <= cam.height - 1)
        counts += (unoccluded & in_frame).astype(np.int64)
    return counts


@dataclass(frozen=True)
class SynthConfig:
    n_views: int = 36
    width: int = 640
    height: int = 480
    radius: float = 2.5       # ring radius in world units
    camera_height: float = 0.75
    fov_y_deg: float = 50.0
    n_points: int = 2000
    noise_fraction: float = 0.01   # point jitter sigma as fraction of extent
    holdout_k: int = 8
    seed: int = 0


def make_dataset(scene: PrimitiveScene, config: SynthConfig = SynthConfig()
                 ) -> Dataset:
    """Ray-trace a camera ring and fabricate the sparse point cloud.

    Points are surface samples (stratified over primitives by area, colored
    by albedo, quantized to byte color resolution for lossless COLMAP
    round-trips), kept only when at least two cameras see them, then
    jittered to emulate SfM error.
    """
    rng = np.random.default_rng(config.seed)
    cams = ring_cameras(config.n_views, config.radius, config.camera_height,
                        width=config.width, height_px=config.height,
                        fov_y_deg=config.fov_y_deg)
    views = []
    for i, cam in enumerate(cams):
        img = raytrace(scene, cam)
        views.append(PosedView(name=f"view_{i:03d}.png",
                               camera_id=cam.camera_id,
                               rotation=cam.rotation,
                               translation=cam.translation,
                               image=img))

    points, colors = _sample_surface(scene, config.n_points, rng)
    track = _visibility_counts(scene, points, cams)
    keep = track >= 2
    points, colors, track = points[keep], colors[keep], track[keep]
    extent = float(np.max(np.linalg.norm(points - points.mean(axis=0),
                                         axis=1)))
    if config.noise_fraction > 0:
        points = points + rng.normal(
            0.0, config.noise_fraction * extent, points.shape)
    colors = np.round(colors * 255.0) / 255.0

    sparse = [SparsePoint(position=p, color=c, track_length=int(t))
              for p, c, t in zip(points, colors, track)]
    bundle = SfmBundle(cameras={c.camera_id: c for c in cams},
                       views=views, points=sparse)
    train_idx, test_idx = split_train_test(views, config.holdout_k)
    return Dataset(bundle=bundle, train_indices=train_idx,
                   test_indices=test_idx,
                   background=scene.background.copy())


def write_dataset(dataset: Dataset, out_dir: str | Path,
                  sparse_format: str = "text",
                  extra_manifest: dict | None = None) -> None:
    """Write PNG ground truth, COLMAP-format sparse files and the manifest."""
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    sparse_dir = out_dir / "sparse"
    images_dir.mkdir(parents=True, exist_ok=True)
    sparse_dir.mkdir(parents=True, exist_ok=True)
    suffix = ".txt" if sparse_format == "text" else ".bin"
    bundle = dataset.bundle
    write_cameras(sparse_dir / f"cameras{suffix}", bundle.cameras,
                  sparse_format)
    write_views(sparse_dir / f"images{suffix}", bundle.views, sparse_format)
    write_points(sparse_dir / f"points3D{suffix}", bundle.points,
                 sparse_format)
    for view in bundle.views:
        if view.image is not None:
            save_png(images_dir / view.name, view.image)
    write_manifest(out_dir / "manifest.json", bundle.views,
                   dataset.train_indices, dataset.test_indices,
                   sparse_format=sparse_format,
                   background=tuple(dataset.background),
                   extra=extra_manifest)
