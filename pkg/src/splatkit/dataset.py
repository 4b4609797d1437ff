"""Dataset assembly: bundles of cameras, posed views and sparse points.

A dataset directory holds COLMAP sparse files (at the root, under
``sparse/`` or ``sparse/0/``), the images, and optionally a
``manifest.json`` written by the synthesizer or the ingest step that pins
the train/test split and records the preprocessing applied.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import PinholeCamera
from .colmap import PosedView, SparsePoint, parse_cameras, parse_points, parse_views
from .errors import (
    MalformedFile,
    MissingCamerasFile,
    MissingImagesFile,
    MissingPointsFile,
    TooFewViews,
)
from .image import load_png

DEFAULT_HOLDOUT_K = 8


@dataclass
class SfmBundle:
    """Parsed SfM output: cameras, posed views and sparse colored points."""

    cameras: dict[int, PinholeCamera]
    views: list[PosedView]
    points: list[SparsePoint]

    def __post_init__(self):
        for view in self.views:
            if view.camera_id not in self.cameras:
                raise MalformedFile(
                    f"view {view.name!r} references unknown camera "
                    f"{view.camera_id}")

    def view_camera(self, index: int) -> PinholeCamera:
        """Camera of view ``index`` with the view's pose applied."""
        view = self.views[index]
        return self.cameras[view.camera_id].with_pose(view.rotation,
                                                      view.translation)

    def point_positions(self) -> np.ndarray:
        return np.array([p.position for p in self.points], dtype=np.float64).reshape(-1, 3)

    def point_colors(self) -> np.ndarray:
        return np.array([p.color for p in self.points], dtype=np.float64).reshape(-1, 3)

    def scene_extent(self) -> float:
        """Radius of the bounding sphere of the sparse points around their centroid."""
        pos = self.point_positions()
        if len(pos) == 0:
            return 1.0
        centroid = pos.mean(axis=0)
        return float(np.max(np.linalg.norm(pos - centroid, axis=1)))


def split_train_test(views: list, holdout_k: int = DEFAULT_HOLDOUT_K) -> tuple[list[int], list[int]]:
    """Deterministic split holding out every k-th view (indices 0, k, 2k, ...).

    Returns (train_indices, test_indices); the sets are disjoint and cover
    every view.
    """
    n = len(views)
    if n < 2:
        raise TooFewViews(f"need at least 2 views, got {n}")
    if holdout_k < 1:
        raise TooFewViews(f"holdout interval must be >= 1, got {holdout_k}")
    test = [i for i in range(n) if i % holdout_k == 0]
    train = [i for i in range(n) if i % holdout_k != 0]
    if not train:
        raise TooFewViews("holdout policy leaves the training set empty")
    return train, test


def _find_sparse_dir(root: Path) -> Path:
    for sub in (root, root / "sparse", root / "sparse" / "0"):
        if (sub / "cameras.txt").exists() or (sub / "cameras.bin").exists():
            return sub
    raise MissingCamerasFile(f"no cameras.txt or cameras.bin under {root}")


def _sparse_file(sparse_dir: Path, stem: str, missing_exc) -> Path:
    for suffix in (".bin", ".txt"):
        candidate = sparse_dir / (stem + suffix)
        if candidate.exists():
            return candidate
    raise missing_exc(f"no {stem}.txt or {stem}.bin under {sparse_dir}")


@dataclass
class Dataset:
    """An SfmBundle plus its train/test assignment and background color."""

    bundle: SfmBundle
    train_indices: list[int]
    test_indices: list[int]
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def train_views(self) -> list[PosedView]:
        return [self.bundle.views[i] for i in self.train_indices]

    def test_views(self) -> list[PosedView]:
        return [self.bundle.views[i] for i in self.test_indices]


def load_dataset(root: str | Path, holdout_k: int | None = None,
                 load_images: bool = True) -> Dataset:
    """Load a dataset directory into memory.

    A ``manifest.json`` (if present) dictates image directory, split and
    background; otherwise the COLMAP files are discovered and the every-k-th
    holdout policy is applied in view order.
    """
    root = Path(root)
    if not root.exists():
        raise MissingCamerasFile(f"dataset directory {root} does not exist")
    manifest = None
    manifest_path = root / "manifest.json"
    if manifest_path.exists():
        try:
            manifest = json.loads(manifest_path.read_text())
        except json.JSONDecodeError as exc:
            raise MalformedFile(f"unreadable manifest: {exc}") from exc

    sparse_dir = _find_sparse_dir(root)
    cameras = parse_cameras(_sparse_file(sparse_dir, "cameras", MissingCamerasFile))
    views = parse_views(_sparse_file(sparse_dir, "images", MissingImagesFile))
    points = parse_points(_sparse_file(sparse_dir, "points3D", MissingPointsFile))

    images_dir = root / (manifest.get("images_dir", "images") if manifest else "images")
    if load_images:
        for view in views:
            img_path = images_dir / view.name
            if not img_path.exists():
                raise MissingImagesFile(f"image {img_path} not found")
            view.image = load_png(img_path)
            cam = cameras[view.camera_id]
            h, w = view.image.shape[:2]
            if (w, h) != (cam.width, cam.height):
                raise MalformedFile(
                    f"image {view.name} is {w}x{h} but camera {cam.camera_id} "
                    f"expects {cam.width}x{cam.height}")

    bundle = SfmBundle(cameras=cameras, views=views, points=points)

    background = np.zeros(3)
    if manifest and "views" in manifest:
        by_name = {v.name: i for i, v in enumerate(views)}
        train_idx, test_idx = [], []
        for entry in manifest["views"]:
            if entry["name"] not in by_name:
                raise MalformedFile(f"manifest view {entry['name']!r} missing "
                                    f"from images file")
            (train_idx if entry["split"] == "train" else test_idx).append(
                by_name[entry["name"]])
        if manifest.get("background") is not None:
            background = np.asarray(manifest["background"], dtype=np.float64)
    else:
        k = holdout_k if holdout_k is not None else (
            manifest.get("holdout_k", DEFAULT_HOLDOUT_K) if manifest
            else DEFAULT_HOLDOUT_K)
        train_idx, test_idx = split_train_test(views, k)

    if holdout_k is not None and manifest and "views" in manifest:
        # explicit CLI override wins over the recorded split
        train_idx, test_idx = split_train_test(views, holdout_k)

    return Dataset(bundle=bundle, train_indices=train_idx,
                   test_indices=test_idx, background=background)


def write_manifest(path: str | Path, views: list[PosedView],
                   train_indices: list[int], test_indices: list[int],
                   images_dir: str = "images", sparse_dir: str = "sparse",
                   sparse_format: str = "text",
                   background: tuple[float, float, float] = (0.0, 0.0, 0.0),
                   preprocessing: dict | None = None,
                   extra: dict | None = None) -> None:
    split = {}
    for i in train_indices:
        split[views[i].name] = "train"
    for i in test_indices:
        split[views[i].name] = "test"
    doc = {
        "version": 1,
        "images_dir": images_dir,
        "sparse_dir": sparse_dir,
        "sparse_format": sparse_format,
        "background": list(background),
        "views": [{"name": v.name, "split": split[v.name]} for v in views],
        "preprocessing": preprocessing,
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
