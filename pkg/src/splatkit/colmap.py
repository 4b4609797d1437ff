"""Readers and writers for COLMAP sparse-reconstruction files.

Supports the on-disk layout of ``cameras``, ``images`` and ``points3D`` in
both the text and the binary encodings:

* ``cameras.txt``  — ``CAMERA_ID MODEL WIDTH HEIGHT PARAMS[]``
* ``images.txt``   — two lines per view: ``IMAGE_ID QW QX QY QZ TX TY TZ
  CAMERA_ID NAME`` followed by the 2D feature row (skipped on read)
* ``points3D.txt`` — ``POINT3D_ID X Y Z R G B ERROR (IMAGE_ID POINT2D_IDX)*``

Binary files use little-endian fixed-width fields: a ``uint64`` entry count
followed by the records described in each reader. Only the pinhole camera
models are accepted: ``SIMPLE_PINHOLE`` (model id 0, params ``f cx cy``) and
``PINHOLE`` (model id 1, params ``fx fy cx cy``).

Text floats are written with ``repr`` (shortest round-trip form) so that
parse -> write -> parse reproduces bit-identical values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .camera import IDENTITY_QUAT, PinholeCamera, quat_normalize
from .errors import (
    DuplicateCameraId,
    MalformedFile,
    UnsupportedCameraModel,
)

MODEL_IDS = {"SIMPLE_PINHOLE": 0, "PINHOLE": 1}
MODEL_NAMES = {v: k for k, v in MODEL_IDS.items()}
MODEL_NUM_PARAMS = {"SIMPLE_PINHOLE": 3, "PINHOLE": 4}

# model ids per the published COLMAP table; anything not pinhole is rejected
KNOWN_MODEL_IDS = {
    0: "SIMPLE_PINHOLE", 1: "PINHOLE", 2: "SIMPLE_RADIAL", 3: "RADIAL",
    4: "OPENCV", 5: "OPENCV_FISHEYE", 6: "FULL_OPENCV", 7: "FOV",
    8: "SIMPLE_RADIAL_FISHEYE", 9: "RADIAL_FISHEYE", 10: "THIN_PRISM_FISHEYE",
}


@dataclass
class PosedView:
    """One registered image: name, camera reference and world-to-camera pose."""
    name: str
    camera_id: int
    rotation: np.ndarray  # (4,) unit quaternion, scalar-first
    translation: np.ndarray  # (3,)
    image: np.ndarray | None = None  # optional ground-truth RGB


@dataclass
class SparsePoint:
    position: np.ndarray  # (3,)
    color: np.ndarray  # (3,) RGB in [0, 1]
    track_length: int


def _detect_format(path: str | Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("text", "binary"):
            raise ValueError(f"unknown format {fmt!r}")
        return fmt
    suffix = Path(path).suffix.lower()
    if suffix == ".txt":
        return "text"
    if suffix == ".bin":
        return "binary"
    raise ValueError(f"cannot infer COLMAP format from {path}")


def _read_bytes(fid: BinaryIO, num_bytes: int, fmt: str):
    data = fid.read(num_bytes)
    if len(data) != num_bytes:
        raise MalformedFile("unexpected end of binary file")
    return struct.unpack("<" + fmt, data)


def _text_rows(path: str | Path):
    with open(path, "r") as f:
        for line in f:
            line = line.strip()
            if line and not line.startswith("#"):
                yield line


# ---------------------------------------------------------------- cameras


def parse_cameras(path: str | Path, fmt: str | None = None) -> dict[int, PinholeCamera]:
    """Parse a COLMAP cameras file into ``camera_id -> PinholeCamera``.

    Poses are set to identity; the per-view pose comes from the images file.
    """
    fmt = _detect_format(path, fmt)
    entries: list[tuple[int, str, int, int, list[float]]] = []
    if fmt == "text":
        for line in _text_rows(path):
            toks = line.split()
            if len(toks) < 4:
                raise MalformedFile(f"short camera row: {line!r}")
            try:
                cam_id = int(toks[0])
                model = toks[1]
                width, height = int(toks[2]), int(toks[3])
                params = [float(t) for t in toks[4:]]
            except ValueError as exc:
                raise MalformedFile(f"garbled camera row: {line!r}") from exc
            entries.append((cam_id, model, width, height, params))
    else:
        with open(path, "rb") as fid:
            (num,) = _read_bytes(fid, 8, "Q")
            for _ in range(num):
                cam_id, model_id, width, height = _read_bytes(fid, 24, "iiQQ")
                model = KNOWN_MODEL_IDS.get(model_id)
                if model is None:
                    raise MalformedFile(f"unknown camera model id {model_id}")
                if model not in MODEL_NUM_PARAMS:
                    raise UnsupportedCameraModel(
                        f"camera model {model} is not a pinhole model")
                n = MODEL_NUM_PARAMS[model]
                params = list(_read_bytes(fid, 8 * n, "d" * n))
                entries.append((cam_id, model, int(width), int(height), params))

    cameras: dict[int, PinholeCamera] = {}
    for cam_id, model, width, height, params in entries:
        if model not in MODEL_NUM_PARAMS:
            raise UnsupportedCameraModel(f"camera model {model} is not supported")
        if len(params) != MODEL_NUM_PARAMS[model]:
            raise MalformedFile(
                f"camera {cam_id}: expected {MODEL_NUM_PARAMS[model]} params, "
                f"got {len(params)}")
        if cam_id in cameras:
            raise DuplicateCameraId(f"camera id {cam_id} appears twice")
        if model == "SIMPLE_PINHOLE":
            f, cx, cy = params
            fx = fy = f
        else:
            fx, fy, cx, cy = params
        try:
            cameras[cam_id] = PinholeCamera(
                camera_id=cam_id, width=width, height=height,
                fx=fx, fy=fy, cx=cx, cy=cy,
                rotation=IDENTITY_QUAT.copy(), translation=np.zeros(3))
        except ValueError as exc:
            raise MalformedFile(f"camera {cam_id}: {exc}") from exc
    return cameras


def write_cameras(path: str | Path, cameras: dict[int, PinholeCamera],
                  fmt: str | None = None) -> None:
    fmt = _detect_format(path, fmt)
    items = list(cameras.items())
    if fmt == "text":
        lines = ["# Camera list with one line of data per camera:",
                 "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]"]
        for cam_id, cam in items:
            params = [cam.fx, cam.fy, cam.cx, cam.cy]
            lines.append(" ".join(
                [str(cam_id), "PINHOLE", str(cam.width), str(cam.height)]
                + [repr(p) for p in params]))
        Path(path).write_text("\n".join(lines) + "\n")
    else:
        with open(path, "wb") as fid:
            fid.write(struct.pack("<Q", len(items)))
            for cam_id, cam in items:
                fid.write(struct.pack("<iiQQ", cam_id, MODEL_IDS["PINHOLE"],
                                      cam.width, cam.height))
                fid.write(struct.pack("<dddd", cam.fx, cam.fy, cam.cx, cam.cy))


# ---------------------------------------------------------------- images


def parse_views(path: str | Path, fmt: str | None = None) -> list[PosedView]:
    """Parse a COLMAP images file into posed views (2D feature rows skipped).

    Quaternions off unit norm by at most 1e-3 are normalized; larger
    deviations raise ``NonUnitQuaternion``.
    """
    fmt = _detect_format(path, fmt)
    views: list[PosedView] = []
    if fmt == "text":
        rows = list(_text_rows(path))
        # blank 2D-feature rows are dropped by _text_rows, so pose rows are
        # recognized by shape rather than by strict line pairing
        i = 0
        while i < len(rows):
            toks = rows[i].split()
            if len(toks) < 10:
                raise MalformedFile(f"short image row: {rows[i]!r}")
            try:
                q = np.array([float(t) for t in toks[1:5]])
                t = np.array([float(x) for x in toks[5:8]])
                cam_id = int(toks[8])
                name = " ".join(toks[9:])
            except ValueError as exc:
                raise MalformedFile(f"garbled image row: {rows[i]!r}") from exc
            views.append(PosedView(name=name, camera_id=cam_id,
                                   rotation=quat_normalize(q), translation=t))
            i += 1
            # feature row, if present, is the next non-empty row made of
            # X Y POINT3D_ID triplets; skip it
            if i < len(rows):
                nxt = rows[i].split()
                if len(nxt) % 3 == 0 and _all_numeric(nxt):
                    i += 1
    else:
        with open(path, "rb") as fid:
            (num,) = _read_bytes(fid, 8, "Q")
            for _ in range(num):
                props = _read_bytes(fid, 64, "idddddddi")
                q = np.array(props[1:5])
                t = np.array(props[5:8])
                cam_id = props[8]
                name_bytes = bytearray()
                while True:
                    (ch,) = _read_bytes(fid, 1, "c")
                    if ch == b"\x00":
                        break
                    name_bytes.extend(ch)
                (num_pts,) = _read_bytes(fid, 8, "Q")
                fid.seek(24 * num_pts, 1)  # skip 2D feature records
                views.append(PosedView(name=name_bytes.decode("utf-8"),
                                       camera_id=cam_id,
                                       rotation=quat_normalize(q),
                                       translation=t))
    return views


def _all_numeric(tokens: list[str]) -> bool:
    try:
        for t in tokens:
            float(t)
    except ValueError:
        return False
    return True


def write_views(path: str | Path, views: list[PosedView],
                fmt: str | None = None) -> None:
    """Write posed views; image ids are assigned sequentially from 1 and the
    2D feature rows are left empty."""
    fmt = _detect_format(path, fmt)
    if fmt == "text":
        lines = ["# Image list with two lines of data per image:",
                 "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME",
                 "#   POINTS2D[] as (X, Y, POINT3D_ID)"]
        for i, view in enumerate(views, start=1):
            q = view.rotation
            t = view.translation
            lines.append(" ".join(
                [str(i)] + [repr(float(v)) for v in q] + [repr(float(v)) for v in t]
                + [str(view.camera_id), view.name]))
            lines.append("")
        Path(path).write_text("\n".join(lines) + "\n")
    else:
        with open(path, "wb") as fid:
            fid.write(struct.pack("<Q", len(views)))
            for i, view in enumerate(views, start=1):
                q = view.rotation
                t = view.translation
                fid.write(struct.pack("<idddddddi", i, *q, *t, view.camera_id))
                fid.write(view.name.encode("utf-8") + b"\x00")
                fid.write(struct.pack("<Q", 0))


# ---------------------------------------------------------------- points3D


def parse_points(path: str | Path, fmt: str | None = None) -> list[SparsePoint]:
    """Parse a COLMAP points3D file. Colors are rescaled from bytes to [0, 1];
    per-point tracks are consumed but only their length is retained."""
    fmt = _detect_format(path, fmt)
    points: list[SparsePoint] = []
    if fmt == "text":
        for line in _text_rows(path):
            toks = line.split()
            if len(toks) < 8:
                raise MalformedFile(f"short point row: {line!r}")
            try:
                pos = np.array([float(t) for t in toks[1:4]])
                rgb = np.array([int(t) for t in toks[4:7]], dtype=np.float64)
                track = toks[8:]
            except ValueError as exc:
                raise MalformedFile(f"garbled point row: {line!r}") from exc
            if len(track) % 2 != 0:
                raise MalformedFile(f"odd track length in row: {line!r}")
            points.append(SparsePoint(position=pos, color=rgb / 255.0,
                                      track_length=len(track) // 2))
    else:
        with open(path, "rb") as fid:
            (num,) = _read_bytes(fid, 8, "Q")
            for _ in range(num):
                props = _read_bytes(fid, 43, "QdddBBBd")
                pos = np.array(props[1:4])
                rgb = np.array(props[4:7], dtype=np.float64)
                (track_len,) = _read_bytes(fid, 8, "Q")
                fid.seek(8 * track_len, 1)
                points.append(SparsePoint(position=pos, color=rgb / 255.0,
                                          track_length=int(track_len)))
    return points


def write_points(path: str | Path, points: list[SparsePoint],
                 fmt: str | None = None) -> None:
    """Write sparse points. Colors are quantized back to bytes; tracks are
    emitted as placeholder (0, 0) pairs since only their length is kept."""
    fmt = _detect_format(path, fmt)
    if fmt == "text":
        lines = ["# 3D point list with one line of data per point:",
                 "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, "
                 "TRACK[] as (IMAGE_ID, POINT2D_IDX)"]
        for i, pt in enumerate(points, start=1):
            rgb = np.clip(np.rint(pt.color * 255.0), 0, 255).astype(int)
            row = [str(i)] + [repr(float(v)) for v in pt.position]
            row += [str(v) for v in rgb] + ["0.0"]
            row += ["0", "0"] * pt.track_length
            lines.append(" ".join(row))
        Path(path).write_text("\n".join(lines) + "\n")
    else:
        with open(path, "wb") as fid:
            fid.write(struct.pack("<Q", len(points)))
            for i, pt in enumerate(points, start=1):
                rgb = np.clip(np.rint(pt.color * 255.0), 0, 255).astype(int)
                fid.write(struct.pack("<QdddBBBd", i, *pt.position, *rgb, 0.0))
                fid.write(struct.pack("<Q", pt.track_length))
                fid.write(struct.pack("<ii", 0, 0) * pt.track_length)
