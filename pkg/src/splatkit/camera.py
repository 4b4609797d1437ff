"""Pinhole camera model and quaternion helpers.

Conventions used throughout the toolkit:

* quaternions are scalar-first ``(w, x, y, z)`` and encode the
  world-to-camera rotation,
* camera frame is x-right, y-down, z-forward,
* a world point ``p`` maps to the camera frame as ``R @ p + t``; the
  camera center in world coordinates is ``c = -R.T @ t``,
* pixel sample positions are the integer pixel coordinates ``(x, y)``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import NonUnitQuaternion


def quat_normalize(q: np.ndarray, tol: float = 1e-3) -> np.ndarray:
    """Return a unit quaternion, raising if the input norm is off by more than ``tol``.

    Inputs already unit to within 1e-9 are returned unchanged so that
    parse/serialize round-trips are bit-exact.
    """
    q = np.asarray(q, dtype=np.float64)
    norm = float(np.linalg.norm(q))
    if abs(norm - 1.0) <= 1e-9:
        return q
    if abs(norm - 1.0) > tol or norm == 0.0:
        raise NonUnitQuaternion(f"quaternion norm {norm:.6g} outside tolerance {tol}")
    return q / norm


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Rotation matrix for a unit scalar-first quaternion. Supports batching."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = np.moveaxis(q, -1, 0)
    rot = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    rot[..., 0, 0] = 1 - 2 * (y * y + z * z)
    rot[..., 0, 1] = 2 * (x * y - w * z)
    rot[..., 0, 2] = 2 * (x * z + w * y)
    rot[..., 1, 0] = 2 * (x * y + w * z)
    rot[..., 1, 1] = 1 - 2 * (x * x + z * z)
    rot[..., 1, 2] = 2 * (y * z - w * x)
    rot[..., 2, 0] = 2 * (x * z - w * y)
    rot[..., 2, 1] = 2 * (y * z + w * x)
    rot[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return rot


def rotmat_to_quat(rot: np.ndarray) -> np.ndarray:
    """Unit scalar-first quaternion for a rotation matrix (w >= 0 branch)."""
    rot = np.asarray(rot, dtype=np.float64)
    m00, m01, m02 = rot[0]
    m10, m11, m12 = rot[1]
    m20, m21, m22 = rot[2]
    k = np.array([
        [m00 - m11 - m22, 0.0, 0.0, 0.0],
        [m01 + m10, m11 - m00 - m22, 0.0, 0.0],
        [m02 + m20, m12 + m21, m22 - m00 - m11, 0.0],
        [m21 - m12, m02 - m20, m10 - m01, m00 + m11 + m22],
    ]) / 3.0
    vals, vecs = np.linalg.eigh(k)
    q = vecs[[3, 0, 1, 2], np.argmax(vals)]
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


@dataclass(frozen=True)
class PinholeCamera:
    """Intrinsics plus the world-to-camera pose of one view."""

    camera_id: int
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray  # (4,) unit quaternion, scalar-first, world->camera
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("camera dimensions must be positive")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise ValueError("principal point outside image")
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64))
        if abs(np.linalg.norm(self.rotation) - 1.0) > 1e-9:
            raise NonUnitQuaternion("camera quaternion must be unit to 1e-9")

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_rotmat(self.rotation)

    def center(self) -> np.ndarray:
        """Camera center in world coordinates, c = -R.T @ t."""
        return -self.rotation_matrix().T @ self.translation

    def with_pose(self, rotation: np.ndarray, translation: np.ndarray) -> "PinholeCamera":
        return replace(self, rotation=np.asarray(rotation, dtype=np.float64),
                       translation=np.asarray(translation, dtype=np.float64))

    def scaled(self, width: int, height: int) -> "PinholeCamera":
        """Intrinsics rescaled to a new image size."""
        sx = width / self.width
        sy = height / self.height
        return replace(self, width=width, height=height,
                       fx=self.fx * sx, fy=self.fy * sy,
                       cx=self.cx * sx, cy=self.cy * sy)


IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def look_at(center: np.ndarray, target: np.ndarray, up: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """World-to-camera pose (quaternion, translation) for a camera at ``center``
    looking at ``target`` with the image up direction aligned to ``up``."""
    center = np.asarray(center, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - center
    norm = np.linalg.norm(forward)
    if norm == 0:
        raise ValueError("camera center coincides with target")
    z_cam = forward / norm
    up = np.asarray(up, dtype=np.float64)
    y_cam = -(up - np.dot(up, z_cam) * z_cam)
    y_norm = np.linalg.norm(y_cam)
    if y_norm < 1e-12:
        raise ValueError("up direction parallel to viewing direction")
    y_cam = y_cam / y_norm
    x_cam = np.cross(y_cam, z_cam)
    rot = np.stack([x_cam, y_cam, z_cam])
    t = -rot @ center
    return rotmat_to_quat(rot), t
