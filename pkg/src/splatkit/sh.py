"""Real spherical harmonics for view-direction-dependent color.

Basis functions follow the graphics-community convention used by the splat
PLY ecosystem (degree <= 3, hardcoded polynomial forms). Colors are decoded
as ``clamp(sum_k c_k * Y_k(dir) + 0.5, 0, 1)`` per channel, so all-zero
coefficients render mid-gray.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
         -1.0925484305920792, 0.5462742152960396)
SH_C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
         0.3731763325901154, -0.4570457994644658, 1.445305721320277,
         -0.5900435899266435)

MAX_DEGREE = 3
COLOR_OFFSET = 0.5


def num_coeffs(degree: int) -> int:
    return (degree + 1) ** 2


def eval_basis(dirs: np.ndarray, degree: int) -> np.ndarray:
    """Evaluate the (degree+1)^2 basis functions at unit directions.

    ``dirs`` is (..., 3); returns (..., (degree+1)^2).
    """
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"degree must be in [0, {MAX_DEGREE}], got {degree}")
    dirs = np.asarray(dirs, dtype=np.float64)
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    out = np.empty(dirs.shape[:-1] + (num_coeffs(degree),), dtype=np.float64)
    out[..., 0] = SH_C0
    if degree >= 1:
        out[..., 1] = -SH_C1 * y
        out[..., 2] = SH_C1 * z
        out[..., 3] = -SH_C1 * x
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        out[..., 4] = SH_C2[0] * x * y
        out[..., 5] = SH_C2[1] * y * z
        out[..., 6] = SH_C2[2] * (2.0 * zz - xx - yy)
        out[..., 7] = SH_C2[3] * x * z
        out[..., 8] = SH_C2[4] * (xx - yy)
    if degree >= 3:
        out[..., 9] = SH_C3[0] * y * (3.0 * xx - yy)
        out[..., 10] = SH_C3[1] * x * y * z
        out[..., 11] = SH_C3[2] * y * (4.0 * zz - xx - yy)
        out[..., 12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
        out[..., 13] = SH_C3[4] * x * (4.0 * zz - xx - yy)
        out[..., 14] = SH_C3[5] * z * (xx - yy)
        out[..., 15] = SH_C3[6] * x * (xx - 3.0 * yy)
    return out


def eval_basis_grad(dirs: np.ndarray, degree: int) -> np.ndarray:
    """Partial derivatives of each basis function with respect to (x, y, z).

    Returns (..., (degree+1)^2, 3). The polynomials are differentiated as
    unconstrained functions of the components; callers composing with a
    normalized direction must project through the normalization Jacobian.
    """
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"degree must be in [0, {MAX_DEGREE}], got {degree}")
    dirs = np.asarray(dirs, dtype=np.float64)
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    grad = np.zeros(dirs.shape[:-1] + (num_coeffs(degree), 3), dtype=np.float64)
    if degree >= 1:
        grad[..., 1, 1] = -SH_C1
        grad[..., 2, 2] = SH_C1
        grad[..., 3, 0] = -SH_C1
    if degree >= 2:
        grad[..., 4, 0] = SH_C2[0] * y
        grad[..., 4, 1] = SH_C2[0] * x
        grad[..., 5, 1] = SH_C2[1] * z
        grad[..., 5, 2] = SH_C2[1] * y
        grad[..., 6, 0] = SH_C2[2] * (-2.0 * x)
        grad[..., 6, 1] = SH_C2[2] * (-2.0 * y)
        grad[..., 6, 2] = SH_C2[2] * (4.0 * z)
        grad[..., 7, 0] = SH_C2[3] * z
        grad[..., 7, 2] = SH_C2[3] * x
        grad[..., 8, 0] = SH_C2[4] * (2.0 * x)
        grad[..., 8, 1] = SH_C2[4] * (-2.0 * y)
    if degree >= 3:
        xx, yy, zz = x * x, y * y, z * z
        grad[..., 9, 0] = SH_C3[0] * 6.0 * x * y
        grad[..., 9, 1] = SH_C3[0] * (3.0 * xx - 3.0 * yy)
        grad[..., 10, 0] = SH_C3[1] * y * z
        grad[..., 10, 1] = SH_C3[1] * x * z
        grad[..., 10, 2] = SH_C3[1] * x * y
        grad[..., 11, 0] = SH_C3[2] * (-2.0 * x * y)
        grad[..., 11, 1] = SH_C3[2] * (4.0 * zz - xx - 3.0 * yy)
        grad[..., 11, 2] = SH_C3[2] * (8.0 * y * z)
        grad[..., 12, 0] = SH_C3[3] * (-6.0 * x * z)
        grad[..., 12, 1] = SH_C3[3] * (-6.0 * y * z)
        grad[..., 12, 2] = SH_C3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy)
        grad[..., 13, 0] = SH_C3[4] * (4.0 * zz - 3.0 * xx - yy)
        grad[..., 13, 1] = SH_C3[4] * (-2.0 * x * y)
        grad[..., 13, 2] = SH_C3[4] * (8.0 * x * z)
        grad[..., 14, 0] = SH_C3[5] * (2.0 * x * z)
        grad[..., 14, 1] = SH_C3[5] * (-2.0 * y * z)
        grad[..., 14, 2] = SH_C3[5] * (xx - yy)
        grad[..., 15, 0] = SH_C3[6] * (3.0 * xx - 3.0 * yy)
        grad[..., 15, 1] = SH_C3[6] * (-6.0 * x * y)
    return grad


def sh_to_rgb(coeffs: np.ndarray, direction: np.ndarray, degree: int) -> np.ndarray:
    """Decode per-channel SH coefficients to RGB at a unit view direction.

    ``coeffs`` is (..., 3, K) with K >= (degree+1)^2; returns (..., 3)
    clamped to [0, 1].
    """
    basis = eval_basis(direction, degree)
    k = num_coeffs(degree)
    raw = np.einsum("...ck,...k->...c", np.asarray(coeffs)[..., :k], basis)
    return np.clip(raw + COLOR_OFFSET, 0.0, 1.0)


def rgb_to_dc(color: np.ndarray) -> np.ndarray:
    """DC coefficient that reproduces ``color`` under the mid-gray offset."""
    return (np.asarray(color, dtype=np.float64) - COLOR_OFFSET) / SH_C0


@dataclass(frozen=True)
class ShBasis:
    """Real spherical harmonics basis of a fixed degree."""

    degree: int

    @property
    def size(self) -> int:
        return num_coeffs(self.degree)

    def evaluate(self, dirs: np.ndarray) -> np.ndarray:
        return eval_basis(dirs, self.degree)

    def gradient(self, dirs: np.ndarray) -> np.ndarray:
        return eval_basis_grad(dirs, self.degree)
