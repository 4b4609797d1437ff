"""Learnable Gaussian scene representation.

Each Gaussian carries a world-space mean, an anisotropic covariance stored
in factored form (per-axis log standard deviations plus a unit quaternion,
so ``cov = R diag(exp(2*log_scale)) R^T`` is positive-definite by
construction), an opacity logit, and per-channel spherical-harmonics color
coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import sh
from .camera import quat_to_rotmat
from .errors import SingularCovariance, TooFewPoints

INIT_OPACITY = 0.1
KNN_NEIGHBORS = 3
MIN_NEIGHBOR_DIST = 1e-7


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logit(p: float | np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    return np.log(p / (1.0 - p))


@dataclass
class GaussianCloud:
    """The learnable scene: arrays indexed by Gaussian."""

    means: np.ndarray          # (n, 3)
    log_scales: np.ndarray     # (n, 3)
    rotations: np.ndarray      # (n, 4) unit quaternions, scalar-first
    opacity_logits: np.ndarray  # (n,)
    sh_coeffs: np.ndarray      # (n, 3, 16)
    active_sh_degree: int = 0
    max_sh_degree: int = field(default=sh.MAX_DEGREE)

    def __post_init__(self):
        n = len(self.means)
        if n < 1:
            raise ValueError("a GaussianCloud needs at least one Gaussian")
        assert self.means.shape == (n, 3)
        assert self.log_scales.shape == (n, 3)
        assert self.rotations.shape == (n, 4)
        assert self.opacity_logits.shape == (n,)
        assert self.sh_coeffs.shape == (n, 3, sh.num_coeffs(self.max_sh_degree))

    def __len__(self) -> int:
        return len(self.means)

    @property
    def n(self) -> int:
        return len(self.means)

    def opacities(self) -> np.ndarray:
        return sigmoid(self.opacity_logits)

    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales)

    def covariances(self) -> np.ndarray:
        """(n, 3, 3) covariance matrices rebuilt from the factored form."""
        return covariance_from_params(self.log_scales, self.rotations)

    def normalized_rotations(self) -> np.ndarray:
        norms = np.linalg.norm(self.rotations, axis=1, keepdims=True)
        return self.rotations / norms

    def copy(self) -> "GaussianCloud":
        return GaussianCloud(
            means=self.means.copy(), log_scales=self.log_scales.copy(),
            rotations=self.rotations.copy(),
            opacity_logits=self.opacity_logits.copy(),
            sh_coeffs=self.sh_coeffs.copy(),
            active_sh_degree=self.active_sh_degree,
            max_sh_degree=self.max_sh_degree)

    def param_arrays(self) -> dict[str, np.ndarray]:
        """Named views of the learnable arrays, in optimizer group order."""
        return {
            "means": self.means,
            "log_scales": self.log_scales,
            "rotations": self.rotations,
            "opacity_logits": self.opacity_logits,
            "sh_coeffs": self.sh_coeffs,
        }


def covariance_from_params(log_scales: np.ndarray, rotations: np.ndarray) -> np.ndarray:
    """Covariance ``R diag(exp(2*log_scale)) R^T``.

    Accepts a single (3,)/(4,) pair or batched (n, 3)/(n, 4) arrays.
    Symmetric PSD by construction; positive-definite for finite scales.
    """
    log_scales = np.asarray(log_scales, dtype=np.float64)
    rotations = np.asarray(rotations, dtype=np.float64)
    single = log_scales.ndim == 1
    ls = np.atleast_2d(log_scales)
    q = np.atleast_2d(rotations)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    rot = quat_to_rotmat(q)
    var = np.exp(2.0 * ls)
    cov = np.einsum("nij,nj,nkj->nik", rot, var, rot)
    return cov[0] if single else cov


def density_at(mean: np.ndarray, cov: np.ndarray, x: np.ndarray,
               max_condition: float = 1e12) -> float:
    """Normalized trivariate Gaussian density at ``x``.

    This is the reference density (with the (2*pi)^(3/2) * sqrt(det)
    normalization); the rasterizer uses the unnormalized exponential times
    opacity, which is tested separately.
    """
    mean = np.asarray(mean, dtype=np.float64)
    cov = np.asarray(cov, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    eigvals = np.linalg.eigvalsh(cov)
    if eigvals[0] <= 0 or eigvals[-1] / eigvals[0] > max_condition:
        raise SingularCovariance(
            f"covariance condition number exceeds {max_condition:g}")
    diff = x - mean
    maha = diff @ np.linalg.solve(cov, diff)
    det = float(np.prod(eigvals))
    norm = (2.0 * np.pi) ** 1.5 * np.sqrt(det)
    return float(np.exp(-0.5 * maha) / norm)


def mean_knn_distance(points: np.ndarray, k: int = KNN_NEIGHBORS) -> np.ndarray:
    """Mean distance from each point to its k nearest neighbors (exact)."""
    tree = cKDTree(points)
    # query k+1 because the nearest hit is the point itself
    dists, _ = tree.query(points, k=k + 1)
    return dists[:, 1:].mean(axis=1)


def init_from_points(positions: np.ndarray, colors: np.ndarray,
                     max_sh_degree: int = sh.MAX_DEGREE) -> GaussianCloud:
    """Initialize one isotropic Gaussian per SfM point.

    Scale is the log of the mean distance to the 3 nearest neighbors
    (identical on all axes), rotation is identity, opacity starts at 0.1,
    and the SH DC term reproduces the point color; higher-order
    coefficients start at zero with active degree 0.
    """
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
    n = len(positions)
    if n < KNN_NEIGHBORS + 1:
        raise TooFewPoints(f"need at least {KNN_NEIGHBORS + 1} points, got {n}")
    dist = np.maximum(mean_knn_distance(positions), MIN_NEIGHBOR_DIST)
    log_scales = np.repeat(np.log(dist)[:, None], 3, axis=1)
    rotations = np.zeros((n, 4))
    rotations[:, 0] = 1.0
    sh_coeffs = np.zeros((n, 3, sh.num_coeffs(max_sh_degree)))
    sh_coeffs[:, :, 0] = sh.rgb_to_dc(colors)
    return GaussianCloud(
        means=positions.copy(),
        log_scales=log_scales,
        rotations=rotations,
        opacity_logits=np.full(n, float(logit(INIT_OPACITY))),
        sh_coeffs=sh_coeffs,
        active_sh_degree=0,
        max_sh_degree=max_sh_degree,
    )
