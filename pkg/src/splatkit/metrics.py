"""Image quality metrics: PSNR and windowed SSIM (with analytic gradient).

SSIM uses an 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03 and
dynamic range 1, evaluated per channel on fully-inside windows only and
averaged over channels and window positions. The training loss reuses this
exact implementation, so the loss and the reported metric cannot drift
apart.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d

from .errors import DimensionMismatch, EmptyTestSet, TooSmall

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB over all channels (peak = 1).

    Identical images (MSE = 0) are capped at 100 dB.
    """
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(1.0 / mse))


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    w = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return w / w.sum()


_WINDOW = _gaussian_window()
_HALF = SSIM_WINDOW // 2


def _smooth_valid(img: np.ndarray) -> np.ndarray:
    """Separable window correlation, cropped to fully-inside positions."""
    out = correlate1d(img, _WINDOW, axis=0, mode="constant")
    out = correlate1d(out, _WINDOW, axis=1, mode="constant")
    return out[_HALF:-_HALF, _HALF:-_HALF]


def _smooth_valid_adjoint(grad: np.ndarray, full_shape: tuple) -> np.ndarray:
    """Adjoint of _smooth_valid (the window is symmetric)."""
    full = np.zeros(full_shape, dtype=np.float64)
    full[_HALF:-_HALF, _HALF:-_HALF] = grad
    full = correlate1d(full, _WINDOW, axis=0, mode="constant")
    return correlate1d(full, _WINDOW, axis=1, mode="constant")


def ssim(a: np.ndarray, b: np.ndarray,
         with_grad: bool = False):
    """Mean windowed SSIM; optionally also d(ssim)/d(a).

    Requires both image dimensions to be at least the window size (11).
    """
    a, b = _check_pair(a, b)
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    h, w, channels = a.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise TooSmall(f"images must be at least {SSIM_WINDOW}px per side")

    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    total = 0.0
    grad = np.zeros_like(a) if with_grad else None
    n_map = (h - 2 * _HALF) * (w - 2 * _HALF) * channels

    for c in range(channels):
        ac = a[:, :, c]
        bc = b[:, :, c]
        mu_a = _smooth_valid(ac)
        mu_b = _smooth_valid(bc)
        e_aa = _smooth_valid(ac * ac)
        e_bb = _smooth_valid(bc * bc)
        e_ab = _smooth_valid(ac * bc)
        n1 = 2.0 * mu_a * mu_b + c1
        n2 = 2.0 * (e_ab - mu_a * mu_b) + c2
        d1 = mu_a * mu_a + mu_b * mu_b + c1
        d2 = (e_aa - mu_a * mu_a) + (e_bb - mu_b * mu_b) + c2
        s = (n1 * n2) / (d1 * d2)
        total += float(s.sum())
        if with_grad:
            inv_dd = 1.0 / (d1 * d2)
            g_mu = (2.0 * mu_b * (n2 - n1) * inv_dd
                    - 2.0 * mu_a * s / d1 + 2.0 * mu_a * s / d2)
            g_eaa = -s / d2
            g_eab = 2.0 * n1 * inv_dd
            u = 1.0 / n_map
            grad[:, :, c] = (
                _smooth_valid_adjoint(u * g_mu, (h, w))
                + 2.0 * ac * _smooth_valid_adjoint(u * g_eaa, (h, w))
                + bc * _smooth_valid_adjoint(u * g_eab, (h, w)))

    value = total / n_map
    if with_grad:
        return value, grad
    return value


def d_ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Structural dissimilarity (1 - SSIM) / 2 in [0, 1]."""
    return (1.0 - ssim(a, b)) / 2.0


@dataclass
class QualityScores:
    """Per-view and mean quality metrics for a test set."""

    names: list[str]
    psnr_values: list[float]
    ssim_values: list[float]

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr_values))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim_values))

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["view", "psnr_db", "ssim"])
            for name, p, s in zip(self.names, self.psnr_values,
                                  self.ssim_values):
                writer.writerow([name, f"{p:.6f}", f"{s:.8f}"])
            writer.writerow(["mean", f"{self.mean_psnr:.6f}",
                             f"{self.mean_ssim:.8f}"])

    def write_json(self, path: str | Path) -> None:
        doc = {
            "mean": {"psnr_db": self.mean_psnr, "ssim": self.mean_ssim,
                     "lpips": None},
            "views": [
                {"name": n, "psnr_db": p, "ssim": s}
                for n, p, s in zip(self.names, self.psnr_values,
                                   self.ssim_values)
            ],
        }
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def evaluate(cloud, cameras, truths, background=(0.0, 0.0, 0.0),
             names=None, config=None) -> QualityScores:
    """Render every test view and score it against its ground truth."""
    from .raster import RasterConfig, render

    if len(cameras) == 0:
        raise EmptyTestSet("no test views to evaluate")
    if len(cameras) != len(truths):
        raise DimensionMismatch("cameras and truth images differ in count")
    config = config or RasterConfig()
    if names is None:
        names = [f"view_{i:03d}" for i in range(len(cameras))]
    psnr_values = []
    ssim_values = []
    for cam, truth in zip(cameras, truths):
        rendered = render(cloud, cam, background, config)
        psnr_values.append(psnr(rendered.image, truth))
        ssim_values.append(ssim(rendered.image, truth))
    return QualityScores(names=list(names), psnr_values=psnr_values,
                         ssim_values=ssim_values)
