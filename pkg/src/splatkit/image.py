"""Image loading and preprocessing.

Images are plain ``(H, W, 3)`` float64 arrays with channel values in [0, 1].
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import ZeroDimension


def load_png(path: str | Path) -> np.ndarray:
    """Load an 8-bit PNG as float RGB in [0, 1]; alpha channels are discarded."""
    with PILImage.open(path) as img:
        rgb = img.convert("RGB")
        arr = np.asarray(rgb, dtype=np.float64) / 255.0
    return arr


def save_png(path: str | Path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.float64)
    data = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(data, mode="RGB").save(path, format="PNG")


def is_green(img: np.ndarray, tau: float = 0.15, green_floor: float = 0.25) -> np.ndarray:
    """Boolean mask of pixels classified as chroma-key green.

    A pixel is green when its G channel dominates both R and B by more than
    ``tau`` and G itself exceeds ``green_floor``.
    """
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    return (g - np.maximum(r, b) > tau) & (g > green_floor)


def chroma_key(img: np.ndarray, tau: float = 0.15, green_floor: float = 0.25) -> np.ndarray:
    """Replace green-screen pixels with black; all other pixels unchanged."""
    out = np.array(img, dtype=np.float64, copy=True)
    out[is_green(img, tau, green_floor)] = 0.0
    return out


def resize(img: np.ndarray, width: int, height: int) -> np.ndarray:
    """Bilinear resample to ``width`` x ``height``.

    Uses the half-pixel-center mapping ``src = (dst + 0.5) * scale - 0.5``
    with edge clamping, so resizing to the same size is an exact identity
    and constant images stay constant.
    """
    if width <= 0 or height <= 0:
        raise ZeroDimension(f"target size {width}x{height} must be positive")
    img = np.asarray(img, dtype=np.float64)
    src_h, src_w = img.shape[:2]
    if (src_w, src_h) == (width, height):
        return img.copy()

    def axis_coords(dst_n: int, src_n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pos = (np.arange(dst_n, dtype=np.float64) + 0.5) * (src_n / dst_n) - 0.5
        lo = np.floor(pos).astype(np.int64)
        frac = pos - lo
        lo0 = np.clip(lo, 0, src_n - 1)
        lo1 = np.clip(lo + 1, 0, src_n - 1)
        return lo0, lo1, frac

    x0, x1, fx = axis_coords(width, src_w)
    y0, y1, fy = axis_coords(height, src_h)

    rows0 = img[y0]  # (height, src_w, 3)
    rows1 = img[y1]
    rows = rows0 * (1.0 - fy)[:, None, None] + rows1 * fy[:, None, None]
    out = rows[:, x0] * (1.0 - fx)[None, :, None] + rows[:, x1] * fx[None, :, None]
    return out
