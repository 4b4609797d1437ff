"""Photometric training loss: (1 - lambda) * L1 + lambda * D-SSIM.

D-SSIM is (1 - SSIM) / 2 with the exact SSIM implementation from the
metrics module. The gradient is analytic in the rendered image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .metrics import ssim

DEFAULT_LAMBDA = 0.2


@dataclass
class LossValue:
    total: float
    l1: float
    d_ssim: float
    grad: np.ndarray  # dL/d(render), same shape as the image


def photometric_loss(render: np.ndarray, truth: np.ndarray,
                     weight: float = DEFAULT_LAMBDA) -> LossValue:
    """Loss and its per-pixel gradient with respect to the render."""
    render = np.asarray(render, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if render.shape != truth.shape:
        raise DimensionMismatch(
            f"render {render.shape} vs truth {truth.shape}")
    diff = render - truth
    l1 = float(np.mean(np.abs(diff)))
    grad = (1.0 - weight) * np.sign(diff) / diff.size

    if weight != 0.0:
        ssim_value, ssim_grad = ssim(render, truth, with_grad=True)
        d_ssim = (1.0 - ssim_value) / 2.0
        grad += weight * (-0.5) * ssim_grad
    else:
        d_ssim = (1.0 - ssim(render, truth)) / 2.0

    total = (1.0 - weight) * l1 + weight * d_ssim
    return LossValue(total=total, l1=l1, d_ssim=d_ssim, grad=grad)
