"""PSNR and single-scale SSIM for images in [0, 1]."""
from __future__ import annotations

import math

import numpy as np

from .errors import InvalidShapeError

WIN = 11
SIGMA = 1.5
K1, K2 = 0.01, 0.03


def psnr(y, y_gt) -> float:
    """10 log10(1 / MSE); identical inputs give ``math.inf``."""
    y, y_gt = np.asarray(y, dtype=np.float64), np.asarray(y_gt, dtype=np.float64)
    if y.shape != y_gt.shape:
        raise InvalidShapeError(f"psnr of mismatched shapes {y.shape} and {y_gt.shape}")
    mse = float(np.mean((y - y_gt) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gauss_window():
    r = np.arange(WIN) - WIN // 2
    g = np.exp(-(r**2) / (2 * SIGMA**2))
    return g / g.sum()


def _filter_valid(img, g):
    # separable correlation, keeping only positions where the window fits
    rows = np.lib.stride_tricks.sliding_window_view(img, WIN, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, WIN, axis=1) @ g


def ssim(y, y_gt) -> float:
    """Gaussian-windowed SSIM (11x11, sigma 1.5, L = 1), averaged over valid positions."""
    x = np.asarray(y, dtype=np.float64)
    z = np.asarray(y_gt, dtype=np.float64)
    if x.shape != z.shape or x.ndim != 2:
        raise InvalidShapeError(f"ssim needs two 2-D images of equal shape, got {x.shape} and {z.shape}")
    if min(x.shape) < WIN:
        raise InvalidShapeError(f"ssim needs images of at least {WIN}x{WIN}, got {x.shape}")
    g = _gauss_window()
    mx, mz = _filter_valid(x, g), _filter_valid(z, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    szz = _filter_valid(z * z, g) - mz * mz
    sxz = _filter_valid(x * z, g) - mx * mz
    c1, c2 = K1**2, K2**2
    s = ((2 * mx * mz + c1) * (2 * sxz + c2)) / ((mx * mx + mz * mz + c1) * (sxx + szz + c2))
    return float(np.mean(s))
