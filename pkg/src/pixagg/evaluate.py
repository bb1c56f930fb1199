"""Inference and PSNR/SSIM evaluation against simple baselines.

Metrics are computed on gamma-corrected (display-space) images, the same
space the training loss compares in.
"""
from __future__ import annotations

import csv
import math

import numpy as np

from .errors import ConfigError, InvalidShapeError
from .metrics import psnr, ssim
from .model import DEPTH, PixelAggregationNet
from .noise import NoiseParams, estimate_noise_level, gamma_correct


def run_model(model: PixelAggregationNet, noisy, params: NoiseParams | None = None) -> dict:
    """Forward one noisy linear sequence ``(F, h, w)`` (or image ``(h, w)``)."""
    cfg = model.cfg
    noisy = np.asarray(noisy, dtype=np.float32)
    if noisy.ndim == 2:
        noisy = noisy[None]
    f, h, w = noisy.shape
    if cfg.video and f != cfg.frames:
        raise ConfigError(f"model expects tau={cfg.tau} ({cfg.frames} frames), sequence has {f} frames")
    if not cfg.video and f != 1:
        noisy = noisy[f // 2: f // 2 + 1]
    if h % 2**DEPTH or w % 2**DEPTH:
        raise InvalidShapeError(f"input size {h}x{w} must be divisible by {2**DEPTH}")
    nmap = None
    if not cfg.blind:
        if params is None:
            raise ConfigError("non-blind model needs noise parameters")
        nmap = estimate_noise_level(noisy[noisy.shape[0] // 2], params)[None]
    return model.forward(np.moveaxis(noisy, 0, -1)[None], nmap)


def denoise(model, noisy, params=None) -> np.ndarray:
    """Denoised linear reference frame ``(h, w)``."""
    return run_model(model, noisy, params)["y"][0]


def direct_average(noisy) -> np.ndarray:
    return np.mean(np.asarray(noisy, dtype=np.float64), axis=0).astype(np.float32)


def score(y_linear, gt_linear):
    a, b = gamma_correct(y_linear), gamma_correct(gt_linear)
    return psnr(a, b), ssim(a, b)


def evaluate(entries, models=None, baselines=True):
    """Per-sequence and mean metrics.

    ``models`` maps a method name to a model. Returns rows ``(name, psnr, ssim)``
    with names ``method/sequence`` and ``method/mean``.
    """
    models = models or {}
    per_method = {}

    def add(method, seq, y, gt):
        p, s = score(y, gt)
        per_method.setdefault(method, []).append((f"{method}/{seq}", p, s))

    for e in entries:
        if e.noisy is None:
            raise ConfigError(f"{e.name}: no noisy frames to evaluate")
        gt = e.ground_truth
        if baselines:
            add("reference", e.name, e.noisy[e.tau], gt)
            add("direct_average", e.name, direct_average(e.noisy), gt)
        for name, m in models.items():
            add(name, e.name, denoise(m, e.noisy, e.params), gt)

    rows = []
    for method, rs in per_method.items():
        rows.extend(rs)
        rows.append((f"{method}/mean", mean_psnr([r[1] for r in rs]), float(np.mean([r[2] for r in rs]))))
    return rows


def mean_psnr(values):
    vals = list(values)
    if any(math.isinf(v) for v in vals):
        return math.inf
    return float(np.mean(vals))


def write_metrics(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["name", "psnr", "ssim"])
        for name, p, s in rows:
            w.writerow([name, "inf" if math.isinf(p) else f"{p:.4f}", f"{s:.6f}"])


def summary(rows) -> dict:
    return {name.split("/")[0]: (p, s) for name, p, s in rows if name.endswith("/mean")}
