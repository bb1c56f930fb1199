"""Small-scale experiment setups shared by the scripts and the acceptance tests."""
from __future__ import annotations

import numpy as np

from .aggregation import RigidGrid
from .data import DatasetEntry, generate_entry, make_sequence, random_motion, sequence_seed
from .evaluate import evaluate, summary
from .noise import NoiseParams, add_noise, inverse_gamma
from .tensor import make_rng

TOY_SIGMA = 25 / 255


def toy_pool(seed: int = 123, count: int = 256, size: int = 48, tau: int = 2, max_motion: float = 6.0):
    """Clean sRGB training sequences with random sub-pixel translation."""
    rng = make_rng(seed)
    return [make_sequence(rng, size, tau, random_motion(rng, max_motion)) for _ in range(count)]


def moving_entries(seed, count, size=64, tau=2, sigma_r=TOY_SIGMA, motion=(3.0, 6.0)):
    """Held-out noisy sequences whose per-frame motion magnitude lies in ``motion``."""
    out = []
    for i in range(count):
        s = sequence_seed(seed, i)
        rng = make_rng(s)
        mag = rng.uniform(*motion)
        ang = rng.uniform(0, 2 * np.pi)
        mv = (float(mag * np.sin(ang)), float(mag * np.cos(ang)))
        clean = make_sequence(rng, size, tau, mv)
        p = NoiseParams(0.0, sigma_r)
        out.append(DatasetEntry(f"seq_{i:04d}", clean, add_noise(inverse_gamma(clean), p, rng), p, mv, s))
    return out


def shift_entries(shift, seed, count=6, size=64, tau=2, sigma_r=TOY_SIGMA):
    return [generate_entry(i, seed + shift, size, tau, 0.0, sigma_r, shift=shift) for i in range(count)]


def shift_study(models: dict, shifts=(0, 2, 4, 6), seed=999, count=6, size=64, sigma_r=TOY_SIGMA):
    """Mean PSNR per method for each integer per-frame shift: ``{shift: {method: psnr}}``."""
    tau = next(iter(models.values())).cfg.tau if models else 2
    res = {}
    for s in shifts:
        rows = evaluate(shift_entries(s, seed, count, size, tau, sigma_r), models)
        res[s] = {k: v[0] for k, v in summary(rows).items()}
    return res


def aligning_offsets(grid: RigidGrid, motion, h: int, w: int) -> np.ndarray:
    """Offsets that send every sample of a 3-d grid to the reference pixel's scene point.

    Frame ``tau + dt`` shows the scene moved by ``dt * motion``, so the sample
    at lattice point ``(pu, pv, dt)`` must move by ``-dt * motion - (pu, pv)``.
    """
    du, dv = motion
    pts = grid.points
    off = np.zeros((h, w, grid.n, 3))
    off[..., 0] = -pts[:, 2] * du - pts[:, 0]
    off[..., 1] = -pts[:, 2] * dv - pts[:, 1]
    return off
