"""Training loop for the aggregation networks."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, fields

import numpy as np

from .loss import AnnealSchedule, anneal_coeff, l1_gamma_loss, l1_gamma_loss_grad, video_loss, video_loss_grad
from .model import ModelConfig, PixelAggregationNet
from .nn import TrainState, adam_step, decay_lr
from .noise import NoiseParams, add_noise, estimate_noise_level, inverse_gamma, sample_noise_params
from .data import crop_offsets
from .tensor import make_rng

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    mode: str = "stpan"
    width_mult: float = 0.125
    tau: int = 2
    blind: bool = False
    offset_scale: float = 8.0
    grid: tuple = ()
    groups: int = 3
    normalize_weights: bool = False
    head_init: float = 0.1
    iters: int = 2000
    batch: int = 8
    patch: int = 32
    lr: float = 2e-4
    lr_decay: float = 0.999991
    lr_floor: float = 1e-4
    eta: float = 100.0
    gamma: float = 0.9998
    sigma_s: float | None = None  # None with sigma_r None: sample per training pair
    sigma_r: float | None = None
    seed: int = 0

    def model_config(self) -> ModelConfig:
        names = {f.name for f in fields(ModelConfig)}
        kw = {k: getattr(self, k) for k in names if k != "seed" and hasattr(self, k)}
        return ModelConfig(seed=self.seed, **kw)

    def noise_params(self):
        if self.sigma_s is None and self.sigma_r is None:
            return None
        return NoiseParams(self.sigma_s or 0.0, self.sigma_r or 0.0)


def make_batch(pool, cfg: TrainConfig, rng, frames: int):
    """Crop, linearise and corrupt a batch of clean sRGB sequences.

    Returns ``(noisy (B, P, P, F), noise_map (B, P, P), gt (B, P, P))``.
    """
    fixed = cfg.noise_params()
    noisy, maps, gts = [], [], []
    for _ in range(cfg.batch):
        seq = pool[int(rng.integers(len(pool)))]
        ref = seq.shape[0] // 2
        if frames == 1:
            seq = seq[ref:ref + 1]
            ref = 0
        elif seq.shape[0] != frames:
            half = frames // 2
            seq = seq[ref - half: ref + half + 1]
            ref = half
        top, left = crop_offsets(rng, seq.shape[1], seq.shape[2], cfg.patch)
        clean = inverse_gamma(seq[:, top:top + cfg.patch, left:left + cfg.patch])
        p = fixed if fixed is not None else sample_noise_params(rng)
        nz = add_noise(clean, p, rng)
        noisy.append(np.moveaxis(nz, 0, -1))
        maps.append(estimate_noise_level(nz[ref], p))
        gts.append(clean[ref])
    return np.stack(noisy), np.stack(maps), np.stack(gts)


def objective(model, out, gt, schedule):
    """Loss value and gradients w.r.t. the output and group outputs."""
    if model.cfg.regularize and out["groups"]:
        loss = video_loss(out["y"], out["groups"], gt, schedule, model.cfg.groups)
        gy, gg = video_loss_grad(out["y"], out["groups"], gt, schedule)
        return loss, gy, gg, anneal_coeff(schedule)
    return l1_gamma_loss(out["y"], gt), l1_gamma_loss_grad(out["y"], gt), [], 0.0


def train(cfg: TrainConfig, pool, log_path=None, model=None, callback=None):
    """Train on a pool of clean sRGB sequences, each ``(F, H, W)``.

    Returns ``(model, state, rows)`` where ``rows`` holds
    ``(iteration, loss, anneal coefficient, lr)`` per iteration.
    """
    if not pool:
        raise ValueError("empty training pool")
    mcfg = cfg.model_config()
    if model is None:
        model = PixelAggregationNet(mcfg)
    state = TrainState(model.params(), lr=cfg.lr, lr_decay=cfg.lr_decay, lr_floor=cfg.lr_floor)
    rng = make_rng(cfg.seed + 1)
    iters_per_epoch = max(1, len(pool) // cfg.batch)
    rows = []
    writer = None
    fh = None
    if log_path is not None:
        fh = open(log_path, "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "loss", "anneal_coeff", "lr"])
    try:
        for it in range(cfg.iters):
            noisy, maps, gt = make_batch(pool, cfg, rng, mcfg.frames)
            out = model.forward(noisy, None if mcfg.blind else maps)
            schedule = AnnealSchedule(cfg.eta, cfg.gamma, state.step)
            loss, gy, gg, coeff = objective(model, out, gt, schedule)
            grads = model.backward(gy, gg)
            row = (it, loss, coeff, state.lr)
            adam_step(state, grads)
            if (it + 1) % iters_per_epoch == 0:
                decay_lr(state)
            rows.append(row)
            if writer is not None:
                writer.writerow([it, repr(float(loss)), repr(float(coeff)), repr(float(row[3]))])
            if it % 100 == 0:
                log.info("iter %d loss %.5f coeff %.3f lr %.3g", it, loss, coeff, row[3])
            if callback is not None:
                callback(it, model, loss)
    finally:
        if fh is not None:
            fh.close()
    return model, state, rows
