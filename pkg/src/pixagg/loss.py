"""L1 loss in gamma-corrected space and the annealed group regulariser."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidPartitionError, InvalidShapeError
from .noise import gamma_correct, gamma_correct_grad


@dataclass
class AnnealSchedule:
    eta: float = 100.0
    gamma: float = 0.9998
    m: int = 0


def anneal_coeff(s: AnnealSchedule) -> float:
    if s.m < 0:
        raise ValueError(f"iteration counter must be >= 0, got {s.m}")
    return s.eta * s.gamma**s.m


def _check(y, y_gt):
    y, y_gt = np.asarray(y), np.asarray(y_gt)
    if y.shape != y_gt.shape:
        raise InvalidShapeError(f"prediction {y.shape} and target {y_gt.shape} differ in shape")
    if y.size == 0:
        raise InvalidShapeError("loss of empty tensors")
    return y, y_gt


def l1_gamma_loss(y, y_gt) -> float:
    """Mean absolute difference after gamma correction (inputs clamped to [0, 1])."""
    y, y_gt = _check(y, y_gt)
    diff = gamma_correct(y).astype(np.float64) - gamma_correct(y_gt)
    return float(np.mean(np.abs(diff)))


def l1_gamma_loss_grad(y, y_gt):
    """d loss / d y; zero at zero residual and outside the clamp range."""
    y, y_gt = _check(y, y_gt)
    diff = gamma_correct(y).astype(np.float64) - gamma_correct(y_gt)
    return (np.sign(diff) * gamma_correct_grad(y) / y.size).astype(y.dtype)


def video_loss(y, y_groups, y_gt, s: AnnealSchedule, groups: int | None = None) -> float:
    if groups is not None and len(y_groups) != groups:
        raise InvalidPartitionError(f"expected {groups} group outputs, got {len(y_groups)}")
    if len(y_groups) == 0:
        raise InvalidPartitionError("video loss needs at least one group output")
    c = anneal_coeff(s)
    return l1_gamma_loss(y, y_gt) + c * sum(l1_gamma_loss(yg, y_gt) for yg in y_groups)


def video_loss_grad(y, y_groups, y_gt, s: AnnealSchedule):
    """Gradients of ``video_loss`` w.r.t. ``y`` and each group output."""
    c = anneal_coeff(s)
    return l1_gamma_loss_grad(y, y_gt), [c * l1_gamma_loss_grad(yg, y_gt) for yg in y_groups]
