"""Pixel aggregation over rigid and deformed sampling grids.

Field layouts (an optional leading batch shape is allowed everywhere):

    image      x        (h, w)            spatial aggregation
    sequence   x        (h, w, f)         spatio-temporal, f = 2*tau + 1
    offsets    V        (h, w, n, d)      d = 2 (rows, cols) or 3 (+ frames)
    weights    F        (h, w, n)

Output pixel (u, v) is ``sum_i x(u + u_i + V[u,v,i,0], v + v_i + V[u,v,i,1] [, tau + t_i + V[u,v,i,2]]) * F[u,v,i]``
where ``(u_i, v_i[, t_i])`` are the rigid lattice points. Video aggregation
always produces the centre (reference) frame.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import InvalidGridError, InvalidInputError, InvalidPartitionError, InvalidShapeError
from .sampling import sample_points, sample_points_backward

Tensor = np.ndarray


@dataclass(frozen=True)
class RigidGrid:
    dim: int
    extents: tuple[int, ...]
    points: np.ndarray  # (n, dim) integer offsets, row-major over the extents

    @property
    def n(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class GroupPartition:
    s: int
    assignment: np.ndarray  # (n,) group id in [0, s) per sample index

    def members(self, g: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == g)


def build_rigid_grid(dim: int, extents) -> RigidGrid:
    extents = tuple(int(e) for e in extents)
    if dim not in (2, 3):
        raise InvalidGridError(f"grid dimension must be 2 or 3, got {dim}")
    if len(extents) != dim:
        raise InvalidGridError(f"{dim}-d grid needs {dim} extents, got {extents}")
    for e in extents:
        if e < 1 or e % 2 == 0:
            raise InvalidGridError(f"grid extents must be odd and >= 1, got {extents}")
    axes = [range(-(e // 2), e // 2 + 1) for e in extents]
    points = np.array(list(itertools.product(*axes)), dtype=np.int64)
    return RigidGrid(dim, extents, points)


def contiguous_partition(n: int, s: int) -> GroupPartition:
    """Split sample indices 0..n-1 into ``s`` contiguous blocks of n/s."""
    if s < 1 or n % s != 0:
        raise InvalidPartitionError(f"{s} groups do not divide {n} samples")
    return GroupPartition(s, np.repeat(np.arange(s), n // s))


def _check_fields(x, grid, offsets, weights, spatial_ndim):
    x = np.asarray(x)
    offsets = np.asarray(offsets)
    weights = np.asarray(weights)
    if x.ndim < spatial_ndim:
        raise InvalidShapeError(f"input of shape {x.shape} has too few dimensions")
    batch = x.shape[: x.ndim - spatial_ndim]
    h, w = x.shape[len(batch): len(batch) + 2]
    n = grid.n
    if offsets.shape != batch + (h, w, n, grid.dim):
        raise InvalidShapeError(f"offsets shape {offsets.shape} != {batch + (h, w, n, grid.dim)}")
    if weights.shape != batch + (h, w, n):
        raise InvalidShapeError(f"weights shape {weights.shape} != {batch + (h, w, n)}")
    if not np.all(np.isfinite(offsets)):
        raise InvalidInputError("non-finite sampling offsets")
    if not np.all(np.isfinite(weights)):
        raise InvalidInputError("non-finite aggregation weights")
    return x, offsets, weights, batch, h, w


def _spatial_ndim(x, grid):
    return 2 if grid.dim == 2 else 3


def sample_coords(grid: RigidGrid, offsets: Tensor, frames: int | None = None) -> np.ndarray:
    """Absolute sampling coordinates ``batch + (h, w, n, d)`` in float64."""
    offsets = np.asarray(offsets)
    h, w = offsets.shape[-4:-2]
    base = np.zeros((h, w, grid.n, grid.dim))
    base[..., 0] = np.arange(h)[:, None, None]
    base[..., 1] = np.arange(w)[None, :, None]
    if grid.dim == 3:
        if frames is None or frames % 2 == 0:
            raise InvalidShapeError(f"spatio-temporal aggregation needs an odd frame count, got {frames}")
        base[..., 2] = frames // 2
    base += grid.points
    return base + offsets


def sample_grid(x: Tensor, grid: RigidGrid, offsets: Tensor) -> Tensor:
    """Sampled pixel values ``batch + (h, w, n)`` for a deformed grid."""
    x = np.asarray(x)
    nd = _spatial_ndim(x, grid)
    frames = x.shape[-1] if grid.dim == 3 else None
    coords = sample_coords(grid, offsets, frames)
    batch = coords.shape[:-4]
    h, w, n, d = coords.shape[-4:]
    if x.shape[x.ndim - nd: x.ndim - nd + 2] != (h, w):
        raise InvalidShapeError(f"input {x.shape} and offsets {np.shape(offsets)} disagree on (h, w)")
    vals = sample_points(x, coords.reshape(batch + (h * w * n, d)))
    return vals.reshape(batch + (h, w, n))


def _weighted_sum(samples, weights, idx):
    # fixed left-to-right order so a single group reproduces the full sum bit for bit
    acc = np.zeros(samples.shape[:-1])
    for i in idx:
        acc += samples[..., i].astype(np.float64) * weights[..., i]
    return acc


def _aggregate(x, grid, offsets, weights):
    x, offsets, weights, *_ = _check_fields(x, grid, offsets, weights, _spatial_ndim(x, grid))
    s = sample_grid(x, grid, offsets)
    return _weighted_sum(s, weights, range(grid.n)).astype(x.dtype)


def aggregate_spatial(x: Tensor, grid: RigidGrid, offsets: Tensor, weights: Tensor) -> Tensor:
    if grid.dim != 2:
        raise InvalidGridError("aggregate_spatial needs a 2-d grid")
    return _aggregate(x, grid, offsets, weights)


def aggregate_spatiotemporal(x: Tensor, grid: RigidGrid, offsets: Tensor, weights: Tensor) -> Tensor:
    if grid.dim != 3:
        raise InvalidGridError("aggregate_spatiotemporal needs a 3-d grid")
    if np.ndim(x) < 3 or np.shape(x)[-1] % 2 == 0:
        raise InvalidShapeError(f"sequence must be (h, w, 2*tau+1), got {np.shape(x)}")
    return _aggregate(x, grid, offsets, weights)


def aggregate(x, grid, offsets, weights):
    """Dispatch on grid dimension."""
    return _aggregate(x, grid, offsets, weights)


def group_sums(samples: Tensor, weights: Tensor, part: GroupPartition) -> list[Tensor]:
    """Scaled per-group aggregates ``s * sum_{j in group} samples_j * weights_j``."""
    return [(part.s * _weighted_sum(samples, weights, part.members(g))).astype(samples.dtype) for g in range(part.s)]


def aggregate_group(x, grid, offsets, weights, part: GroupPartition, g: int) -> Tensor:
    if len(part.assignment) != grid.n or grid.n % part.s != 0:
        raise InvalidPartitionError(f"partition into {part.s} groups does not fit {grid.n} samples")
    if not 0 <= g < part.s:
        raise InvalidPartitionError(f"group id {g} outside [0, {part.s})")
    x, offsets, weights, *_ = _check_fields(x, grid, offsets, weights, _spatial_ndim(x, grid))
    idx = part.members(g)
    s = sample_grid(x, grid, offsets)
    return (part.s * _weighted_sum(s, weights, idx)).astype(x.dtype)


def aggregation_backward(x, grid, offsets, weights, upstream, samples=None):
    """Gradients of ``sum(upstream * aggregate(x, grid, offsets, weights))``.

    Returns ``(grad_x, grad_offsets, grad_weights)``. ``samples`` may pass in
    the forward's sampled values to skip resampling.
    """
    nd = _spatial_ndim(x, grid)
    x, offsets, weights, batch, h, w = _check_fields(x, grid, offsets, weights, nd)
    upstream = np.asarray(upstream)
    if upstream.shape != batch + (h, w):
        raise InvalidShapeError(f"upstream shape {upstream.shape} != {batch + (h, w)}")
    if samples is None:
        samples = sample_grid(x, grid, offsets)
    grad_weights = (upstream[..., None] * samples).astype(weights.dtype)
    grad_samples = upstream[..., None].astype(np.float64) * weights
    return (*_samples_backward(x, grid, offsets, grad_samples), grad_weights)


def _samples_backward(x, grid, offsets, grad_samples, need_x=True):
    frames = x.shape[-1] if grid.dim == 3 else None
    coords = sample_coords(grid, offsets, frames)
    batch = coords.shape[:-4]
    h, w, n, d = coords.shape[-4:]
    gx, gc = sample_points_backward(
        x, coords.reshape(batch + (h * w * n, d)), grad_samples.reshape(batch + (h * w * n,)), need_x=need_x
    )
    return gx, gc.reshape(offsets.shape).astype(offsets.dtype)


def samples_backward(x, grid, offsets, grad_samples, need_x=True):
    """Back-propagate a gradient on sampled values to ``(grad_x, grad_offsets)``."""
    return _samples_backward(np.asarray(x), grid, np.asarray(offsets), np.asarray(grad_samples), need_x)


def receptive_field_stat(offsets: Tensor, grid: RigidGrid) -> float:
    """Mean over pixels of the L-inf spatial diameter of the deformed grid."""
    offsets = np.asarray(offsets)
    if offsets.ndim < 4 or offsets.shape[-2:] != (grid.n, grid.dim):
        raise InvalidShapeError(f"offsets shape {offsets.shape} does not fit a grid of {grid.n}x{grid.dim}")
    pos = grid.points[:, :2] + offsets[..., :2].astype(np.float64)
    span = pos.max(axis=-2) - pos.min(axis=-2)
    return float(np.mean(span.max(axis=-1)))
