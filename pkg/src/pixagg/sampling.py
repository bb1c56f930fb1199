"""Bilinear / trilinear point sampling with analytic gradients.

A point ``c`` samples ``sum_p x[p] * prod_a max(0, 1 - |c_a - p_a|)`` over all
lattice points ``p`` of ``x``. Lattice points outside ``x`` contribute zero,
so there is no clamping and no border special case.

The coordinate gradient uses the one-sided slopes of the hat function
(-1 / +1 inside the unit window). At the kinks (|c_a - p_a| in {0, 1}, which
only happens when ``c_a`` is an integer) the slope is taken as 0.
"""
from __future__ import annotations

import itertools

import numpy as np

from .errors import InvalidShapeError

Tensor = np.ndarray


class _Corners:
    """Hat-function weights and lattice indices for a batch of points.

    ``grid_shape`` holds the ``d`` sampled axes; ``coords`` ends in ``(m, d)``.
    Out-of-range lattice indices are clipped for the gather and carry weight 0.
    """

    def __init__(self, grid_shape, coords):
        d = len(grid_shape)
        self.d = d
        self.size = int(np.prod(grid_shape))
        c = np.asarray(coords, dtype=np.float64)
        strides = np.cumprod((1,) + tuple(grid_shape[::-1]))[:-1][::-1]
        self.bits = list(itertools.product((0, 1), repeat=d))

        # per axis and side (0 = floor, 1 = floor + 1): masked weight, gather index
        self.w = []
        self.idx = []
        self.slope = []
        for a in range(d):
            ca = c[..., a]
            base = np.floor(ca)
            frac = ca - base
            base = base.astype(np.int64)
            hi = grid_shape[a] - 1
            moving = frac != 0.0
            ws, ids, sl = [], [], []
            for bit, wt in ((0, 1.0 - frac), (1, frac)):
                i = base + bit
                ok = (i >= 0) & (i <= hi)
                ws.append(wt * ok)
                ids.append(np.clip(i, 0, hi) * strides[a])
                sl.append((1.0 if bit else -1.0) * (ok & moving))
            self.w.append(ws)
            self.idx.append(ids)
            self.slope.append(sl)

        self.flat = []
        self.weight = []
        for bits in self.bits:
            flat = self.idx[0][bits[0]]
            w = self.w[0][bits[0]]
            for a in range(1, d):
                flat = flat + self.idx[a][bits[a]]
                w = w * self.w[a][bits[a]]
            self.flat.append(flat)
            self.weight.append(w)

    def axis_slope(self, corner, axis):
        """d(weight)/d(coord[axis]) for one corner, with the kink convention."""
        bits = self.bits[corner]
        out = self.slope[axis][bits[axis]]
        for a in range(self.d):
            if a != axis:
                out = out * self.w[a][bits[a]]
        return out


def _split(x, coords):
    coords = np.asarray(coords)
    d = coords.shape[-1]
    if x.ndim < d:
        raise InvalidShapeError(f"tensor of rank {x.ndim} cannot be sampled with {d}-d points")
    batch = x.shape[: x.ndim - d]
    if coords.shape[:-2] != batch:
        raise InvalidShapeError(f"point batch {coords.shape[:-2]} does not match tensor batch {batch}")
    return batch, x.shape[x.ndim - d:]


def sample_points(x: Tensor, coords) -> Tensor:
    """Sample ``x`` (``batch + grid``) at ``coords`` (``batch + (m, d)``) -> ``batch + (m,)``."""
    x = np.asarray(x)
    batch, grid = _split(x, coords)
    cs = _Corners(grid, coords)
    xf = x.reshape((-1, cs.size)).astype(np.float64, copy=False)
    m = np.asarray(coords).shape[-2]
    out = np.zeros((xf.shape[0], m))
    for k in range(len(cs.bits)):
        vals = np.take_along_axis(xf, cs.flat[k].reshape(xf.shape[0], m), axis=1)
        out += cs.weight[k].reshape(out.shape) * vals
    return out.reshape(batch + (m,)).astype(x.dtype, copy=False)


def sample_points_backward(x: Tensor, coords, upstream: Tensor, need_x: bool = True):
    """Gradients of ``sum(upstream * sample_points(x, coords))``.

    Returns ``(grad_x, grad_coords)``; ``grad_x`` is None when ``need_x`` is
    False. ``grad_x`` is accumulated with ``np.bincount`` so the summation
    order is fixed.
    """
    x = np.asarray(x)
    coords = np.asarray(coords)
    batch, grid = _split(x, coords)
    cs = _Corners(grid, coords)
    nb = int(np.prod(batch)) if batch else 1
    m = coords.shape[-2]
    xf = x.reshape((nb, cs.size)).astype(np.float64, copy=False)
    up = np.asarray(upstream, dtype=np.float64).reshape(nb, m)

    grad_c = np.zeros((nb, m, cs.d))
    for k in range(len(cs.bits)):
        v = np.take_along_axis(xf, cs.flat[k].reshape(nb, m), axis=1)
        for a in range(cs.d):
            grad_c[..., a] += cs.axis_slope(k, a).reshape(nb, m) * v
    grad_c *= up[..., None]

    grad_x = None
    if need_x:
        offs = (np.arange(nb, dtype=np.int64) * cs.size)[:, None]
        idx = np.concatenate([(cs.flat[k].reshape(nb, m) + offs).ravel() for k in range(len(cs.bits))])
        wts = np.concatenate([(cs.weight[k].reshape(nb, m) * up).ravel() for k in range(len(cs.bits))])
        grad_x = np.bincount(idx, weights=wts, minlength=nb * cs.size)
        grad_x = grad_x.reshape(x.shape).astype(x.dtype, copy=False)
    return grad_x, grad_c.reshape(coords.shape).astype(np.result_type(coords.dtype, x.dtype), copy=False)


def bilinear_sample(x: Tensor, p) -> float:
    x = np.asarray(x)
    if x.ndim != 2:
        raise InvalidShapeError(f"bilinear_sample expects a 2-D tensor, got shape {x.shape}")
    return float(sample_points(x, np.asarray(p, dtype=np.float64).reshape(1, 2))[0])


def trilinear_sample(x: Tensor, p) -> float:
    x = np.asarray(x)
    if x.ndim != 3:
        raise InvalidShapeError(f"trilinear_sample expects a 3-D tensor, got shape {x.shape}")
    return float(sample_points(x, np.asarray(p, dtype=np.float64).reshape(1, 3))[0])


def trilinear_backward(x: Tensor, p, upstream: float):
    """Sparse gradient of ``upstream * trilinear_sample(x, p)``.

    Returns ``(grad_x, grad_p)`` where ``grad_x`` lists ``((i, j, k), value)``
    for the in-bounds lattice points with nonzero weight.
    """
    x = np.asarray(x)
    if x.ndim != 3:
        raise InvalidShapeError(f"trilinear_backward expects a 3-D tensor, got shape {x.shape}")
    pt = np.asarray(p, dtype=np.float64).reshape(1, 3)
    cs = _Corners(x.shape, pt)
    grad_x = []
    for k in range(len(cs.bits)):
        w = float(cs.weight[k][0])
        if w != 0.0:
            idx = tuple(int(i) for i in np.unravel_index(int(cs.flat[k][0]), x.shape))
            grad_x.append((idx, upstream * w))
    _, gc = sample_points_backward(x, pt, np.array([upstream]), need_x=False)
    return grad_x, tuple(float(g) for g in gc[0])
