"""Slow reference implementations used to check the vectorised code."""
import itertools

import numpy as np


def hat(d):
    return max(0.0, 1.0 - abs(d))


def naive_sample(x, p):
    """Sum over every lattice point of x times the product of hat weights."""
    total = 0.0
    for idx in itertools.product(*(range(s) for s in x.shape)):
        w = 1.0
        for a, i in enumerate(idx):
            w *= hat(p[a] - i)
        if w:
            total += float(x[idx]) * w
    return total


def naive_conv(x, kernel, bias):
    """Zero-padded 3x3 cross-correlation, channels-first, by explicit loops."""
    cin, h, w = x.shape
    cout = kernel.shape[0]
    out = np.zeros((cout, h, w))
    for o in range(cout):
        for i in range(h):
            for j in range(w):
                acc = float(bias[o])
                for c in range(cin):
                    for di in range(3):
                        for dj in range(3):
                            u, v = i + di - 1, j + dj - 1
                            if 0 <= u < h and 0 <= v < w:
                                acc += float(kernel[o, c, di, dj]) * float(x[c, u, v])
                out[o, i, j] = acc
    return out


def naive_aggregate(x, points, offsets, weights):
    """Per-pixel loop over the deformed grid; x is (h, w) or (h, w, f)."""
    h, w = x.shape[:2]
    out = np.zeros((h, w))
    for u in range(h):
        for v in range(w):
            for i, pt in enumerate(points):
                base = [u, v] + ([x.shape[2] // 2] if x.ndim == 3 else [])
                p = [b + q + o for b, q, o in zip(base, pt, offsets[u, v, i])]
                out[u, v] += naive_sample(x, p) * weights[u, v, i]
    return out


def central_diff(f, x, eps):
    """Central finite-difference gradient of scalar f at array x (float64)."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        fp = f(x)
        x[i] = old - eps
        fm = f(x)
        x[i] = old
        g[i] = (fp - fm) / (2 * eps)
    return g


def rel_err(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))
