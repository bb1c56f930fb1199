"""sRGB gamma curves and signal-dependent Gaussian noise in linear space."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParamsError

ALPHA = 0.055
LINEAR_KNEE = 0.0031308
ENCODED_KNEE = 12.92 * LINEAR_KNEE

# sampling ranges for training noise
SIGMA_S_RANGE = (1e-4, 1e-2)
SIGMA_R_RANGE = (1e-3, 10 ** -1.5)


@dataclass(frozen=True)
class NoiseParams:
    sigma_s: float  # shot-noise coefficient: variance grows as sigma_s * intensity
    sigma_r: float  # read-noise standard deviation

    def __post_init__(self):
        for name in ("sigma_s", "sigma_r"):
            val = getattr(self, name)
            if not math.isfinite(val) or val < 0:
                raise InvalidParamsError(f"{name} must be finite and >= 0, got {val}")

    def variance(self, q):
        return self.sigma_s * q + self.sigma_r**2


def sample_noise_params(rng: np.random.Generator) -> NoiseParams:
    """Draw (sigma_s, sigma_r) uniformly from the training ranges."""
    s = rng.uniform(*SIGMA_S_RANGE)
    r = rng.uniform(*SIGMA_R_RANGE)
    return NoiseParams(float(s), float(r))


def gamma_correct(y):
    y = np.clip(np.asarray(y), 0.0, 1.0)
    upper = (1 + ALPHA) * np.power(np.maximum(y, LINEAR_KNEE), 1 / 2.4) - ALPHA
    return np.where(y <= LINEAR_KNEE, 12.92 * y, upper).astype(y.dtype, copy=False)


def gamma_correct_grad(y):
    """Derivative of ``gamma_correct``; zero where the input clamp is active."""
    y = np.asarray(y)
    inside = (y >= 0.0) & (y <= 1.0)
    upper = (1 + ALPHA) / 2.4 * np.power(np.maximum(y, LINEAR_KNEE), 1 / 2.4 - 1)
    g = np.where(y <= LINEAR_KNEE, 12.92, upper)
    return np.where(inside, g, 0.0).astype(y.dtype, copy=False)


def inverse_gamma(z):
    z = np.asarray(z)
    upper = np.power((np.maximum(z, ENCODED_KNEE) + ALPHA) / (1 + ALPHA), 2.4)
    return np.where(z <= ENCODED_KNEE, z / 12.92, upper).astype(z.dtype, copy=False)


def add_noise(x_linear, p: NoiseParams, rng: np.random.Generator):
    """``x + eps`` with ``eps ~ N(0, sigma_s * x + sigma_r**2)``; the result is not clipped."""
    if not isinstance(p, NoiseParams):
        p = NoiseParams(*p)
    x = np.asarray(x_linear)
    if p.sigma_s == 0 and p.sigma_r == 0:
        return x.copy()
    std = np.sqrt(np.maximum(p.variance(x.astype(np.float64)), 0.0))
    eps = rng.standard_normal(x.shape) * std
    return (x + eps).astype(x.dtype)


def estimate_noise_level(ref, p: NoiseParams):
    """Per-pixel noise std map ``sqrt(sigma_r**2 + sigma_s * ref)`` from the noisy reference."""
    if not isinstance(p, NoiseParams):
        p = NoiseParams(*p)
    ref = np.asarray(ref)
    var = p.sigma_r**2 + p.sigma_s * ref.astype(np.float64)
    return np.sqrt(np.maximum(var, 0.0)).astype(ref.dtype)
