"""Seeded synthetic datasets: two moons, Gaussian blobs and shape masks."""

import math

import numpy as np

from .core import DTYPE
from .errors import ConfigError
from .model import Batch


def _balanced_labels(n, k):
    # sizes differ by at most one
    return np.arange(n) % k


def gen_two_moons(n, noise, rng):
    """Two interleaved half circles; class 0 is the upper moon."""
    if n < 2:
        raise ConfigError("need at least two points", key="data.n")
    if noise < 0:
        raise ConfigError("noise must be nonnegative", key="data.noise")
    y = _balanced_labels(n, 2)
    t = rng.uniform(0.0, math.pi, n)
    x = np.where(y == 0, np.cos(t), 1.0 - np.cos(t))
    z = np.where(y == 0, np.sin(t), 0.5 - np.sin(t))
    X = np.stack([x, z], axis=1)
    if noise > 0:
        X = X + noise * rng.standard_normal(X.shape)
    return Batch(X.astype(DTYPE), y.astype(np.int64), {"kind": "two_moons"})


def gen_blobs(n, k, spread, rng, radius=3.0):
    """``k`` isotropic Gaussian clusters with centres on a circle of ``radius``."""
    if n < 2 or k < 2:
        raise ConfigError("need n >= 2 and k >= 2", key="data.k" if k < 2 else "data.n")
    if spread < 0:
        raise ConfigError("spread must be nonnegative", key="data.spread")
    y = _balanced_labels(n, k)
    phase = rng.uniform(0.0, 2 * math.pi)
    ang = phase + 2 * math.pi * np.arange(k) / k
    centers = radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    X = centers[y] + spread * rng.standard_normal((n, 2))
    return Batch(X.astype(DTYPE), y.astype(np.int64), {"kind": "blobs", "centers": centers})


def gen_shapes(grid_w, grid_h, n, rng, noise=0.3):
    """Noisy images containing 1-3 random rectangles or disks, with their masks.

    Returns a :class:`Batch` whose inputs are flattened images and whose
    targets are flattened binary masks; ``meta["shape"]`` is ``(h, w)``.
    """
    if grid_w < 2 or grid_h < 2:
        raise ConfigError("grid must be at least 2x2", key="data.grid_w" if grid_w < 2 else "data.grid_h")
    if n < 1:
        raise ConfigError("need at least one sample", key="data.n_samples")
    yy, xx = np.mgrid[0:grid_h, 0:grid_w]
    masks = np.zeros((n, grid_h, grid_w), dtype=np.uint8)
    for i in range(n):
        for _ in range(int(rng.integers(1, 4))):
            if rng.random() < 0.5:
                w = int(rng.integers(1, max(2, grid_w // 2) + 1))
                h = int(rng.integers(1, max(2, grid_h // 2) + 1))
                x0 = int(rng.integers(0, grid_w - w + 1))
                y0 = int(rng.integers(0, grid_h - h + 1))
                masks[i, y0:y0 + h, x0:x0 + w] = 1
            else:
                r = rng.uniform(1.0, max(1.5, min(grid_w, grid_h) / 4))
                cx = rng.uniform(0, grid_w - 1)
                cy = rng.uniform(0, grid_h - 1)
                masks[i][(xx - cx) ** 2 + (yy - cy) ** 2 <= r * r] = 1
    images = masks.astype(np.float64) + noise * rng.standard_normal(masks.shape)
    return Batch(images.reshape(n, -1).astype(DTYPE), masks.reshape(n, -1),
                 {"kind": "shapes", "shape": (grid_h, grid_w)})
