"""Dense arithmetic, seeded randomness and the variance primitive.

Tensors are plain numpy arrays. Parameters and data are float32; variance
and loss reductions are accumulated in float64.

Randomness contract: every generator is ``numpy.random.Generator`` over
``PCG64`` seeded from a ``SeedSequence(seed)``. PCG64 and the
SeedSequence mixing are fixed by numpy and platform independent, so a
given seed yields the same stream everywhere.
"""

import numpy as np

from .errors import DimensionError, NumericError

DTYPE = np.float32


def make_rng(seed, *stream):
    """Return a PCG64 generator for ``seed``.

    Extra integers select an independent sub-stream, e.g. ``make_rng(7, 1)``
    for shuffling and ``make_rng(7, 0)`` for initialization.
    """
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not 0 <= seed < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    entropy = [int(seed), *map(int, stream)] if stream else int(seed)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def draw_normal(rng, n, mean=0.0, std=1.0, dtype=DTYPE):
    if std < 0:
        raise ValueError("std must be nonnegative")
    z = rng.standard_normal(n)
    return (mean + std * z).astype(dtype)


def matmul(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects matrices, got ranks {a.ndim} and {b.ndim}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner extents differ: {a.shape} @ {b.shape}")
    return a @ b


def population_variance(v):
    """Mean squared deviation with 1/n normalization (float64 accumulation)."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("variance of an empty vector is undefined")
    mean = v.sum() / v.size
    d = v - mean
    return float(np.dot(d, d) / v.size)


def check_finite(x, what="value", step=None):
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite {what}", step=step)
    return x


def central_diff_grad(f, x, h):
    """Central-difference gradient of scalar ``f`` at ``x`` (float64)."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.array(x, dtype=np.float64)
    g = np.empty_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return g


def max_rel_error(a, b, floor=1e-8, scale_floor=0.0):
    """Largest per-coordinate ``|a-b| / max(|a|, |b|, floor, scale_floor * max|b|)``.

    ``scale_floor`` keeps coordinates whose true value is roundoff-small
    (relative to the rest of the tensor) from dominating the ratio.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    lo = max(floor, scale_floor * float(np.max(np.abs(b))))
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), lo)
    return float(np.max(np.abs(a - b) / denom))
