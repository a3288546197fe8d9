"""Weight-distribution statistics and loss-surface sharpness."""

import logging
from dataclasses import dataclass

import numpy as np

from .core import population_variance
from .errors import NumericError
from .model import loss_and_grad
from .varreg import psi_grad

log = logging.getLogger(__name__)


def pooled_weights(params):
    entries = params.prunable()
    if not entries:
        raise ValueError("no prunable weights")
    return np.concatenate([e.value.ravel() for e in entries])


def model_variance(params):
    """Population variance of every raw prunable weight pooled together."""
    return population_variance(pooled_weights(params))


@dataclass
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray

    def rows(self):
        return [(float(a), float(b), int(c)) for a, b, c in
                zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts)]


def histogram(values, bin_edges, overflow=False):
    """Counts per ``[left, right)`` bin; the last bin also includes its right edge.

    Values outside the edges raise unless ``overflow`` adds open-ended
    bins at both ends.
    """
    edges = np.asarray(bin_edges, dtype=np.float64)
    if edges.ndim != 1 or edges.size < 2 or not np.all(np.diff(edges) > 0):
        raise ValueError("bin edges must be strictly increasing with at least two entries")
    x = np.asarray(values, dtype=np.float64).ravel()
    if overflow:
        edges = np.concatenate([[-np.inf], edges, [np.inf]])
    elif x.size and (x.min() < edges[0] or x.max() > edges[-1]):
        raise ValueError("values fall outside the bin edges")
    idx = np.searchsorted(edges, x, side="right") - 1
    idx[x == edges[-1]] = edges.size - 2
    counts = np.bincount(idx, minlength=edges.size - 1).astype(np.int64)
    return Histogram(edges, counts)


def weight_histogram(params, bin_edges, overflow=False):
    return histogram(pooled_weights(params), bin_edges, overflow=overflow)


def symmetric_edges(params, bins=50):
    """``bins`` equal-width edges over ``[-m, m]`` with ``m = max |w|``."""
    m = float(np.max(np.abs(pooled_weights(params))))
    if m == 0:
        m = 1.0
    return np.linspace(-m, m, bins + 1)


@dataclass(frozen=True)
class SharpnessProbe:
    delta: float = 0.0      # 0 -> scaled default
    max_iters: int = 200
    tol: float = 1e-6

    def __post_init__(self):
        if self.delta < 0 or not self.tol > 0 or self.max_iters < 1:
            raise ValueError("invalid sharpness probe")


def default_delta(w, v):
    nv = float(np.linalg.norm(v))
    return max(1e-3 * float(np.linalg.norm(w)) / nv, 1e-6)


def hvp_fn(grad_fn, w, v, delta=None):
    """Central-difference Hessian-vector product of the gradient map ``grad_fn``."""
    w = np.asarray(w, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if not np.linalg.norm(v) > 0:
        raise ValueError("direction must be nonzero")
    if delta is None or delta == 0:
        delta = default_delta(w, v)
    if not delta > 0:
        raise ValueError("delta must be positive")
    hv = (grad_fn(w + delta * v) - grad_fn(w - delta * v)) / (2.0 * delta)
    if not np.all(np.isfinite(hv)):
        raise NumericError("non-finite Hessian-vector product")
    return hv


def net_grad_fn(net, params, batch, loss_kind, reg=None, scale=1.0):
    """Flat float64 gradient map ``w -> grad(scale * (L + lam*psi))``.

    ``reg`` adds the penalty term when given (and its lam is nonzero).
    """
    p = params.copy(np.float64)

    def grad(w):
        p.set_flat(w)
        loss_and_grad(net, p, batch, loss_kind, scale=scale)
        if reg is not None and reg.lam != 0:
            rg = psi_grad(p, reg)
            for e in p:
                if e.name in rg:
                    e.grad += scale * reg.lam * rg[e.name]
        return p.flat_grad()

    return grad


def hvp(net, params, batch, v, delta=None, loss_kind="softmax_ce", reg=None):
    grad = net_grad_fn(net, params, batch, loss_kind, reg)
    return hvp_fn(grad, params.flat(), v, delta)


@dataclass
class EigenResult:
    value: float
    iterations: int
    converged: bool
    vector: np.ndarray


def power_iteration(matvec, dim, rng=None, max_iters=200, tol=1e-6, v0=None, max_bad=3):
    """Dominant eigenvalue (largest magnitude) of a symmetric operator.

    Returns the Rayleigh quotient once its relative change drops below
    ``tol``, or the last value with ``converged=False``.
    """
    v = np.asarray(v0, dtype=np.float64) if v0 is not None else rng.standard_normal(dim)
    v = v / np.linalg.norm(v)
    value = None
    bad = 0
    for it in range(1, max_iters + 1):
        hv = matvec(v)
        if not np.all(np.isfinite(hv)):
            bad += 1
            if bad >= max_bad:
                raise NumericError("repeated non-finite Hessian-vector products")
            v = rng.standard_normal(dim) if rng is not None else np.roll(v, 1)
            v /= np.linalg.norm(v)
            continue
        rq = float(np.dot(v, hv))
        norm = float(np.linalg.norm(hv))
        if norm == 0:
            return EigenResult(0.0, it, True, v)
        v = hv / norm
        if value is not None and abs(rq - value) <= tol * abs(rq):
            return EigenResult(rq, it, True, v)
        value = rq
    return EigenResult(value, max_iters, False, v)


def top_eigenvalue(grad_fn, w, probe, rng, v0=None):
    w = np.asarray(w, dtype=np.float64)
    res = power_iteration(lambda v: hvp_fn(grad_fn, w, v, probe.delta or None),
                          w.size, rng, probe.max_iters, probe.tol, v0=v0)
    if not res.converged:
        log.warning("power iteration stopped after %d iterations without converging", res.iterations)
    return res


def top_hessian_eigenvalue(net, params, batch, probe, rng, loss_kind="softmax_ce", reg=None, v0=None):
    """Largest-magnitude Hessian eigenvalue of the batch loss.

    The penalty's curvature is included only when ``reg`` is given.
    """
    grad = net_grad_fn(net, params, batch, loss_kind, reg)
    return top_eigenvalue(grad, params.flat(), probe, rng, v0=v0)


def ema(series, gamma):
    """``s0 = x0``, ``s_t = gamma*s_{t-1} + (1-gamma)*x_t``."""
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    xs = [float(x) for x in series]
    if not xs:
        raise ValueError("empty series")
    out = [xs[0]]
    for x in xs[1:]:
        out.append(gamma * out[-1] + (1 - gamma) * x)
    return out
