"""Variance amplifying penalty and its closed-form gradient.

For one layer with weights ``w`` (flattened, ``n`` values)::

    s_i   = sqrt(w_i**2 + r)
    var   = mean((s - mean(s))**2)
    term  = 1 / (var + eps)
    dterm/dw_i = -(2/n) * (s_i - mean(s)) * (w_i / s_i) / (var + eps)**2

The mean's own derivative drops out because the deviations sum to zero.
The penalty is the sum of ``term`` over every included tensor.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class RegConfig:
    lam: float = 0.0
    r: float = 1e-8
    epsilon: float = 1e-8
    # entry -> bool; None means "prunable entries only"
    include: Optional[Callable] = None

    def __post_init__(self):
        if not self.lam >= 0:
            raise ConfigError("lambda must be nonnegative", key="reg.lambda")
        if not self.r > 0:
            raise ConfigError("r must be positive", key="reg.r")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive", key="reg.epsilon")

    def includes(self, entry):
        return entry.prunable if self.include is None else bool(self.include(entry))


def include_all(entry):
    return True


def smoothed_abs(w, r=1e-8):
    if not r > 0:
        raise ValueError("r must be positive")
    w = np.asarray(w, dtype=np.float64)
    out = np.sqrt(w * w + r)
    return float(out) if out.ndim == 0 else out


def layer_term(w, r=1e-8, epsilon=1e-8):
    s = np.sqrt(np.square(np.asarray(w, dtype=np.float64).ravel()) + r)
    d = s - s.mean()
    var = np.dot(d, d) / s.size
    return 1.0 / (var + epsilon)


def layer_term_grad(w, r=1e-8, epsilon=1e-8):
    w = np.asarray(w, dtype=np.float64)
    flat = w.ravel()
    n = flat.size
    s = np.sqrt(flat * flat + r)
    d = s - s.mean()
    var = np.dot(d, d) / n
    g = -(2.0 / n) * d * (flat / s) / (var + epsilon) ** 2
    return g.reshape(w.shape)


def layer_term_grad_rows(W, r=1e-8, epsilon=1e-8):
    """``layer_term_grad`` applied to each row of ``W`` independently."""
    W = np.asarray(W, dtype=np.float64)
    n = W.shape[1]
    s = np.sqrt(W * W + r)
    d = s - s.mean(axis=1, keepdims=True)
    var = np.einsum("ij,ij->i", d, d) / n
    return -(2.0 / n) * d * (W / s) / ((var + epsilon) ** 2)[:, None]


def _included(params, cfg):
    entries = [e for e in params if cfg.includes(e)]
    if not entries:
        raise ConfigError("no parameter tensors are included in the penalty", key="reg.include")
    return entries


def psi(params, cfg):
    return float(sum(layer_term(e.value, cfg.r, cfg.epsilon) for e in _included(params, cfg)))


def psi_grad(params, cfg):
    """Gradient of the penalty as ``{name: float64 array}`` for included entries.

    Excluded entries are absent (their gradient is zero).
    """
    return {e.name: layer_term_grad(e.value, cfg.r, cfg.epsilon) for e in _included(params, cfg)}


def psi_grad_full(params, cfg):
    """Gradient for every entry, zeros for excluded ones, in entry order."""
    g = psi_grad(params, cfg)
    return [g.get(e.name, np.zeros(e.value.shape)) for e in params]
