"""Small feed-forward networks with hand-derived backpropagation.

A network is a list of :class:`LayerSpec`. Dense layers compute
``X @ W + b`` with ``W`` stored as ``(in_dim, out_dim)``. All forward and
backward arithmetic runs in the dtype of the parameters, so a float64 copy
of a :class:`ParamSet` gives a float64 network (used by gradient checks).
"""

from dataclasses import dataclass, field

import numpy as np

from .core import DTYPE, central_diff_grad, check_finite, draw_normal
from .errors import ConfigError, DimensionError

ACTIVATIONS = ("relu", "tanh", "sigmoid", "identity")
LOSS_KINDS = ("softmax_ce", "bce")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_dim: int = 0
    out_dim: int = 0
    activation: str = "identity"

    def __post_init__(self):
        if self.kind == "dense":
            if self.in_dim < 1 or self.out_dim < 1:
                raise ConfigError("dense layer extents must be positive", key="model.layers")
        elif self.kind == "activation":
            if self.activation not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {self.activation!r}", key="model.activation")
        else:
            raise ConfigError(f"unknown layer kind {self.kind!r}", key="model.layers")


def dense(in_dim, out_dim):
    return LayerSpec("dense", in_dim, out_dim)


def act(name):
    return LayerSpec("activation", activation=name)


def mlp(sizes, activation="relu"):
    """Dense stack ``sizes[0] -> ... -> sizes[-1]`` with no final activation."""
    if len(sizes) < 2:
        raise ConfigError("an MLP needs at least input and output sizes", key="model.layers")
    net = []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        net.append(dense(a, b))
        if i < len(sizes) - 2:
            net.append(act(activation))
    validate_net(net)
    return net


def validate_net(net):
    dims = [layer for layer in net if layer.kind == "dense"]
    if not dims:
        raise ConfigError("network has no dense layer", key="model.layers")
    for a, b in zip(dims[:-1], dims[1:]):
        if a.out_dim != b.in_dim:
            raise ConfigError(f"dense dims do not chain: {a.out_dim} -> {b.in_dim}", key="model.layers")


def input_dim(net):
    return next(layer.in_dim for layer in net if layer.kind == "dense")


def output_dim(net):
    return [layer.out_dim for layer in net if layer.kind == "dense"][-1]


@dataclass
class Entry:
    name: str
    value: np.ndarray
    grad: np.ndarray
    prunable: bool


class ParamSet:
    """Ordered named tensors with gradient buffers and prunable flags."""

    def __init__(self, entries=()):
        self.entries = []
        self._index = {}
        for e in entries:
            self.add(e.name, e.value, prunable=e.prunable, grad=e.grad)

    def add(self, name, value, prunable=False, grad=None):
        if name in self._index:
            raise ValueError(f"duplicate parameter name {name!r}")
        value = np.asarray(value)
        if grad is None:
            grad = np.zeros_like(value)
        elif grad.shape != value.shape:
            raise DimensionError(f"grad shape {grad.shape} != value shape {value.shape} for {name}")
        self._index[name] = len(self.entries)
        self.entries.append(Entry(name, value, grad, bool(prunable)))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __contains__(self, name):
        return name in self._index

    def __getitem__(self, name):
        return self.entries[self._index[name]]

    def names(self):
        return [e.name for e in self.entries]

    def prunable(self):
        return [e for e in self.entries if e.prunable]

    @property
    def size(self):
        return sum(e.value.size for e in self.entries)

    def copy(self, dtype=None):
        out = ParamSet()
        for e in self.entries:
            v = e.value.astype(dtype) if dtype is not None else e.value.copy()
            out.add(e.name, v, prunable=e.prunable, grad=np.zeros_like(v))
        return out

    def zero_grad(self):
        for e in self.entries:
            e.grad[...] = 0

    def flat(self, dtype=np.float64):
        if not self.entries:
            return np.zeros(0, dtype=dtype)
        return np.concatenate([e.value.ravel() for e in self.entries]).astype(dtype)

    def flat_grad(self, dtype=np.float64):
        if not self.entries:
            return np.zeros(0, dtype=dtype)
        return np.concatenate([e.grad.ravel() for e in self.entries]).astype(dtype)

    def set_flat(self, vec):
        vec = np.asarray(vec)
        if vec.size != self.size:
            raise DimensionError(f"flat vector has {vec.size} values, expected {self.size}")
        pos = 0
        for e in self.entries:
            n = e.value.size
            e.value[...] = vec[pos:pos + n].reshape(e.value.shape)
            pos += n

    def equal(self, other):
        """Bitwise equality of names, flags, shapes, dtypes and values."""
        if self.names() != other.names():
            return False
        for a, b in zip(self.entries, other.entries):
            if a.prunable != b.prunable or a.value.dtype != b.value.dtype or a.value.shape != b.value.shape:
                return False
            if a.value.tobytes() != b.value.tobytes():
                return False
        return True


@dataclass
class Batch:
    inputs: np.ndarray
    targets: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.inputs) < 1:
            raise ValueError("a batch needs at least one example")
        if len(self.inputs) != len(self.targets):
            raise DimensionError("inputs and targets differ in length")

    def __len__(self):
        return len(self.inputs)

    def subset(self, idx):
        return Batch(self.inputs[idx], self.targets[idx], self.meta)


def _dense_names(i):
    return f"dense{i}.weight", f"dense{i}.bias"


def init_params(net, rng, dtype=DTYPE):
    """Fan-in normal weights ``N(0, sqrt(2/in_dim))`` and zero biases."""
    validate_net(net)
    params = ParamSet()
    i = 0
    for layer in net:
        if layer.kind != "dense":
            continue
        wname, bname = _dense_names(i)
        std = np.sqrt(2.0 / layer.in_dim)
        w = draw_normal(rng, layer.in_dim * layer.out_dim, 0.0, std, dtype=dtype)
        params.add(wname, w.reshape(layer.in_dim, layer.out_dim), prunable=True)
        params.add(bname, np.zeros(layer.out_dim, dtype=dtype), prunable=False)
        i += 1
    return params


def _activate(name, z):
    if name == "relu":
        return np.maximum(z, 0)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return _sigmoid(z)
    return z


def _activation_grad(name, z, a, upstream):
    if name == "relu":
        return upstream * (z > 0)
    if name == "tanh":
        return upstream * (1 - a * a)
    if name == "sigmoid":
        return upstream * a * (1 - a)
    return upstream


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1 / (1 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1 + ez)
    return out


def _run(net, params, X):
    dtype = params.entries[0].value.dtype if len(params) else DTYPE
    h = np.asarray(X, dtype=dtype)
    if h.ndim != 2:
        raise DimensionError(f"inputs must be a matrix, got rank {h.ndim}")
    if h.shape[1] != input_dim(net):
        raise DimensionError(f"input has {h.shape[1]} features, network expects {input_dim(net)}")
    cache = []
    i = 0
    for layer in net:
        if layer.kind == "dense":
            wname, bname = _dense_names(i)
            W = params[wname].value
            b = params[bname].value
            if W.shape != (layer.in_dim, layer.out_dim):
                raise DimensionError(f"{wname} has shape {W.shape}, layer expects {(layer.in_dim, layer.out_dim)}")
            cache.append((layer, h, i))
            h = h @ W + b
            i += 1
        else:
            z = h
            h = _activate(layer.activation, z)
            cache.append((layer, z, h))
    return h, cache


def forward(net, params, X):
    out, _ = _run(net, params, X)
    return out


def _loss_and_dout(out, targets, loss_kind):
    n = out.shape[0]
    o = out.astype(np.float64)
    if loss_kind == "softmax_ce":
        t = np.asarray(targets).astype(np.int64).ravel()
        if t.size != n:
            raise DimensionError("one class index per example expected")
        if t.min() < 0 or t.max() >= o.shape[1]:
            raise ValueError("class index out of range")
        shifted = o - o.max(axis=1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=1))
        per = logz - shifted[np.arange(n), t]
        probs = np.exp(shifted - logz[:, None])
        probs[np.arange(n), t] -= 1.0
        return per.sum() / n, probs / n
    if loss_kind == "bce":
        y = np.asarray(targets, dtype=np.float64).reshape(o.shape)
        # softplus(s) - y*s, evaluated stably
        per = np.maximum(o, 0) - o * y + np.log1p(np.exp(-np.abs(o)))
        per_sample = per.mean(axis=1)
        d = (_sigmoid(o) - y) / (n * o.shape[1])
        return per_sample.sum() / n, d
    raise ValueError(f"unknown loss kind {loss_kind!r}")


def loss_value(net, params, batch, loss_kind):
    out = forward(net, params, batch.inputs)
    check_finite(out, "network output")
    loss, _ = _loss_and_dout(out, batch.targets, loss_kind)
    return float(loss)


def loss_and_grad(net, params, batch, loss_kind, scale=1.0):
    """Mean loss over ``batch``; exact gradients are written to ``params``.

    ``scale`` multiplies both the loss and the gradients.
    """
    out, cache = _run(net, params, batch.inputs)
    check_finite(out, "network output")
    loss, dout = _loss_and_dout(out, batch.targets, loss_kind)
    g = (scale * dout).astype(out.dtype)
    for layer, a, b in reversed(cache):
        if layer.kind == "dense":
            h_in, i = a, b
            wname, bname = _dense_names(i)
            W = params[wname].value
            params[wname].grad[...] = h_in.T @ g
            params[bname].grad[...] = g.sum(axis=0)
            g = g @ W.T
        else:
            g = _activation_grad(layer.activation, a, b, g)
    return float(scale * loss)


def finite_diff_grad(net, params, batch, loss_kind, h=1e-3):
    """Central-difference gradients, one array per entry, in float64."""
    p64 = params.copy(np.float64)
    w0 = p64.flat()

    def f(w):
        p64.set_flat(w)
        return loss_value(net, p64, batch, loss_kind)

    g = central_diff_grad(f, w0, h)
    out = []
    pos = 0
    for e in params.entries:
        out.append(g[pos:pos + e.value.size].reshape(e.value.shape))
        pos += e.value.size
    return out


def predict_labels(net, params, X):
    return np.argmax(forward(net, params, X), axis=1)


def predict_masks(net, params, X, threshold=0.5):
    """Per-pixel binary predictions; a score ``s`` is foreground when sigmoid(s) > threshold."""
    scores = forward(net, params, X).astype(np.float64)
    return (_sigmoid(scores) > threshold).astype(np.uint8)
