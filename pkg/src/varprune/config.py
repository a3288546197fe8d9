"""Experiment configuration: flat ``key = value`` text with dotted keys.

Values are JSON literals (numbers, ``"strings"``, ``[lists]``,
``true``/``false``); a bare word is read as a string. ``#`` starts a
comment. Unknown keys are rejected.

Example::

    model.layers = [2, 32, 32, 2]
    data.kind = two_moons
    reg.lambda = [0, 1e-4]
    prune.rates = [0.5, 0.9]
    seeds = [0, 1, 2]
"""

import json
from dataclasses import dataclass, field

from .errors import ConfigError
from .model import mlp
from .trainer import OPTIMIZERS, SCHEDULES, OptimConfig, Schedule
from .varreg import RegConfig, include_all

DEFAULTS = {
    "model.layers": [2, 32, 32, 2],
    "model.activation": "relu",
    "data.kind": "two_moons",
    "data.n": 1000,
    "data.n_test": 1000,
    "data.noise": 0.1,
    "data.k": 3,
    "data.spread": 0.5,
    "data.grid_w": 8,
    "data.grid_h": 8,
    "data.n_samples": 200,
    "train.eta0": 0.1,
    "train.momentum": 0.9,
    "train.batch_size": 32,
    "train.epochs": 200,
    "train.optimizer": "sgd",
    "train.rho": 0.5,
    "train.schedule": "dynamic_tuning",
    "train.lr_factor": 0.5,
    "train.lr_period": 50,
    "train.lr_c": 0.1,
    "reg.lambda": [0.0],
    "reg.r": 1e-8,
    "reg.epsilon": 1e-8,
    "reg.include": "prunable",
    "prune.rates": [],
    "prune.scope": "global",
    "prune.skew_layer": "",
    "prune.skew": 0.0,
    "diag.hist_bins": 50,
    "seeds": [0],
    "output_dir": "out",
    "method": "",
}

DATA_KINDS = ("two_moons", "blobs", "shapes")


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_config_text(text):
    """Parse config text into a ``{key: value}`` dict (no validation beyond syntax)."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, rhs = line.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key", key=key)
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key", key=key)
        values[key] = _parse_value(rhs.strip())
    return values


def _num(v, key, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"expected a number, got {v!r}", key=key)
    if integer and (not float(v).is_integer()):
        raise ConfigError(f"expected an integer, got {v!r}", key=key)
    return int(v) if integer else float(v)


def _list(v, key):
    return v if isinstance(v, list) else [v]


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=lambda: dict(DEFAULTS))

    def __getitem__(self, key):
        return self.values[key]

    @property
    def layers(self):
        return self.values["model.layers"]

    @property
    def lambdas(self):
        return self.values["reg.lambda"]

    @property
    def seeds(self):
        return self.values["seeds"]

    @property
    def rates(self):
        return self.values["prune.rates"]

    @property
    def loss_kind(self):
        return "bce" if self.values["data.kind"] == "shapes" else "softmax_ce"

    @property
    def method(self):
        return self.values["method"] or self.values["train.optimizer"]

    def net(self):
        return mlp(self.layers, self.values["model.activation"])

    def reg(self, lam):
        include = include_all if self.values["reg.include"] == "all" else None
        return RegConfig(lam=lam, r=self.values["reg.r"], epsilon=self.values["reg.epsilon"], include=include)

    def schedule(self):
        v = self.values
        return Schedule(v["train.schedule"], factor=v["train.lr_factor"], period=v["train.lr_period"], c=v["train.lr_c"])

    def optim(self, seed, lam):
        v = self.values
        return OptimConfig(eta0=v["train.eta0"], momentum=v["train.momentum"], batch_size=v["train.batch_size"],
                           epochs=v["train.epochs"], optimizer=v["train.optimizer"], rho=v["train.rho"],
                           schedule=self.schedule(), seed=seed, reg=self.reg(lam), loss_kind=self.loss_kind)

    def with_overrides(self, **kw):
        """Copy with dotted-key overrides, e.g. ``with_overrides(**{"train.epochs": 5})``."""
        values = dict(self.values)
        values.update(kw)
        return validate(values)


def _io_dims(v):
    kind = v["data.kind"]
    if kind == "shapes":
        pixels = v["data.grid_w"] * v["data.grid_h"]
        return pixels, pixels
    return 2, (2 if kind == "two_moons" else v["data.k"])


def validate(values):
    """Fill defaults, coerce types and check every invariant; returns an ExperimentConfig."""
    v = dict(DEFAULTS)
    for key in values:
        if key not in DEFAULTS:
            raise ConfigError("unknown key", key=key)
    v.update(values)

    for key in ("data.n", "data.n_test", "data.k", "data.grid_w", "data.grid_h", "data.n_samples",
                "train.batch_size", "train.epochs", "train.lr_period", "diag.hist_bins"):
        v[key] = _num(v[key], key, integer=True)
    for key in ("data.noise", "data.spread", "train.eta0", "train.momentum", "train.rho", "train.lr_factor",
                "train.lr_c", "reg.r", "reg.epsilon", "prune.skew"):
        v[key] = _num(v[key], key)
    for key in ("model.activation", "data.kind", "train.optimizer", "train.schedule", "reg.include",
                "prune.scope", "prune.skew_layer", "output_dir", "method"):
        if not isinstance(v[key], str):
            raise ConfigError(f"expected a string, got {v[key]!r}", key=key)

    layers = _list(v["model.layers"], "model.layers")
    if len(layers) < 2:
        raise ConfigError("need at least input and output sizes", key="model.layers")
    v["model.layers"] = [_num(x, "model.layers", integer=True) for x in layers]
    if min(v["model.layers"]) < 1:
        raise ConfigError("layer sizes must be positive", key="model.layers")
    if v["model.activation"] not in ("relu", "tanh", "sigmoid", "identity"):
        raise ConfigError(f"unknown activation {v['model.activation']!r}", key="model.activation")

    if v["data.kind"] not in DATA_KINDS:
        raise ConfigError(f"unknown data kind {v['data.kind']!r}", key="data.kind")
    if v["data.n"] < 2:
        raise ConfigError("need at least 2 examples", key="data.n")
    if v["data.n_test"] < 1:
        raise ConfigError("need at least 1 test example", key="data.n_test")
    if v["data.noise"] < 0:
        raise ConfigError("must be nonnegative", key="data.noise")
    if v["data.spread"] < 0:
        raise ConfigError("must be nonnegative", key="data.spread")
    if v["data.k"] < 2:
        raise ConfigError("need at least 2 classes", key="data.k")
    if v["data.grid_w"] < 2 or v["data.grid_h"] < 2:
        raise ConfigError("grid must be at least 2x2", key="data.grid_w" if v["data.grid_w"] < 2 else "data.grid_h")
    if v["data.n_samples"] < 1:
        raise ConfigError("need at least 1 sample", key="data.n_samples")
    n_in, n_out = _io_dims(v)
    if v["model.layers"][0] != n_in or v["model.layers"][-1] != n_out:
        raise ConfigError(f"sizes must start at {n_in} and end at {n_out} for data.kind={v['data.kind']}",
                          key="model.layers")

    if not v["train.eta0"] > 0:
        raise ConfigError("must be positive", key="train.eta0")
    if not 0 <= v["train.momentum"] < 1:
        raise ConfigError("must lie in [0, 1)", key="train.momentum")
    if v["train.batch_size"] < 1:
        raise ConfigError("must be at least 1", key="train.batch_size")
    if v["train.epochs"] < 1:
        raise ConfigError("must be at least 1", key="train.epochs")
    if v["train.optimizer"] not in OPTIMIZERS:
        raise ConfigError(f"unknown optimizer {v['train.optimizer']!r}", key="train.optimizer")
    if v["train.optimizer"] == "sam" and not v["train.rho"] > 0:
        raise ConfigError("must be positive for SAM", key="train.rho")
    if v["train.schedule"] not in SCHEDULES:
        raise ConfigError(f"unknown schedule {v['train.schedule']!r}", key="train.schedule")
    for key in ("train.lr_factor", "train.lr_c"):
        if not v[key] > 0:
            raise ConfigError("must be positive", key=key)
    if v["train.lr_period"] < 1:
        raise ConfigError("must be at least 1", key="train.lr_period")

    lams = [_num(x, "reg.lambda") for x in _list(v["reg.lambda"], "reg.lambda")]
    if not lams:
        raise ConfigError("need at least one value", key="reg.lambda")
    if min(lams) < 0:
        raise ConfigError("must be nonnegative", key="reg.lambda")
    v["reg.lambda"] = lams
    for key in ("reg.r", "reg.epsilon"):
        if not v[key] > 0:
            raise ConfigError("must be positive", key=key)
    if v["reg.include"] not in ("prunable", "all"):
        raise ConfigError("must be 'prunable' or 'all'", key="reg.include")

    rates = [_num(x, "prune.rates") for x in _list(v["prune.rates"], "prune.rates")]
    for p in rates:
        if not 0 <= p < 1:
            raise ConfigError(f"rate {p} outside [0, 1)", key="prune.rates")
    v["prune.rates"] = rates
    if v["prune.scope"] not in ("global", "per_layer"):
        raise ConfigError("must be 'global' or 'per_layer'", key="prune.scope")
    if v["prune.skew"] != 0:
        if v["prune.scope"] != "per_layer":
            raise ConfigError("skew requires prune.scope = per_layer", key="prune.skew")
        n_dense = len(v["model.layers"]) - 1
        if v["prune.skew_layer"] not in {f"dense{i}.weight" for i in range(n_dense)}:
            raise ConfigError(f"unknown layer {v['prune.skew_layer']!r}", key="prune.skew_layer")

    seeds = [_num(s, "seeds", integer=True) for s in _list(v["seeds"], "seeds")]
    if not seeds:
        raise ConfigError("need at least one seed", key="seeds")
    if min(seeds) < 0 or max(seeds) >= 2**64:
        raise ConfigError("seeds must be unsigned 64-bit integers", key="seeds")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("duplicate seeds", key="seeds")
    v["seeds"] = seeds
    if v["diag.hist_bins"] < 1:
        raise ConfigError("must be at least 1", key="diag.hist_bins")
    if not v["output_dir"]:
        raise ConfigError("must not be empty", key="output_dir")
    return ExperimentConfig(v)


def load_config(path):
    with open(path, encoding="utf-8") as f:
        return validate(parse_config_text(f.read()))


def format_config(cfg):
    """Render a config back to text; ``validate(parse_config_text(...))`` round-trips it."""
    return "".join(f"{k} = {json.dumps(cfg.values[k])}\n" for k in DEFAULTS)
