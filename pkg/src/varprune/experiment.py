"""End-to-end runs: train per (lambda, seed), save, then prune from the saved checkpoint."""

import os
from dataclasses import dataclass

import numpy as np

from . import io
from .core import make_rng
from .data import gen_blobs, gen_shapes, gen_two_moons
from .diagnostics import model_variance, symmetric_edges, weight_histogram
from .metrics import accuracy, segmentation_scores
from .model import predict_labels, predict_masks
from .pruner import PruneSpec, apply_mask, build_mask, per_layer_groups
from .trainer import train

TRAIN_STREAM = 10
TEST_STREAM = 11


@dataclass
class ResultRow:
    method: str
    lam: float
    seed: int
    prune_rate: float
    metric_name: str
    metric_value: float
    var_w: float
    dense_metric: float

    def as_tuple(self):
        return (self.method, self.lam, self.seed, self.prune_rate, self.metric_name,
                self.metric_value, self.var_w, self.dense_metric)


def make_datasets(cfg, seed):
    """(train, test) batches for ``seed``; each split draws from its own stream."""
    v = cfg.values
    out = []
    for stream, n in ((TRAIN_STREAM, v["data.n"]), (TEST_STREAM, v["data.n_test"])):
        rng = make_rng(seed, stream)
        kind = v["data.kind"]
        if kind == "two_moons":
            out.append(gen_two_moons(n, v["data.noise"], rng))
        elif kind == "blobs":
            out.append(gen_blobs(n, v["data.k"], v["data.spread"], rng))
        else:
            out.append(gen_shapes(v["data.grid_w"], v["data.grid_h"], v["data.n_samples"], rng))
    return tuple(out)


def evaluate(cfg, net, params, data):
    """Ordered ``{metric_name: value}`` on ``data``."""
    if cfg.loss_kind == "bce":
        h, w = data.meta["shape"]
        pred = predict_masks(net, params, data.inputs).reshape(-1, h, w)
        return segmentation_scores(pred, data.targets.reshape(-1, h, w))
    return {"accuracy": accuracy(predict_labels(net, params, data.inputs), data.targets)}


def _primary_metric(cfg, net, data):
    if cfg.loss_kind == "bce":
        from .metrics import f1_binary
        h, w = data.meta["shape"]
        gt = data.targets.reshape(-1, h, w)

        def fn(params):
            pred = predict_masks(net, params, data.inputs).reshape(-1, h, w)
            return float(np.mean([f1_binary(p, g) for p, g in zip(pred, gt)]))
        return fn
    return lambda params: accuracy(predict_labels(net, params, data.inputs), data.targets)


def cell_dir(root, method, lam, seed):
    return os.path.join(root, f"{method}_lam{lam!r}_seed{seed}")


def train_cell(cfg, lam, seed, out_dir):
    """Train one (lambda, seed) cell and write its checkpoint, log and histogram."""
    net = cfg.net()
    train_data, test_data = make_datasets(cfg, seed)
    params, record = train(net, train_data, cfg.optim(seed, lam), eval_fn=_primary_metric(cfg, net, test_data))
    os.makedirs(out_dir, exist_ok=True)
    io.save_checkpoint(params, os.path.join(out_dir, "checkpoint.varw"))
    io.write_train_log(os.path.join(out_dir, "train_log.csv"), record)
    edges = symmetric_edges(params, cfg["diag.hist_bins"])
    io.write_histogram(os.path.join(out_dir, "histogram.csv"), weight_histogram(params, edges))
    return params, record


def prune_mask(cfg, params, rate):
    if cfg["prune.scope"] == "global":
        return build_mask(params, PruneSpec(rate))
    groups = per_layer_groups(params, cfg["prune.skew_layer"] or None, cfg["prune.skew"])
    return build_mask(params, PruneSpec(rate, groups))


def prune_sweep(cfg, checkpoint, rates, eval_data, lam=0.0, seed=0, mask_dir=None):
    """One-shot prune the checkpointed weights at each rate and evaluate.

    ``checkpoint`` is a path or a ParamSet. Rows come back sorted by rate,
    one per metric. Masks are written to ``mask_dir`` when given.
    """
    params = io.load_checkpoint(checkpoint) if isinstance(checkpoint, (str, os.PathLike)) else checkpoint
    net = cfg.net()
    dense = evaluate(cfg, net, params, eval_data)
    var_w = model_variance(params)
    rows = []
    for rate in sorted(rates):
        mask = prune_mask(cfg, params, rate)
        if mask_dir is not None:
            io.save_mask(mask, os.path.join(mask_dir, f"mask_p{rate!r}.varm"))
        scores = evaluate(cfg, net, apply_mask(params, mask), eval_data)
        for name, value in scores.items():
            rows.append(ResultRow(cfg.method, lam, seed, rate, name, value, var_w, dense[name]))
    return rows


def run_experiment(cfg, out_dir=None):
    """Train every (lambda, seed) cell, prune each saved checkpoint, write ``sweep.csv``.

    A file named ``INCOMPLETE`` sits in the output directory until the run
    finishes, so an aborted run is recognisable.
    """
    root = out_dir or cfg["output_dir"]
    os.makedirs(root, exist_ok=True)
    flag = os.path.join(root, "INCOMPLETE")
    with open(flag, "w") as f:
        f.write("run in progress or aborted\n")
    with open(os.path.join(root, "config.txt"), "w") as f:
        from .config import format_config
        f.write(format_config(cfg))
    rows = []
    records = {}
    for lam in cfg.lambdas:
        for seed in cfg.seeds:
            d = cell_dir(root, cfg.method, lam, seed)
            _, record = train_cell(cfg, lam, seed, d)
            records[(lam, seed)] = record
            if cfg.rates:
                _, test_data = make_datasets(cfg, seed)
                rows.extend(prune_sweep(cfg, os.path.join(d, "checkpoint.varw"), cfg.rates, test_data,
                                        lam=lam, seed=seed, mask_dir=d))
    rows.sort(key=lambda r: (r.lam, r.seed, r.prune_rate))
    if cfg.rates:
        io.write_csv(os.path.join(root, "sweep.csv"), io.SWEEP_HEADER, [r.as_tuple() for r in rows])
    os.remove(flag)
    return records, rows
