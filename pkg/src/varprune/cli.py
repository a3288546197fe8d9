"""Command line entry point.

Exit codes: 0 success, 1 configuration or usage error, 2 numeric failure,
3 I/O or file-format error.
"""

import argparse
import logging
import math
import os
import sys

import numpy as np

from . import io
from .config import load_config, validate
from .convergence import (Composite, Logistic, Quadratic, calibrate_full_batch, descent_check,
                          diminishing_check, estimate_beta, loglog_slope, random_psd, rate_check,
                          region_samples)
from .core import make_rng
from .diagnostics import (SharpnessProbe, model_variance, symmetric_edges, top_hessian_eigenvalue,
                          weight_histogram)
from .errors import ConfigError, NumericError
from .experiment import cell_dir, make_datasets, prune_sweep, run_experiment, train_cell

log = logging.getLogger("varprune")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _seed(text):
    try:
        s = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= s < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return s


def _config(args):
    cfg = load_config(args.config) if args.config else validate({})
    overrides = {}
    if args.seed is not None:
        overrides["seeds"] = [args.seed]
    if args.out is not None:
        overrides["output_dir"] = args.out
    return cfg.with_overrides(**overrides) if overrides else cfg


def cmd_train(args):
    cfg = _config(args)
    for lam in cfg.lambdas:
        for seed in cfg.seeds:
            d = cell_dir(cfg["output_dir"], cfg.method, lam, seed)
            _, record = train_cell(cfg, lam, seed, d)
            last = record.rows[-1]
            print(f"{d}: loss={last.train_loss:.6g} var_w={last.var_w:.6g} eval={last.eval_metric:.6g}")


def cmd_prune(args):
    cfg = _config(args)
    if not cfg.rates:
        raise ConfigError("no pruning rates given", key="prune.rates")
    seed = cfg.seeds[0]
    _, test = make_datasets(cfg, seed)
    out = cfg["output_dir"]
    os.makedirs(out, exist_ok=True)
    rows = prune_sweep(cfg, args.checkpoint, cfg.rates, test, lam=args.lam, seed=seed, mask_dir=out)
    io.write_csv(os.path.join(out, "sweep.csv"), io.SWEEP_HEADER, [r.as_tuple() for r in rows])
    for r in rows:
        print(f"p={r.prune_rate} {r.metric_name}={r.metric_value:.6g} (dense {r.dense_metric:.6g})")


def cmd_sweep(args):
    cfg = _config(args)
    _, rows = run_experiment(cfg)
    print(f"wrote {len(rows)} rows to {os.path.join(cfg['output_dir'], 'sweep.csv')}")


def cmd_diagnose(args):
    cfg = _config(args)
    params = io.load_checkpoint(args.checkpoint)
    out = cfg["output_dir"]
    os.makedirs(out, exist_ok=True)
    hist = weight_histogram(params, symmetric_edges(params, cfg["diag.hist_bins"]))
    io.write_histogram(os.path.join(out, "histogram.csv"), hist)
    print(f"var_w={model_variance(params)!r}")
    if args.eigen:
        seed = cfg.seeds[0]
        _, test = make_datasets(cfg, seed)
        res = top_hessian_eigenvalue(cfg.net(), params, test, SharpnessProbe(), make_rng(seed, 20),
                                     loss_kind=cfg.loss_kind)
        print(f"top_eigenvalue={res.value!r} iterations={res.iterations} converged={res.converged}")


def cmd_converge(args):
    seed = args.seed or 0
    out = args.out or "out"
    os.makedirs(out, exist_ok=True)
    rng = make_rng(seed, 30)
    lam = args.lam

    q = Quadratic(random_psd(10, rng), rng.standard_normal(10))
    comp = Composite(q, lam)
    w0 = 3.0 * rng.standard_normal(10)
    bp = calibrate_full_batch(comp, w0, args.steps)
    rep = descent_check(comp, 1.0 / bp.beta, args.steps, w0, beta=bp.beta)
    io.write_csv(os.path.join(out, "descent.csv"), ["step", "margin"], enumerate(rep.margins.tolist()))
    print(f"descent: beta={bp.beta!r} violations={rep.n_violations}/{args.steps}")

    dim = diminishing_check(q, 1.0 / q.beta1, [100, 1000, 10000], w0)
    io.write_csv(os.path.join(out, "diminishing.csv"), ["T", "weighted_sq_grad"], sorted(dim.items()))
    print("diminishing: " + " ".join(f"T={t}:{v:.4g}" for t, v in sorted(dim.items())))

    logi = Composite(Logistic.seeded(make_rng(seed, 31)), lam)

    def start(s):
        return make_rng(s, 99).standard_normal(logi.dim)

    samples = [x for s in range(args.seeds) for x in region_samples(start(s), 1.0, 3, make_rng(s, 7))]
    beta2 = estimate_beta(logi.psi_grad, samples) if lam > 0 else 0.0
    beta = logi.base.beta1 + lam * beta2
    T_list = [100, 400, 1600, 6400]
    rows = rate_check(logi, 1.0 / beta, T_list, range(args.seeds), 8, start, beta=beta)
    io.write_csv(os.path.join(out, "rate.csv"), ["T", "eta", "mean_sq_grad", "diverged"],
                 [(r.T, 1.0 / beta / math.sqrt(r.T), r.mean, r.diverged) for r in rows])
    slope = loglog_slope(T_list, [r.mean for r in rows])
    print("rate: " + " ".join(f"T={r.T}:{r.mean:.4g}" for r in rows) + f" slope={slope:.3f}")


def cmd_gen_data(args):
    cfg = _config(args)
    out = cfg["output_dir"]
    os.makedirs(out, exist_ok=True)
    for seed in cfg.seeds:
        for split, batch in zip(("train", "test"), make_datasets(cfg, seed)):
            X = np.asarray(batch.inputs)
            Y = np.asarray(batch.targets).reshape(len(X), -1)
            header = [f"x{i}" for i in range(X.shape[1])] + [f"y{i}" for i in range(Y.shape[1])]
            rows = ([float(v) for v in x] + [int(v) for v in y] for x, y in zip(X, Y))
            path = os.path.join(out, f"{split}_seed{seed}.csv")
            io.write_csv(path, header, rows)
            print(path)


def build_parser():
    p = _Parser(prog="varprune", description="Variance amplifying regularizer experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--seed", type=_seed, help="run only this seed")
        sp.add_argument("--out", help="output directory")

    sp = sub.add_parser("train", help="train every (lambda, seed) cell")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("prune", help="one-shot prune a checkpoint at prune.rates")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--lam", type=float, default=0.0, help="lambda label for the rows")
    sp.set_defaults(func=cmd_prune)

    sp = sub.add_parser("sweep", help="train, then prune every checkpoint")
    common(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("diagnose", help="weight variance, histogram and top Hessian eigenvalue")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--eigen", action="store_true", help="also estimate the top Hessian eigenvalue")
    sp.set_defaults(func=cmd_diagnose)

    sp = sub.add_parser("converge", help="descent, rate and diminishing-step checks")
    common(sp, config=False)
    sp.add_argument("--lam", type=float, default=1e-3)
    sp.add_argument("--steps", type=int, default=1000)
    sp.add_argument("--seeds", type=int, default=10)
    sp.set_defaults(func=cmd_converge)

    sp = sub.add_parser("gen-data", help="write the synthetic datasets as CSV")
    common(sp)
    sp.set_defaults(func=cmd_gen_data)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except NumericError as err:
        print(f"numeric error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
