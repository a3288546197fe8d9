"""SGD with the variance penalty, an optional SAM update, and LR schedules.

Each update descends on ``grad L_t(w) + lam * grad psi(w)``. With momentum
``mu > 0`` the combined vector feeds the velocity ``v <- mu*v + g`` and the
step is ``w <- w - lr*v``.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import make_rng
from .diagnostics import model_variance
from .errors import ConfigError, NumericError
from .model import LOSS_KINDS, ParamSet, init_params, loss_and_grad
from .varreg import RegConfig, psi, psi_grad

log = logging.getLogger(__name__)

SCHEDULES = ("constant", "step_decay", "dynamic_tuning", "inv_sqrt")
OPTIMIZERS = ("sgd", "sam")


@dataclass(frozen=True)
class Schedule:
    kind: str = "constant"
    # step_decay: lr = eta0 * factor ** (epoch // period)
    factor: float = 0.5
    period: int = 50
    # inv_sqrt: lr = c / sqrt(total_epochs)
    c: float = 0.1
    # dynamic_tuning
    drop_factor: float = 10.0
    short_window: int = 5
    long_window: int = 10
    shrink: float = 0.7
    grow: float = 1.06
    start_epoch: int = 20
    cadence: int = 5

    def __post_init__(self):
        if self.kind not in SCHEDULES:
            raise ConfigError(f"unknown schedule {self.kind!r}", key="train.schedule")
        for name in ("factor", "c", "drop_factor", "shrink", "grow"):
            if not getattr(self, name) > 0:
                raise ConfigError("must be positive", key=f"train.lr_{name}")
        for name in ("period", "short_window", "long_window", "cadence"):
            if getattr(self, name) < 1:
                raise ConfigError("must be at least 1", key=f"train.lr_{name}")


def step_decay(factor=0.5, period=50):
    return Schedule("step_decay", factor=factor, period=period)


def dynamic_tuning(**kw):
    return Schedule("dynamic_tuning", **kw)


def schedule_lr(schedule, epoch, loss_history, *, eta0, total_epochs):
    """Learning rate for ``epoch`` (0-based), given the losses of earlier epochs.

    The dynamic rule is replayed from epoch 1, so the result depends only on
    the arguments. At each epoch the /drop_factor drop (at T//3 and 2T//3)
    is applied before the moving-average comparison.
    """
    s = schedule
    if s.kind == "constant":
        return float(eta0)
    if s.kind == "step_decay":
        return float(eta0 * s.factor ** (epoch // s.period))
    if s.kind == "inv_sqrt":
        return float(s.c / math.sqrt(total_epochs))

    drops = {total_epochs // 3, 2 * total_epochs // 3} - {0}
    lr = float(eta0)
    for e in range(1, epoch + 1):
        if e in drops:
            lr /= s.drop_factor
        if e >= s.start_epoch and (e - s.start_epoch) % s.cadence == 0:
            if len(loss_history) >= e and e >= s.long_window:
                short = sum(loss_history[e - s.short_window:e]) / s.short_window
                long = sum(loss_history[e - s.long_window:e]) / s.long_window
                lr *= s.shrink if short > long else s.grow
    return lr


@dataclass(frozen=True)
class OptimConfig:
    eta0: float = 0.1
    momentum: float = 0.0
    batch_size: int = 32
    epochs: int = 10
    optimizer: str = "sgd"
    rho: float = 0.05
    schedule: Schedule = Schedule()
    seed: int = 0
    reg: RegConfig = RegConfig()
    loss_kind: str = "softmax_ce"

    def __post_init__(self):
        # eta0 == 0 is accepted as a degenerate "no movement" run
        if not self.eta0 >= 0:
            raise ConfigError("must be nonnegative", key="train.eta0")
        if not 0 <= self.momentum < 1:
            raise ConfigError("must lie in [0, 1)", key="train.momentum")
        if self.batch_size < 1:
            raise ConfigError("must be at least 1", key="train.batch_size")
        if self.epochs < 1:
            raise ConfigError("must be at least 1", key="train.epochs")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}", key="train.optimizer")
        if self.optimizer == "sam" and not self.rho >= 0:
            raise ConfigError("must be nonnegative", key="train.rho")
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss {self.loss_kind!r}", key="train.loss")

    @property
    def lam(self):
        return self.reg.lam


class OptimState:
    """Momentum buffers and the running update count."""

    def __init__(self):
        self.velocity = None
        self.step = 0


def _apply_update(params, reg_grads, lam, lr, momentum, state):
    totals = []
    for e in params:
        g = e.grad
        if e.name in reg_grads:
            g = g + (lam * reg_grads[e.name]).astype(g.dtype)
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {e.name}", step=state.step)
        totals.append(g)
    if momentum > 0:
        if state.velocity is None:
            state.velocity = [np.zeros_like(e.value) for e in params]
        for v, g in zip(state.velocity, totals):
            v *= v.dtype.type(momentum)
            v += g
        totals = state.velocity
    for e, g in zip(params, totals):
        e.value -= e.value.dtype.type(lr) * g
    state.step += 1


def sgd_var_step(params, cfg, lr, state):
    """One update from the loss gradients already stored in ``params``."""
    lam = cfg.reg.lam
    reg_grads = psi_grad(params, cfg.reg) if lam != 0 else {}
    _apply_update(params, reg_grads, lam, lr, cfg.momentum, state)


def sam_var_step(params, compute_grads, cfg, lr, state):
    """SAM update: gradients of L and the penalty are taken at ``w + e``.

    ``compute_grads(params)`` must fill the grad buffers with the minibatch
    loss gradient and return the loss. ``e = rho * g / ||g||`` where ``g``
    is the loss gradient at ``w``. Returns the loss at ``w``.
    """
    loss = compute_grads(params)
    gnorm = math.sqrt(sum(float(np.dot(e.grad.ravel().astype(np.float64), e.grad.ravel())) for e in params))
    if cfg.rho == 0 or gnorm == 0:
        if gnorm == 0:
            log.warning("zero loss gradient at step %d; taking a plain step", state.step)
        sgd_var_step(params, cfg, lr, state)
        return loss
    saved = [e.value.copy() for e in params]
    scale = cfg.rho / gnorm
    for e in params:
        e.value += (scale * e.grad.astype(np.float64)).astype(e.value.dtype)
    compute_grads(params)
    lam = cfg.reg.lam
    reg_grads = psi_grad(params, cfg.reg) if lam != 0 else {}
    for e, w in zip(params, saved):
        e.value[...] = w
    _apply_update(params, reg_grads, lam, lr, cfg.momentum, state)
    return loss


@dataclass
class EpochRow:
    epoch: int
    train_loss: float
    psi: float
    lr: float
    var_w: float
    eval_metric: float


@dataclass
class RunRecord:
    rows: list = field(default_factory=list)
    params: Optional[ParamSet] = None

    def column(self, name):
        return [getattr(r, name) for r in self.rows]


def train(net, data, cfg, eval_fn=None, params=None):
    """Train ``net`` on ``data`` (a full-dataset :class:`Batch`).

    Initialization and shuffling draw from independent sub-streams of
    ``cfg.seed``. The last short minibatch of each epoch is kept. On
    divergence a :class:`NumericError` is raised with the partial record
    attached as ``err.record``.
    """
    if params is None:
        params = init_params(net, make_rng(cfg.seed, 0))
    shuffle_rng = make_rng(cfg.seed, 1)
    state = OptimState()
    record = RunRecord(params=params)
    losses = []
    n = len(data)
    b = cfg.batch_size

    def compute_for(mb):
        return lambda p: loss_and_grad(net, p, mb, cfg.loss_kind)

    try:
        for epoch in range(cfg.epochs):
            lr = schedule_lr(cfg.schedule, epoch, losses, eta0=cfg.eta0, total_epochs=cfg.epochs)
            order = shuffle_rng.permutation(n)
            total = 0.0
            for start in range(0, n, b):
                mb = data.subset(order[start:start + b])
                compute = compute_for(mb)
                if cfg.optimizer == "sam":
                    loss = sam_var_step(params, compute, cfg, lr, state)
                else:
                    loss = compute(params)
                    sgd_var_step(params, cfg, lr, state)
                total += loss * len(mb)
            epoch_loss = total / n
            if not math.isfinite(epoch_loss):
                raise NumericError("training loss diverged", step=state.step)
            losses.append(epoch_loss)
            metric = float(eval_fn(params)) if eval_fn is not None else float("nan")
            record.rows.append(EpochRow(epoch, epoch_loss, psi(params, cfg.reg), lr,
                                        model_variance(params), metric))
    except NumericError as err:
        err.record = record
        raise
    return params, record
