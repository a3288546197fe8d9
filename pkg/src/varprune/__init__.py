"""Variance amplifying regularization for pruning-robust training.

Train small numpy networks with ``L + lam * psi`` where ``psi`` rewards
spread in per-layer weight magnitudes, prune them one-shot by magnitude,
and check the optimizer's convergence behaviour empirically.
"""

from .config import ExperimentConfig, load_config, validate
from .core import make_rng
from .errors import ConfigError, DimensionError, FormatError, NumericError
from .experiment import prune_sweep, run_experiment
from .model import ParamSet, init_params, loss_and_grad, mlp
from .pruner import apply_mask, build_mask, magnitude_mask_global
from .trainer import OptimConfig, Schedule, train
from .varreg import RegConfig, psi, psi_grad

__version__ = "0.1.0"
