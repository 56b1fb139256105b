"""Looking-from-the-future (LFF) transfer attacks on small numpy classifiers.

The public API re-exported here covers the vector core, loss oracles, the
baseline attackers, the LFF engine and the experiment harness.
"""

from ._backend import available as available_backends
from ._backend import current as current_backend
from ._backend import set_backend
from .config import AttackConfig, DatasetSpec, ExperimentConfig
from .engine import (LffConfig, coefficient_ratio, collect_future, lff_outer_loop,
                     lff_step, lffn_outer_loop, momentum_expansion_coeffs)
from .errors import (ConfigError, DivergenceError, InvariantViolation, LffError,
                     NonFiniteError, ZeroDirectionError, ZeroGradientError)
from .harness import (Dataset, TransferReport, evaluate, generate_dataset, run_attack,
                      sweep)
from .inner import InnerAttackerState, InnerSpec, init_state, propose_step, rollout
from .numeric import Budget, l1_normalize, lp_norm, project, sign, within_budget
from .oracles import (EnsembleModel, Landscape, LinearSoftmaxModel, LossMode, MlpModel,
                      benchmark_landscape, load_model, loss_and_grad, predict, save_model,
                      train)
from .trace import AttackTrace

__version__ = "0.1.0"

__all__ = [
    "AttackConfig", "AttackTrace", "Budget", "ConfigError", "Dataset", "DatasetSpec",
    "DivergenceError", "EnsembleModel", "ExperimentConfig", "InnerAttackerState",
    "InnerSpec", "InvariantViolation", "Landscape", "LffConfig", "LffError",
    "LinearSoftmaxModel", "LossMode", "MlpModel", "NonFiniteError", "TransferReport",
    "ZeroDirectionError", "ZeroGradientError", "available_backends", "benchmark_landscape",
    "coefficient_ratio", "collect_future", "current_backend", "evaluate",
    "generate_dataset", "init_state", "l1_normalize", "lff_outer_loop", "lff_step",
    "lffn_outer_loop", "load_model", "loss_and_grad", "lp_norm", "momentum_expansion_coeffs",
    "predict", "project", "propose_step", "rollout", "run_attack", "save_model",
    "set_backend", "sign", "sweep", "train", "within_budget",
]
