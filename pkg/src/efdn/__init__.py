"""Edge-enhanced feature distillation super-resolution toolkit.

A pure-NumPy implementation of a lightweight super-resolution network whose
multi-branch training blocks fold exactly into single 3x3 convolutions for
deployment, trained with an edge-enhanced gradient-variance loss on a minimal
reverse-mode tape.
"""

from .errors import (
    ConfigError,
    DimensionError,
    EfdnError,
    InputError,
    UsageError,
    WeightsFormatError,
)
from .loss import LossConfig, derive_lambdas, eg_loss
from .network import (
    NetworkParams,
    NetworkSpec,
    build_toy_net,
    count_madds,
    count_params,
    init_network,
    merge_network,
    network_forward,
)
from .reparam import EdbbParams, edbb_forward, make_edbb, merge_edbb
from .tensor import ConvParams, Tensor
from .train import StageConfig, parse_stages, train_loop
from .weights import load_weights, save_weights

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvParams",
    "DimensionError",
    "EdbbParams",
    "EfdnError",
    "InputError",
    "LossConfig",
    "NetworkParams",
    "NetworkSpec",
    "StageConfig",
    "Tensor",
    "UsageError",
    "WeightsFormatError",
    "__version__",
    "build_toy_net",
    "count_madds",
    "count_params",
    "derive_lambdas",
    "edbb_forward",
    "eg_loss",
    "init_network",
    "load_weights",
    "make_edbb",
    "merge_edbb",
    "merge_network",
    "network_forward",
    "parse_stages",
    "save_weights",
    "train_loop",
]
