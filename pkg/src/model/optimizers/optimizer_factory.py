"""Pick an optimizer by the name used in stage configs."""
from collections.abc import Mapping

from src.model.core.autodiff import GradNode
from src.model.core.errors import ConfigError
from src.model.optimizers.abstract_optimizer import AbstractOptimizer
from src.model.optimizers.adam_optimizer import AdamOptimizer
from src.model.optimizers.sgd_optimizer import SgdOptimizer


def make_optimizer(kind: str, params: Mapping[str, GradNode], lr: float) -> AbstractOptimizer:
    """
    Build the optimizer named in a config block.

    :param kind: "sgd" or "adam"
    :param params: Trainable leaves by name
    :param lr: Learning rate
    :raises ConfigError: Unknown optimizer name
    :return: Optimizer bound to params
    """
    match kind:
        case "sgd":
            return SgdOptimizer(params, lr)
        case "adam":
            return AdamOptimizer(params, lr)
        case _:
            raise ConfigError("optimizer", f"unknown optimizer {kind!r}")
