"""Module for plain stochastic gradient descent."""
from collections.abc import Mapping

from src.model.core.autodiff import Array, GradNode
from src.model.optimizers.abstract_optimizer import AbstractOptimizer


class SgdOptimizer(AbstractOptimizer):
    """p <- p - lr * grad(p)."""

    def _update(self, name: str, value: Array, grad: Array) -> Array:
        return value - self._lr * grad


def sgd_step(params: Mapping[str, GradNode], lr: float) -> Mapping[str, GradNode]:
    """
    Take one plain SGD step on materialized gradients and zero them.

    :param params: Trainable leaves by name
    :param lr: Learning rate
    :raises NumericError: Non-finite gradient; the step is aborted
    :return: The same parameters, updated in place
    """
    SgdOptimizer(params, lr).step()
    return params
