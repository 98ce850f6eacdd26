"""Module for the abstract optimizer and its shared gradient checks."""
from abc import ABC, abstractmethod
from collections.abc import Mapping

import numpy as np

from src.model.core.autodiff import Array, GradNode
from src.model.core.errors import NumericError


class AbstractOptimizer(ABC):
    """
    Base class for gradient-based parameter updates.

    An optimizer owns a fixed set of named parameters. A step validates every gradient first,
    so a single non-finite entry leaves all parameters untouched.
    """

    def __init__(self, params: Mapping[str, GradNode], lr: float) -> None:
        """
        Bind the parameters this optimizer updates.

        :param params: Trainable leaves by name
        :param lr: Learning rate
        """
        self._params: dict[str, GradNode] = dict(params)
        self._lr: float = lr

    def step(self) -> None:
        """
        Apply one update from the accumulated gradients, then zero them.

        :raises NumericError: A gradient holds NaN or infinity; no parameter is changed
        """
        grads: dict[str, Array] = {}
        for name, node in self._params.items():
            grad = node.grad_array
            if grad is None:
                grad = np.zeros(node.shape)
            if not np.isfinite(grad).all():
                raise NumericError(f"non-finite gradient for parameter {name}")
            grads[name] = grad
        updates = {name: self._update(name, self._params[name].array, grad) for name, grad in grads.items()}
        for name, new_value in updates.items():
            self._params[name].assign(new_value)
        self.zero_grad()

    def zero_grad(self) -> None:
        """Forget every accumulated gradient."""
        for node in self._params.values():
            node.zero_grad()

    @abstractmethod
    def _update(self, name: str, value: Array, grad: Array) -> Array:
        """
        Compute the new value of one parameter.

        :param name: Parameter name (keys per-parameter optimizer state)
        :param value: Current value
        :param grad: Validated gradient
        :return: New value
        """
        pass

    @property
    def lr(self) -> float:
        """
        Get the learning rate.

        :return: Learning rate
        """
        return self._lr
