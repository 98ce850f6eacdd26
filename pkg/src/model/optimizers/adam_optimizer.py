"""Module for the Adam optimizer."""
from collections.abc import Mapping

import numpy as np

from src.model.core.autodiff import Array, GradNode
from src.model.optimizers.abstract_optimizer import AbstractOptimizer


class AdamOptimizer(AbstractOptimizer):
    """Adam with bias-corrected first and second moment estimates."""

    def __init__(
        self,
        params: Mapping[str, GradNode],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        """
        Bind parameters and zero the moment estimates.

        :param params: Trainable leaves by name
        :param lr: Learning rate
        :param beta1: Decay of the first moment estimate
        :param beta2: Decay of the second moment estimate
        :param eps: Denominator floor
        """
        super().__init__(params, lr)
        self._beta1: float = beta1
        self._beta2: float = beta2
        self._eps: float = eps
        self._first: dict[str, Array] = {name: np.zeros(node.shape) for name, node in self._params.items()}
        self._second: dict[str, Array] = {name: np.zeros(node.shape) for name, node in self._params.items()}
        self._steps: int = 0

    def step(self) -> None:
        """Advance the step counter used for bias correction, then update."""
        self._steps += 1
        try:
            super().step()
        except Exception:
            self._steps -= 1
            raise

    def _update(self, name: str, value: Array, grad: Array) -> Array:
        self._first[name] = self._beta1 * self._first[name] + (1.0 - self._beta1) * grad
        self._second[name] = self._beta2 * self._second[name] + (1.0 - self._beta2) * grad * grad
        first_hat = self._first[name] / (1.0 - self._beta1**self._steps)
        second_hat = self._second[name] / (1.0 - self._beta2**self._steps)
        return value - self._lr * first_hat / (np.sqrt(second_hat) + self._eps)
