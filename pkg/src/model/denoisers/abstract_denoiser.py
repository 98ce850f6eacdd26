"""Module to hold the abstract noise-prediction network."""
from abc import ABC, abstractmethod
from collections.abc import Mapping, Sequence

import numpy as np

from src.model.core.autodiff import Array, GradNode
from src.model.core.errors import CheckpointError


class AbstractDenoiser(ABC):
    """
    Base class for networks predicting the noise in a noisy image, given the step and a text embedding.

    Parameters are named leaves so optimizers and checkpoints can address them uniformly.
    """

    @property
    @abstractmethod
    def params(self) -> dict[str, GradNode]:
        """
        Get the trainable leaves.

        :return: Parameters by name
        """
        pass

    @property
    @abstractmethod
    def dim(self) -> int:
        """
        Get the image dimension m.

        :return: Width of images and text embeddings
        """
        pass

    @abstractmethod
    def predict_noise(self, z: GradNode, steps: Sequence[int], cond: Array) -> GradNode:
        """
        Predict the noise mixed into each noisy image.

        :param z: Noisy images, shape [B, m]
        :param steps: Diffusion step of each row
        :param cond: Text embedding of each row, shape [B, m]
        :return: Predicted noise, shape [B, m]
        """
        pass

    def state_dict(self) -> dict[str, Array]:
        """
        Copy every parameter value.

        :return: Arrays by parameter name
        """
        return {name: node.array.copy() for name, node in self.params.items()}

    def load_state(self, state: Mapping[str, Array]) -> None:
        """
        Overwrite every parameter value.

        :param state: Arrays by parameter name
        :raises CheckpointError: Missing, unexpected or mis-shaped parameters
        """
        params = self.params
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise CheckpointError(f"denoiser state mismatch: missing {missing}, unexpected {unexpected}")
        for name, node in params.items():
            array = np.asarray(state[name], dtype=np.float64)
            if array.shape != node.shape:
                raise CheckpointError(f"denoiser parameter {name}: shape {array.shape}, expected {node.shape}")
            node.assign(array)
