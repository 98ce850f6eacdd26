"""Module for the abstract aesthetic scorer."""
from abc import ABC, abstractmethod

from src.model.core.autodiff import GradNode


class AbstractAestheticScorer(ABC):
    """Base class for prompt-free image preference scorers, differentiable in the images."""

    @abstractmethod
    def score(self, images: GradNode) -> GradNode:
        """
        Score the aesthetic preference of each image.

        :param images: Image node of shape [m] or [N, m]
        :return: Node of shape [] or [N]
        """
        pass
