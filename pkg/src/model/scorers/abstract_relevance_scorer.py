"""Module for the abstract relevance scorer."""
from abc import ABC, abstractmethod
from collections.abc import Sequence

from src.model.core.autodiff import GradNode


class AbstractRelevanceScorer(ABC):
    """
    Base class for text-image relevance scorers.

    A relevance scorer compares one prompt against a batch of images and stays differentiable
    with respect to the images, so the reward can be back-propagated into the denoiser.
    """

    @abstractmethod
    def score(self, prompt: Sequence[str], images: GradNode) -> GradNode:
        """
        Score how well each image matches a prompt.

        :param prompt: Prompt tokens
        :param images: Image node of shape [m] or [N, m]
        :return: Node of shape [] or [N]
        """
        pass
