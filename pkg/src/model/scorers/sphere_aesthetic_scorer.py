"""Module for the distance-to-unit-sphere aesthetic scorer."""
from src.model.core.autodiff import GradNode
from src.model.scorers.abstract_aesthetic_scorer import AbstractAestheticScorer
from src.model.textworld.world_embedding import aesthetic


class SphereAestheticScorer(AbstractAestheticScorer):
    """exp(-gamma * (||image|| - 1)^2): a fixed analytic preference whose optimum is the unit sphere."""

    def __init__(self, gamma: float = 4.0) -> None:
        """
        Set the falloff around the unit sphere.

        :param gamma: Sharpness around the unit sphere
        """
        self._gamma: float = gamma

    def score(self, images: GradNode) -> GradNode:
        """Aesthetic score of each image, 1 on the unit sphere."""
        return aesthetic(images, self._gamma)
