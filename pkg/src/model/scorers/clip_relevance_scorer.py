"""Module for the cosine relevance scorer of the synthetic world."""
from collections.abc import Sequence

from src.model.core.autodiff import Array, GradNode
from src.model.scorers.abstract_relevance_scorer import AbstractRelevanceScorer
from src.model.textworld.world_embedding import WorldEmbedding, clip_relevance, embed_text


class ClipRelevanceScorer(AbstractRelevanceScorer):
    """Cosine between the prompt's text embedding and each image."""

    def __init__(self, world: WorldEmbedding) -> None:
        """
        Score against the given world's text embeddings.

        :param world: World embedding
        """
        self._world: WorldEmbedding = world
        self._cache: dict[tuple[str, ...], Array] = {}

    def embed(self, prompt: Sequence[str]) -> Array:
        """
        Get the (cached) text embedding of a prompt.

        :param prompt: Prompt tokens
        :return: Unit text embedding
        """
        key = tuple(prompt)
        if key not in self._cache:
            self._cache[key] = embed_text(key, self._world)
        return self._cache[key]

    def score(self, prompt: Sequence[str], images: GradNode) -> GradNode:
        """
        Cosine between the prompt embedding and each image.

        :param prompt: Prompt tokens
        :param images: Image node of shape [m] or [N, m]
        :return: Node of shape [] or [N]
        """
        return clip_relevance(self.embed(prompt), images)
