"""
Relevance, aesthetic and total rewards of a prompt rewrite.

The relevance of an image blends its match with the original and the optimized prompt; the
aesthetic reward needs no prompt. Both expectations are taken over one shared batch of generations.
"""
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from src.model.core.autodiff import GradNode, add, constant, reduce_mean, scale
from src.model.core.settings import RewardConfig
from src.model.diffusion.ddpm import SeedLike
from src.model.generators.abstract_image_generator import AbstractImageGenerator
from src.model.scorers.abstract_aesthetic_scorer import AbstractAestheticScorer
from src.model.scorers.abstract_relevance_scorer import AbstractRelevanceScorer
from src.model.scorers.clip_relevance_scorer import ClipRelevanceScorer
from src.model.scorers.sphere_aesthetic_scorer import SphereAestheticScorer
from src.model.textworld.world_embedding import ImageVec, WorldEmbedding


@dataclass
class RewardBreakdown:
    """
    Reward of one (original, optimized) prompt pair.

    :param rel: Mean relevance
    :param aes: Mean aesthetic score
    :param total: rel + aes
    :param rel_samples: Relevance of each generation
    :param aes_samples: Aesthetic score of each generation
    """

    rel: float
    aes: float
    total: float
    rel_samples: list[float] = field(default_factory=list)
    aes_samples: list[float] = field(default_factory=list)


def sample_seeds(seed: int, n_samples: int) -> list[SeedLike]:
    """
    Derive the seeds of n generations.

    :param seed: Base seed
    :param n_samples: Number of generations
    :return: Seeds [seed, k] for k = 0 .. n - 1
    """
    return [[seed, k] for k in range(n_samples)]


class RewardFunction:
    """Weighted relevance plus aesthetic preference, differentiable in the images."""

    def __init__(
        self,
        relevance: AbstractRelevanceScorer,
        aesthetic: AbstractAestheticScorer,
        config: RewardConfig,
    ) -> None:
        """
        Combine a relevance scorer and an aesthetic scorer.

        :param relevance: Text-image relevance scorer
        :param aesthetic: Aesthetic scorer
        :param config: Weights, sample count and seed
        """
        self._relevance: AbstractRelevanceScorer = relevance
        self._aesthetic: AbstractAestheticScorer = aesthetic
        self._config: RewardConfig = config

    @classmethod
    def for_world(cls, world: WorldEmbedding, config: RewardConfig) -> "RewardFunction":
        """
        Build the reward of the synthetic world: cosine relevance and the sphere aesthetic.

        :param world: World embedding
        :param config: Reward settings
        :return: Reward function
        """
        return cls(ClipRelevanceScorer(world), SphereAestheticScorer(config.gamma), config)

    @property
    def config(self) -> RewardConfig:
        """
        Get the reward settings.

        :return: Reward config
        """
        return self._config

    def relevance_node(self, original: Sequence[str], optimized: Sequence[str], images: GradNode) -> GradNode:
        """
        Per-image w_orig * g(original, i) + w_opt * g(optimized, i).

        :param original: Original prompt tokens
        :param optimized: Optimized prompt tokens
        :param images: Image node [m] or [N, m]
        :return: Node of shape [] or [N]
        """
        return add(
            scale(self._relevance.score(original, images), self._config.w_orig),
            scale(self._relevance.score(optimized, images), self._config.w_opt),
        )

    def aesthetic_node(self, images: GradNode) -> GradNode:
        """
        Per-image aesthetic score.

        :param images: Image node [m] or [N, m]
        :return: Node of shape [] or [N]
        """
        return self._aesthetic.score(images)

    def total_node(self, original: Sequence[str], optimized: Sequence[str], images: GradNode) -> GradNode:
        """
        Mean relevance plus mean aesthetic score over a batch of images, as one differentiable scalar.

        :param original: Original prompt tokens
        :param optimized: Optimized prompt tokens
        :param images: Image node [N, m]
        :return: Scalar node
        """
        return add(
            reduce_mean(self.relevance_node(original, optimized, images)),
            reduce_mean(self.aesthetic_node(images)),
        )

    def f_rel(self, original: Sequence[str], optimized: Sequence[str], image: ImageVec) -> float:
        """
        Relevance of one image.

        :param original: Original prompt tokens
        :param optimized: Optimized prompt tokens
        :param image: Image vector
        :return: Weighted relevance
        """
        return self.relevance_node(original, optimized, constant(image)).item()

    def breakdown(self, original: Sequence[str], optimized: Sequence[str], images: ImageVec) -> RewardBreakdown:
        """
        Score a batch of generations of the optimized prompt.

        :param original: Original prompt tokens
        :param optimized: Optimized prompt tokens
        :param images: Images [N, m]
        :return: Reward breakdown with total = rel + aes
        """
        node = constant(np.atleast_2d(images))
        rel_samples = [float(v) for v in self.relevance_node(original, optimized, node).array]
        aes_samples = [float(v) for v in self.aesthetic_node(node).array]
        rel = float(np.mean(rel_samples))
        aes = float(np.mean(aes_samples))
        return RewardBreakdown(rel, aes, rel + aes, rel_samples, aes_samples)


def f_rel(
    original: Sequence[str],
    optimized: Sequence[str],
    image: ImageVec,
    world: WorldEmbedding,
    config: RewardConfig | None = None,
) -> float:
    """
    Weighted relevance of an image in the synthetic world.

    :param original: Original prompt tokens
    :param optimized: Optimized prompt tokens
    :param image: Image vector
    :param world: World embedding
    :param config: Weights; 0.3 / 0.7 when omitted
    :raises DomainError: Zero image
    :return: w_orig * clip_score(original, image) + w_opt * clip_score(optimized, image)
    """
    return RewardFunction.for_world(world, config if config is not None else RewardConfig()).f_rel(
        original, optimized, image
    )


def _generations(
    optimized: Sequence[str],
    generator: AbstractImageGenerator,
    reward: RewardFunction,
    seeds: Sequence[SeedLike] | None,
) -> ImageVec:
    chosen = seeds if seeds is not None else sample_seeds(reward.config.seed, reward.config.n_samples)
    images: ImageVec = generator.generate(optimized, chosen)
    return images


def reward_rel(
    original: Sequence[str],
    optimized: Sequence[str],
    generator: AbstractImageGenerator,
    reward: RewardFunction,
    seeds: Sequence[SeedLike] | None = None,
) -> float:
    """
    Expected relevance over generations of the optimized prompt.

    :param original: Original prompt tokens
    :param optimized: Optimized prompt tokens
    :param generator: Image generator
    :param reward: Reward function (its config sets n_samples and seed)
    :param seeds: Generation seeds overriding the config
    :return: Mean weighted relevance
    """
    return total_reward(original, optimized, generator, reward, seeds).rel


def reward_aes(
    optimized: Sequence[str],
    generator: AbstractImageGenerator,
    reward: RewardFunction,
    seeds: Sequence[SeedLike] | None = None,
) -> float:
    """
    Expected aesthetic score over generations of a prompt.

    :param optimized: Prompt tokens
    :param generator: Image generator
    :param reward: Reward function (its config sets n_samples and seed)
    :param seeds: Generation seeds overriding the config
    :return: Mean aesthetic score
    """
    images = _generations(optimized, generator, reward, seeds)
    return float(np.mean(reward.aesthetic_node(constant(np.atleast_2d(images))).array))


def total_reward(
    original: Sequence[str],
    optimized: Sequence[str],
    generator: AbstractImageGenerator,
    reward: RewardFunction,
    seeds: Sequence[SeedLike] | None = None,
) -> RewardBreakdown:
    """
    Relevance and aesthetic rewards over one shared batch of generations.

    :param original: Original prompt tokens
    :param optimized: Optimized prompt tokens
    :param generator: Image generator
    :param reward: Reward function (its config sets n_samples and seed)
    :param seeds: Generation seeds overriding the config
    :return: Breakdown with total = rel + aes
    """
    return reward.breakdown(original, optimized, _generations(optimized, generator, reward, seeds))
