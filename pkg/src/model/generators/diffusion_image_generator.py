"""Module for the generator backed by the conditional diffusion model."""
from collections.abc import Sequence

import numpy as np

from src.model.core.autodiff import Array
from src.model.denoisers.abstract_denoiser import AbstractDenoiser
from src.model.diffusion.ddpm import SeedLike, sample_batch
from src.model.diffusion.noise_schedule import NoiseSchedule
from src.model.generators.abstract_image_generator import AbstractImageGenerator
from src.model.textworld.world_embedding import WorldEmbedding, embed_text


class DiffusionImageGenerator(AbstractImageGenerator):
    """Ancestral sampling conditioned on the prompt's text embedding."""

    def __init__(self, net: AbstractDenoiser, schedule: NoiseSchedule, world: WorldEmbedding) -> None:
        """
        Wrap a denoiser and its schedule as a prompt-to-image generator.

        :param net: Noise prediction network
        :param schedule: Noise schedule
        :param world: World embedding used to encode prompts
        """
        self._net: AbstractDenoiser = net
        self._schedule: NoiseSchedule = schedule
        self._world: WorldEmbedding = world

    @property
    def net(self) -> AbstractDenoiser:
        """
        Get the denoiser.

        :return: Noise prediction network
        """
        return self._net

    def generate(self, prompt: Sequence[str], seeds: Sequence[SeedLike]) -> Array:
        """Sample one image per seed from the prompt's embedding."""
        cond = np.tile(embed_text(prompt, self._world), (len(seeds), 1))
        return sample_batch(self._net, self._schedule, cond, seeds)
