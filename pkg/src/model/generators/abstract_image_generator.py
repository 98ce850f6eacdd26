"""Module to hold the abstract text-to-image generator."""
from abc import ABC, abstractmethod
from collections.abc import Sequence

from src.model.core.autodiff import Array
from src.model.diffusion.ddpm import SeedLike


class AbstractImageGenerator(ABC):
    """
    Base class for generators G(y) sampling images for a prompt.

    One image per seed; the same prompt and seed always give the same image.
    """

    @abstractmethod
    def generate(self, prompt: Sequence[str], seeds: Sequence[SeedLike]) -> Array:
        """
        Sample images conditioned on a prompt.

        :param prompt: Prompt tokens
        :param seeds: One seed per image
        :return: Images [len(seeds), m]
        """
        pass
