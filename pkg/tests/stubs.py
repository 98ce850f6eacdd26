"""Stand-ins with known outputs for denoisers, scorers and generators."""
from collections.abc import Callable, Iterable, Mapping, Sequence

import numpy as np

from src.model.core.autodiff import Array, GradNode, add, constant, grad_enabled, norm, parameter, scale
from src.model.denoisers.abstract_denoiser import AbstractDenoiser
from src.model.diffusion.ddpm import SeedLike
from src.model.generators.abstract_image_generator import AbstractImageGenerator
from src.model.scorers.abstract_aesthetic_scorer import AbstractAestheticScorer
from src.model.scorers.abstract_relevance_scorer import AbstractRelevanceScorer
from src.model.textworld.world_embedding import WorldEmbedding, embed_text


class FixedNoiseDenoiser(AbstractDenoiser):
    """Predicts the same noise for every row, whatever the input."""

    def __init__(self, noise: Array) -> None:
        self._noise = np.asarray(noise, dtype=np.float64)
        self._params = {"unused": parameter(np.zeros(1), "unused")}

    @property
    def params(self) -> dict[str, GradNode]:
        return self._params

    @property
    def dim(self) -> int:
        return int(self._noise.shape[-1])

    def predict_noise(self, z: GradNode, steps: Sequence[int], cond: Array) -> GradNode:
        return constant(np.broadcast_to(self._noise, z.shape).copy())


class TappedDenoiser(AbstractDenoiser):
    """
    Wraps a denoiser, adding a trainable offset to its prediction at chosen steps and recording every call.

    :param inner: Denoiser doing the actual prediction
    :param tapped: Steps at which the "tap" offset is added
    """

    def __init__(self, inner: AbstractDenoiser, tapped: Iterable[int]) -> None:
        self._inner = inner
        self._tapped = frozenset(tapped)
        self._params = {**inner.params, "tap": parameter(np.zeros(inner.dim), "tap")}
        self.calls: list[tuple[tuple[int, ...], bool]] = []

    @property
    def params(self) -> dict[str, GradNode]:
        return self._params

    @property
    def dim(self) -> int:
        return self._inner.dim

    def predict_noise(self, z: GradNode, steps: Sequence[int], cond: Array) -> GradNode:
        self.calls.append((tuple(steps), grad_enabled()))
        predicted = self._inner.predict_noise(z, steps, cond)
        if self._tapped.intersection(steps):
            return add(predicted, self._params["tap"])
        return predicted


class ConstantRelevanceScorer(AbstractRelevanceScorer):
    """Returns a fixed score per prompt, wired to the images with zero weight."""

    def __init__(self, scores: Mapping[tuple[str, ...], float]) -> None:
        self._scores = dict(scores)

    def score(self, prompt: Sequence[str], images: GradNode) -> GradNode:
        value = self._scores[tuple(prompt)]
        return _constant_like(images, value)


class ConstantAestheticScorer(AbstractAestheticScorer):
    def __init__(self, value: float) -> None:
        self._value = value

    def score(self, images: GradNode) -> GradNode:
        return _constant_like(images, self._value)


def _constant_like(images: GradNode, value: float) -> GradNode:
    shape = images.shape[:-1]
    return add(scale(norm(images), 0.0), constant(np.full(shape, value)))


class FunctionGenerator(AbstractImageGenerator):
    """Builds each image from the prompt and the seed with a plain function."""

    def __init__(self, make: Callable[[Sequence[str], SeedLike], Array]) -> None:
        self._make = make

    def generate(self, prompt: Sequence[str], seeds: Sequence[SeedLike]) -> Array:
        return np.stack([self._make(prompt, seed) for seed in seeds])


def echo_generator(world: WorldEmbedding) -> FunctionGenerator:
    """Generator returning the prompt's own unit text embedding."""
    return FunctionGenerator(lambda prompt, seed: embed_text(prompt, world))


def seeded_noise_generator(dim: int) -> FunctionGenerator:
    return FunctionGenerator(lambda prompt, seed: np.random.default_rng(seed).standard_normal(dim))


def central_difference(evaluate: Callable[[], float], array: Array, index: tuple[int, ...], h: float = 1e-5) -> float:
    """
    Central finite difference of evaluate() in one entry of a writable array.

    :param evaluate: Recomputes the scalar from the current array contents
    :param array: Array perturbed in place and restored afterwards
    :param index: Entry to perturb
    :param h: Step
    :return: (f(x + h) - f(x - h)) / 2h
    """
    original = array[index]
    array[index] = original + h
    upper = evaluate()
    array[index] = original - h
    lower = evaluate()
    array[index] = original
    return (upper - lower) / (2.0 * h)
