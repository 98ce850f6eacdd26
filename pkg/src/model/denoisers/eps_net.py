"""Module for the MLP noise-prediction network."""
import math
from collections.abc import Sequence

import numpy as np

from src.model.core.autodiff import Array, GradNode, add, concat, constant, matmul, parameter, silu
from src.model.core.errors import ShapeError
from src.model.core.settings import EpsNetConfig
from src.model.denoisers.abstract_denoiser import AbstractDenoiser

TIME_EMBEDDING_BASE: float = 10000.0


def time_embedding(steps: Sequence[int], width: int) -> Array:
    """
    Sinusoidal embedding of diffusion steps.

    :param steps: Step of each row
    :param width: Even embedding width
    :return: Array of shape [B, width], sines then cosines
    """
    half = width // 2
    freqs = np.exp(-math.log(TIME_EMBEDDING_BASE) * np.arange(half) / half)
    angles = np.asarray(steps, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


class EpsNet(AbstractDenoiser):
    """Two SiLU hidden layers over [noisy image, text embedding, step embedding]."""

    def __init__(self, dim: int, config: EpsNetConfig) -> None:
        """
        Initialize weights with a seeded scaled normal draw and zero biases.

        :param dim: Image dimension m
        :param config: Hidden width, time embedding width and seed
        """
        self._dim: int = dim
        self._config: EpsNetConfig = config
        rng = np.random.default_rng(config.seed)
        widths = [2 * dim + config.time_dim, config.hidden, config.hidden, dim]
        self._params: dict[str, GradNode] = {}
        for layer, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            weight = rng.standard_normal((fan_in, fan_out)) / math.sqrt(fan_in)
            self._params[f"w{layer}"] = parameter(weight, f"w{layer}")
            self._params[f"b{layer}"] = parameter(np.zeros(fan_out), f"b{layer}")

    @property
    def params(self) -> dict[str, GradNode]:
        """Weights w0..w2 and biases b0..b2."""
        return self._params

    @property
    def dim(self) -> int:
        """Image dimension m."""
        return self._dim

    @property
    def config(self) -> EpsNetConfig:
        """
        Get the network shape.

        :return: EpsNet config
        """
        return self._config

    def predict_noise(self, z: GradNode, steps: Sequence[int], cond: Array) -> GradNode:
        """
        Predict the noise of each row.

        :param z: Noisy images, shape [B, m]
        :param steps: Diffusion step of each row
        :param cond: Text embeddings, shape [B, m]
        :raises ShapeError: Rows or widths don't line up
        :return: Predicted noise, shape [B, m]
        """
        cond = np.asarray(cond, dtype=np.float64)
        if len(z.shape) != 2 or z.shape[1] != self._dim or cond.shape != z.shape or len(steps) != z.shape[0]:
            raise ShapeError(f"eps net got z {z.shape}, cond {cond.shape} and {len(steps)} steps")
        p = self._params
        h = concat([z, constant(cond), constant(time_embedding(steps, self._config.time_dim))])
        h = silu(add(matmul(h, p["w0"]), p["b0"]))
        h = silu(add(matmul(h, p["w1"]), p["b1"]))
        return add(matmul(h, p["w2"]), p["b2"])
