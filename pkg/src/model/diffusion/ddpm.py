"""
Forward noising, the denoising loss, ancestral sampling and clean-image prediction.

Images and text embeddings are rows of [B, m] arrays. Sampling draws every row from its own
generator, so a row's result doesn't depend on what else is in the batch.
"""
from collections.abc import Sequence

import numpy as np

from src.model.core.autodiff import (
    Array,
    GradNode,
    constant,
    mul,
    no_grad,
    reduce_sum,
    scale,
    square,
    sub,
)
from src.model.core.errors import ShapeError
from src.model.denoisers.abstract_denoiser import AbstractDenoiser
from src.model.diffusion.noise_schedule import NoiseSchedule
from src.model.textworld.world_embedding import ImageVec

SeedLike = int | Sequence[int] | np.random.SeedSequence
StepLike = int | Sequence[int]


def _row_steps(t: StepLike, rows: int) -> list[int]:
    if isinstance(t, int | np.integer):
        return [int(t)] * rows
    steps = [int(step) for step in t]
    if len(steps) != rows:
        raise ShapeError(f"{len(steps)} steps for {rows} rows")
    return steps


def _rows(x: Array) -> Array:
    array = np.asarray(x, dtype=np.float64)
    return array[None, :] if array.ndim == 1 else array


def q_sample(schedule: NoiseSchedule, x0: Array, t: StepLike, noise: Array) -> Array:
    """
    Noise clean images to step t: sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) noise.

    :param schedule: Noise schedule
    :param x0: Clean image [m] or images [B, m]
    :param t: Step (t = 0 returns x0), or one step per row
    :param noise: Standard normal noise shaped like x0
    :raises StepError: Step outside [0, T]
    :raises ShapeError: Noise shape differs from x0
    :return: Noisy images shaped like x0
    """
    x0_array = np.asarray(x0, dtype=np.float64)
    noise_array = np.asarray(noise, dtype=np.float64)
    if x0_array.shape != noise_array.shape:
        raise ShapeError(f"x0 {x0_array.shape} and noise {noise_array.shape} differ")
    rows = _rows(x0_array)
    alpha_bars = schedule.alpha_bars(_row_steps(t, rows.shape[0]), allow_zero=True)[:, None]
    z = np.sqrt(alpha_bars) * rows + np.sqrt(1.0 - alpha_bars) * _rows(noise_array)
    return z.reshape(x0_array.shape)


def predict_x0(
    net: AbstractDenoiser,
    schedule: NoiseSchedule,
    z_t: GradNode | Array,
    t: StepLike,
    cond: Array,
) -> GradNode:
    """
    Estimate clean images from noisy ones: (z_t - sqrt(1 - alpha_bar_t) eps_hat) / sqrt(alpha_bar_t).

    Gradients flow into the network parameters (and into z_t if it is part of a graph).

    :param net: Noise prediction network
    :param schedule: Noise schedule
    :param z_t: Noisy images [B, m]
    :param t: Step in [1, T], or one step per row
    :param cond: Text embeddings [B, m]
    :raises StepError: Step outside [1, T]
    :return: Node of shape [B, m]
    """
    z = z_t if isinstance(z_t, GradNode) else constant(_rows(z_t))
    steps = _row_steps(t, z.shape[0])
    alpha_bars = schedule.alpha_bars(steps)[:, None]
    noise_coef = np.broadcast_to(np.sqrt(1.0 - alpha_bars), z.shape).copy()
    inv_signal = np.broadcast_to(1.0 / np.sqrt(alpha_bars), z.shape).copy()
    eps_hat = net.predict_noise(z, steps, _rows(cond))
    return mul(sub(z, mul(constant(noise_coef), eps_hat)), constant(inv_signal))


def pretrain_loss(
    net: AbstractDenoiser,
    schedule: NoiseSchedule,
    x0: Array,
    cond: Array,
    rng: np.random.Generator | None = None,
    steps: Sequence[int] | None = None,
    noise: Array | None = None,
) -> GradNode:
    """
    Denoising loss: mean over the batch of ||eps - eps_theta(z_t, t, c)||^2.

    Steps are uniform on [1, T] and noise standard normal, both drawn from rng unless given.

    :param net: Noise prediction network
    :param schedule: Noise schedule
    :param x0: Clean images [B, m]
    :param cond: Text embeddings [B, m]
    :param rng: Source of steps and noise
    :param steps: Fixed step per row
    :param noise: Fixed noise [B, m]
    :raises ShapeError: Empty batch, or neither rng nor fixed draws given
    :raises NumericError: Loss isn't finite
    :return: Scalar node
    """
    images = _rows(x0)
    batch = images.shape[0]
    if batch == 0:
        raise ShapeError("pretraining batch is empty")
    if steps is not None:
        row_steps = [int(step) for step in steps]
    elif rng is not None:
        row_steps = [int(step) for step in rng.integers(1, schedule.steps + 1, batch)]
    else:
        raise ShapeError("pretrain_loss needs an rng or fixed steps")
    if noise is not None:
        eps = np.asarray(noise, dtype=np.float64)
    elif rng is not None:
        eps = rng.standard_normal(images.shape)
    else:
        raise ShapeError("pretrain_loss needs an rng or fixed noise")
    z = q_sample(schedule, images, row_steps, eps)
    predicted = net.predict_noise(constant(z), row_steps, _rows(cond))
    return scale(reduce_sum(square(sub(constant(eps), predicted))), 1.0 / batch)


def run_chain(
    net: AbstractDenoiser,
    schedule: NoiseSchedule,
    cond: Array,
    rngs: Sequence[np.random.Generator],
    stop: int = 0,
) -> Array:
    """
    Ancestral sampling from z_T ~ N(0, I) down to z_stop, without building a graph.

    Each step takes the posterior mean (z_t - beta_t / sqrt(1 - alpha_bar_t) eps_hat) / sqrt(alpha_t)
    and, except at t = 1, adds noise with variance equal to the posterior variance.

    :param net: Noise prediction network
    :param schedule: Noise schedule
    :param cond: Text embeddings [B, m]
    :param rngs: One generator per row
    :param stop: Step to stop at (0 runs the whole chain)
    :raises StepError: Stop outside [0, T]
    :return: z_stop, shape [B, m]
    """
    schedule.check_step(stop, allow_zero=True)
    conds = _rows(cond)
    if len(rngs) != conds.shape[0]:
        raise ShapeError(f"{len(rngs)} generators for {conds.shape[0]} rows")
    z = np.stack([rng.standard_normal(net.dim) for rng in rngs])
    with no_grad():
        for t in range(schedule.steps, stop, -1):
            eps_hat = net.predict_noise(constant(z), [t] * z.shape[0], conds).array
            beta = schedule.beta(t)
            z = (z - beta / np.sqrt(1.0 - schedule.alpha_bar(t)) * eps_hat) / np.sqrt(schedule.alpha(t))
            if t > 1:
                sigma = np.sqrt(schedule.posterior_variance(t))
                z = z + sigma * np.stack([rng.standard_normal(net.dim) for rng in rngs])
    return z


def sample_batch(
    net: AbstractDenoiser,
    schedule: NoiseSchedule,
    cond: Array,
    seeds: Sequence[SeedLike],
) -> Array:
    """
    Sample one image per row, each from its own seed.

    :param net: Noise prediction network
    :param schedule: Noise schedule
    :param cond: Text embeddings [B, m]
    :param seeds: One seed per row
    :return: Images [B, m]
    """
    return run_chain(net, schedule, cond, [np.random.default_rng(seed) for seed in seeds])


def sample(net: AbstractDenoiser, schedule: NoiseSchedule, cond: Array, seed: SeedLike) -> ImageVec:
    """
    Sample one image conditioned on a text embedding.

    :param net: Noise prediction network (trained or not)
    :param schedule: Noise schedule
    :param cond: Text embedding [m]
    :param seed: Seed of the chain
    :return: Image vector
    """
    image: ImageVec = sample_batch(net, schedule, _rows(cond), [seed])[0]
    return image
