"""Module for denoising pretraining of the diffusion model on rendered scenes."""
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from loguru import logger
from tqdm import tqdm

from src.model.core.autodiff import Array, backward
from src.model.core.errors import EmptySceneError
from src.model.core.prompt_representations import PromptPair
from src.model.core.settings import PretrainConfig
from src.model.denoisers.abstract_denoiser import AbstractDenoiser
from src.model.diffusion.ddpm import pretrain_loss
from src.model.diffusion.noise_schedule import NoiseSchedule
from src.model.optimizers.optimizer_factory import make_optimizer
from src.model.textworld.world_embedding import WorldEmbedding, embed_text, render

PretrainHook = Callable[[int, AbstractDenoiser], None]


@dataclass(frozen=True)
class PretrainExample:
    """
    Scene to render and the prompt conditioning it.

    :param objects: Concrete objects of the scene
    :param prompt: Conditioning prompt tokens
    :param cond: Text embedding of the prompt
    """

    objects: tuple[str, ...]
    prompt: tuple[str, ...]
    cond: Array


@dataclass
class PretrainResult:
    """
    Outcome of pretraining.

    :param losses: Mean loss of each logging interval
    :param steps: Optimizer steps taken
    """

    losses: list[float] = field(default_factory=list)
    steps: int = 0


def pretrain_examples(pairs: Sequence[PromptPair], world: WorldEmbedding) -> list[PretrainExample]:
    """
    Pair the objects of each target with the target prompt.

    :param pairs: Prompt pairs
    :param world: World embedding
    :raises EmptySceneError: A target without concrete objects
    :return: One example per pair
    """
    examples = []
    for pair in pairs:
        objects = tuple(world.vocab.objects_in(pair.target))
        if not objects:
            raise EmptySceneError(f"target {' '.join(pair.target)!r} has no concrete objects")
        examples.append(PretrainExample(objects, pair.target, embed_text(pair.target, world)))
    return examples


def draw_batch(
    examples: Sequence[PretrainExample],
    world: WorldEmbedding,
    batch_size: int,
    rng: np.random.Generator,
) -> tuple[Array, Array]:
    """
    Draw examples with replacement and render a fresh noisy image for each.

    :param examples: Pretraining examples
    :param world: World embedding
    :param batch_size: Rows to draw
    :param rng: Source of picks and rendering noise
    :return: Clean images and text embeddings, both [B, m]
    """
    picks = rng.integers(0, len(examples), batch_size)
    noise = world.config.render_noise
    images = np.stack([render(examples[int(i)].objects, world, noise, rng) for i in picks])
    conds = np.stack([examples[int(i)].cond for i in picks])
    return images, conds


def pretrain(
    net: AbstractDenoiser,
    schedule: NoiseSchedule,
    pairs: Sequence[PromptPair],
    world: WorldEmbedding,
    config: PretrainConfig,
    on_checkpoint: PretrainHook | None = None,
    progress: bool = False,
) -> PretrainResult:
    """
    Train the denoiser to predict the noise added to rendered scenes.

    :param net: Denoiser to train in place
    :param schedule: Noise schedule
    :param pairs: Prompt pairs whose targets describe the scenes
    :param world: World embedding
    :param config: Steps, batch size, optimizer and seed
    :param on_checkpoint: Called with (step, net) every checkpoint_every steps
    :param progress: Show a progress bar
    :raises NumericError: Loss or gradients became non-finite
    :return: Loss curve
    """
    examples = pretrain_examples(pairs, world)
    rng = np.random.default_rng(config.seed)
    optimizer = make_optimizer(config.optimizer, net.params, config.lr)
    result = PretrainResult()
    window: list[float] = []
    for step in tqdm(range(1, config.steps + 1), desc="pretrain", disable=not progress):
        images, conds = draw_batch(examples, world, config.batch_size, rng)
        loss = pretrain_loss(net, schedule, images, conds, rng)
        backward(loss)
        optimizer.step()
        window.append(loss.item())
        result.steps = step
        if step % config.log_every == 0 or step == config.steps:
            result.losses.append(float(np.mean(window)))
            logger.info(f"Pretrain step {step}: loss={result.losses[-1]:.6f}")
            window = []
        if on_checkpoint is not None and config.checkpoint_every and step % config.checkpoint_every == 0:
            on_checkpoint(step, net)
    return result
