"""
Reward feedback fine-tuning of the denoiser.

Each step samples a step t in [t1, t2], runs the reverse chain from T down to t + 1 without a graph,
predicts the clean image at t with gradients live, and scores that prediction. The reward loss is
regularized by the denoising loss on a fresh pretraining batch.
"""
import csv
import io
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from loguru import logger
from tqdm import tqdm

from src.model.core.autodiff import (
    Array,
    GradNode,
    add,
    backward,
    constant,
    exp,
    log,
    scale,
    sub,
    zero_grads,
)
from src.model.core.errors import ConfigError, MaskError, NumericError, PoacError, StepError
from src.model.core.prompt_representations import PromptPair
from src.model.core.settings import ReflConfig
from src.model.denoisers.abstract_denoiser import AbstractDenoiser
from src.model.diffusion.ddpm import pretrain_loss, predict_x0, run_chain
from src.model.diffusion.noise_schedule import NoiseSchedule
from src.model.diffusion.pretrainer import PretrainExample, draw_batch, pretrain_examples
from src.model.optimizers.optimizer_factory import make_optimizer
from src.model.reward.reward_function import RewardFunction
from src.model.textworld.world_embedding import WorldEmbedding, embed_text

HINGE_MARGIN: float = 2.0
MAX_CONSECUTIVE_FAILURES: int = 3

ReflHook = Callable[[int, AbstractDenoiser], None]


def apply_phi(kind: str, reward: GradNode) -> GradNode:
    """
    Map a reward to a loss that decreases as the reward grows.

    :param kind: "negate" (-r), "softplus" (log(1 + exp(-r))) or "hinge" (max(0, 2 - r))
    :param reward: Scalar reward node
    :raises ConfigError: Unknown map
    :return: Scalar loss node
    """
    match kind:
        case "negate":
            return scale(reward, -1.0)
        case "softplus":
            return log(add(constant(1.0), exp(scale(reward, -1.0))))
        case "hinge":
            if reward.item() < HINGE_MARGIN:
                return sub(constant(HINGE_MARGIN), reward)
            return scale(reward, 0.0)
        case _:
            raise ConfigError("refl.phi", f"unknown map {kind!r}")


@dataclass(frozen=True)
class ReflSample:
    """
    One prompt pair with its noisy images at the reward step.

    :param pair: Prompt pair; images are conditioned on its target
    :param cond: Text embedding of the target, one row per image [n, m]
    :param z_t: Noisy images at the reward step, a constant of the graph [n, m]
    """

    pair: PromptPair
    cond: Array
    z_t: Array


@dataclass(frozen=True)
class ReflStepResult:
    """
    Loss components of one fine-tuning step.

    :param t: Step the reward was evaluated at
    :param reward: Mean total reward over the batch
    :param l_r: Reward loss lam * phi(reward)
    :param l_pre: Denoising regularizer
    :param loss: l_r + l_pre
    """

    t: int
    reward: float
    l_r: float
    l_pre: float
    loss: float


@dataclass(frozen=True)
class CurvePoint:
    """
    Interval means of the fine-tuning curve.

    :param step: Last step of the interval
    :param reward: Mean total reward
    :param l_pre: Mean denoising regularizer
    :param l_r: Mean reward loss
    """

    step: int
    reward: float
    l_pre: float
    l_r: float


@dataclass
class ReflResult:
    """
    Outcome of fine-tuning.

    :param curve: Logged curve points
    :param steps: Optimizer steps taken
    :param failures: Steps skipped after a NumericError
    """

    curve: list[CurvePoint] = field(default_factory=list)
    steps: int = 0
    failures: int = 0


def truncated_samples(
    net: AbstractDenoiser,
    schedule: NoiseSchedule,
    pairs: Sequence[PromptPair],
    world: WorldEmbedding,
    t: int,
    n_samples: int,
    rng: np.random.Generator,
) -> list[ReflSample]:
    """
    Run the reverse chain of every pair from T down to step t with gradients severed.

    :param net: Denoiser
    :param schedule: Noise schedule
    :param pairs: Prompt pairs
    :param world: World embedding
    :param t: Step to stop at
    :param n_samples: Images per pair
    :param rng: Source of the chain seeds
    :return: One sample record per pair
    """
    samples = []
    for pair in pairs:
        cond = np.tile(embed_text(pair.target, world), (n_samples, 1))
        rngs = [np.random.default_rng(int(seed)) for seed in rng.integers(0, 2**62, n_samples)]
        samples.append(ReflSample(pair, cond, run_chain(net, schedule, cond, rngs, stop=t)))
    return samples


def reward_loss(
    net: AbstractDenoiser,
    schedule: NoiseSchedule,
    samples: Sequence[ReflSample],
    t: int,
    reward: RewardFunction,
    config: ReflConfig,
) -> tuple[GradNode, GradNode]:
    """
    Score the clean images predicted at step t and turn the mean reward into a loss.

    :param net: Denoiser
    :param schedule: Noise schedule
    :param samples: Noisy images per pair
    :param t: Reward step
    :param reward: Reward function
    :param config: Reward weight and map
    :raises MaskError: No samples
    :return: (lam * phi(mean reward), mean reward) as scalar nodes
    """
    if not samples:
        raise MaskError("reward loss of an empty batch")
    total: GradNode | None = None
    for sample in samples:
        predicted = predict_x0(net, schedule, sample.z_t, t, sample.cond)
        pair_reward = reward.total_node(sample.pair.source, sample.pair.target, predicted)
        total = pair_reward if total is None else add(total, pair_reward)
    assert total is not None
    mean_reward = scale(total, 1.0 / len(samples))
    return scale(apply_phi(config.phi, mean_reward), config.lam), mean_reward


def refl_step(
    net: AbstractDenoiser,
    schedule: NoiseSchedule,
    pairs: Sequence[PromptPair],
    world: WorldEmbedding,
    examples: Sequence[PretrainExample],
    reward: RewardFunction,
    config: ReflConfig,
    step_seed: Sequence[int],
) -> ReflStepResult:
    """
    Accumulate the gradient of lam * phi(R) + L_pre into the denoiser.

    The reward path draws from default_rng([*step_seed, 0]), the regularizer batch from
    default_rng([*step_seed, 1]). No parameter is changed here.

    :param net: Denoiser
    :param schedule: Noise schedule
    :param pairs: Prompt pairs of this step
    :param world: World embedding
    :param examples: Pretraining examples for the regularizer
    :param reward: Reward function (its config sets the images per pair)
    :param config: Step range, weight, map and regularizer batch size
    :param step_seed: Seed entropy of this step
    :raises StepError: t2 beyond the schedule
    :raises NumericError: A non-finite value; the caller should drop the gradients
    :raises DomainError: A degenerate predicted image; the caller should drop the gradients
    :return: Loss components
    """
    if config.t2 > schedule.steps:
        raise StepError(f"refl.t2 = {config.t2} beyond T = {schedule.steps}")
    reward_rng = np.random.default_rng([*step_seed, 0])
    t = int(reward_rng.integers(config.t1, config.t2 + 1))
    samples = truncated_samples(net, schedule, pairs, world, t, reward.config.n_samples, reward_rng)
    l_r, mean_reward = reward_loss(net, schedule, samples, t, reward, config)

    pretrain_rng = np.random.default_rng([*step_seed, 1])
    images, conds = draw_batch(examples, world, config.pretrain_batch, pretrain_rng)
    l_pre = pretrain_loss(net, schedule, images, conds, pretrain_rng)

    loss = add(l_r, l_pre)
    backward(loss)
    return ReflStepResult(t, mean_reward.item(), l_r.item(), l_pre.item(), loss.item())


def refl_finetune(
    net: AbstractDenoiser,
    schedule: NoiseSchedule,
    corpus: Sequence[PromptPair],
    world: WorldEmbedding,
    reward: RewardFunction,
    config: ReflConfig,
    on_checkpoint: ReflHook | None = None,
    progress: bool = False,
) -> ReflResult:
    """
    Fine-tune the denoiser on reward feedback, regularized by the denoising loss.

    Step s draws its pairs and every other random quantity from seeds derived from (seed, s).

    :param net: Pretrained denoiser, updated in place
    :param schedule: Noise schedule
    :param corpus: Prompt pairs
    :param world: World embedding
    :param reward: Reward function
    :param config: Fine-tuning settings
    :param on_checkpoint: Called with (step, net) every checkpoint_every steps
    :param progress: Show a progress bar
    :raises MaskError: Empty corpus
    :raises StepError: t2 beyond the schedule
    :raises NumericError: Three consecutive steps failed
    :return: Reward curve
    """
    if not corpus:
        raise MaskError("ReFL needs a non-empty corpus")
    if config.t2 > schedule.steps:
        raise StepError(f"refl.t2 = {config.t2} beyond T = {schedule.steps}")
    ordered = sorted(corpus, key=lambda pair: (pair.concept, pair.source, pair.target, pair.modifiers))
    examples = pretrain_examples(ordered, world)
    optimizer = make_optimizer(config.optimizer, net.params, config.lr)
    result = ReflResult()
    window: list[ReflStepResult] = []
    consecutive = 0
    for step in tqdm(range(1, config.steps + 1), desc="refl", disable=not progress):
        picks = np.random.default_rng([config.seed, step, 2]).integers(0, len(ordered), config.batch_size)
        try:
            outcome = refl_step(
                net, schedule, [ordered[int(i)] for i in picks], world, examples, reward, config, [config.seed, step]
            )
            optimizer.step()
        except PoacError as err:
            zero_grads(net.params)
            consecutive += 1
            result.failures += 1
            logger.warning(f"ReFL step {step} skipped: {err!r}")
            if consecutive >= MAX_CONSECUTIVE_FAILURES:
                logger.error(f"Aborting ReFL after step {step}: {consecutive} consecutive failures")
                raise NumericError(f"{consecutive} consecutive ReFL steps failed") from err
            continue
        consecutive = 0
        result.steps = step
        window.append(outcome)
        if step % config.log_every == 0 or step == config.steps:
            point = CurvePoint(
                step,
                float(np.mean([o.reward for o in window])),
                float(np.mean([o.l_pre for o in window])),
                float(np.mean([o.l_r for o in window])),
            )
            result.curve.append(point)
            logger.info(f"ReFL step {step}: reward={point.reward:.6f} l_pre={point.l_pre:.6f} l_r={point.l_r:.6f}")
            window = []
        if on_checkpoint is not None and config.checkpoint_every and step % config.checkpoint_every == 0:
            on_checkpoint(step, net)
    return result


def curve_to_csv(curve: Sequence[CurvePoint]) -> str:
    """
    Serialize a reward curve.

    :param curve: Curve points
    :return: CSV text with columns step, reward, l_pre, l_r
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["step", "reward", "l_pre", "l_r"])
    for point in curve:
        writer.writerow([point.step, repr(point.reward), repr(point.l_pre), repr(point.l_r)])
    return buffer.getvalue()
