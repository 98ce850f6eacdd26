import math
from collections.abc import Sequence

import numpy as np
import pytest

from src.model.core.autodiff import Array, GradNode, backward, constant, zero_grads
from src.model.core.errors import ConfigError, DomainError, MaskError, NumericError, StepError
from src.model.core.prompt_representations import PromptPair
from src.model.core.settings import (
    DESK_REFL_LAMBDA,
    DESK_REFL_LR,
    EpsNetConfig,
    PretrainConfig,
    ReflConfig,
    RewardConfig,
    ScheduleConfig,
)
from src.model.denoisers.eps_net import EpsNet
from src.model.diffusion.ddpm import pretrain_loss
from src.model.diffusion.noise_schedule import NoiseSchedule
from src.model.diffusion.pretrainer import draw_batch, pretrain, pretrain_examples
from src.model.generators.diffusion_image_generator import DiffusionImageGenerator
from src.model.refl.refl_trainer import (
    apply_phi,
    curve_to_csv,
    refl_finetune,
    refl_step,
    reward_loss,
    truncated_samples,
)
from src.model.reward.reward_function import RewardFunction, total_reward
from src.model.scorers.abstract_relevance_scorer import AbstractRelevanceScorer
from src.model.textworld.world_embedding import WorldEmbedding
from tests.stubs import ConstantAestheticScorer, ConstantRelevanceScorer, TappedDenoiser, central_difference

SMALL_REFL = ReflConfig(t2=4, steps=3, batch_size=2, pretrain_batch=8, log_every=2)
DESK_REFL = ReflConfig(lam=DESK_REFL_LAMBDA, optimizer="adam", lr=DESK_REFL_LR)


def _grads(net: EpsNet) -> dict[str, Array]:
    return {name: node.grad.array.copy() for name, node in net.params.items()}


def _constant_reward(pairs: list[PromptPair], value: float, aes: float = 0.5) -> RewardFunction:
    scores = {}
    for pair in pairs:
        scores[pair.source] = value
        scores[pair.target] = value
    return RewardFunction(ConstantRelevanceScorer(scores), ConstantAestheticScorer(aes), RewardConfig(n_samples=2))


@pytest.mark.parametrize(
    "kind, reward, expected",
    [
        ("negate", 0.5, -0.5),
        ("softplus", 0.0, math.log(2.0)),
        ("softplus", 1.5, math.log1p(math.exp(-1.5))),
        ("hinge", 0.5, 1.5),
        ("hinge", 3.0, 0.0),
    ],
)
def test_apply_phi(kind: str, reward: float, expected: float) -> None:
    assert apply_phi(kind, constant(reward)).item() == pytest.approx(expected, rel=1e-12, abs=1e-15)


def test_apply_phi_unknown_map() -> None:
    with pytest.raises(ConfigError):
        apply_phi("square", constant(1.0))


def test_truncated_samples(
    short_schedule: NoiseSchedule, small_net: EpsNet, corpus: list[PromptPair], world: WorldEmbedding
) -> None:
    first = truncated_samples(small_net, short_schedule, corpus[:2], world, 3, 4, np.random.default_rng(0))
    second = truncated_samples(small_net, short_schedule, corpus[:2], world, 3, 4, np.random.default_rng(0))
    assert [sample.pair for sample in first] == corpus[:2]
    for one, two in zip(first, second):
        assert one.z_t.shape == one.cond.shape == (4, world.dim)
        np.testing.assert_array_equal(one.z_t, two.z_t)


def test_reward_loss_needs_samples(short_schedule: NoiseSchedule, small_net: EpsNet, world: WorldEmbedding) -> None:
    reward = RewardFunction.for_world(world, RewardConfig())
    with pytest.raises(MaskError):
        reward_loss(small_net, short_schedule, [], 2, reward, ReflConfig(t2=8))


def test_constant_reward_has_no_gradient(
    short_schedule: NoiseSchedule, small_net: EpsNet, corpus: list[PromptPair], world: WorldEmbedding
) -> None:
    pairs = corpus[:3]
    samples = truncated_samples(small_net, short_schedule, pairs, world, 2, 2, np.random.default_rng(1))

    l_r, mean_reward = reward_loss(small_net, short_schedule, samples, 2, _constant_reward(pairs, 0.4), ReflConfig())

    assert mean_reward.item() == pytest.approx(0.4 + 0.5, rel=1e-12)
    assert l_r.item() == pytest.approx(-0.9, rel=1e-12)
    for name, grad in backward(l_r).items():
        np.testing.assert_array_equal(grad.array, np.zeros_like(grad.array), err_msg=name)


def test_zero_weight_leaves_only_pretraining_gradient(
    short_schedule: NoiseSchedule, small_net: EpsNet, corpus: list[PromptPair], world: WorldEmbedding
) -> None:
    config = ReflConfig(t2=8, lam=0.0, pretrain_batch=8)
    examples = pretrain_examples(corpus, world)
    reward = RewardFunction.for_world(world, RewardConfig(n_samples=2))

    refl_step(small_net, short_schedule, corpus[:2], world, examples, reward, config, [4, 1])
    combined = _grads(small_net)
    zero_grads(small_net.params)

    rng = np.random.default_rng([4, 1, 1])
    images, conds = draw_batch(examples, world, 8, rng)
    backward(pretrain_loss(small_net, short_schedule, images, conds, rng))

    for name, grad in _grads(small_net).items():
        np.testing.assert_array_equal(combined[name], grad, err_msg=name)


@pytest.mark.parametrize("seed", range(20))
def test_reward_gradient_matches_finite_differences(
    short_schedule: NoiseSchedule, corpus: list[PromptPair], world: WorldEmbedding, seed: int
) -> None:
    net = EpsNet(world.dim, EpsNetConfig(hidden=4, time_dim=2, seed=seed))
    rng = np.random.default_rng(seed)
    t = int(rng.integers(1, short_schedule.steps + 1))
    reward = RewardFunction.for_world(world, RewardConfig(n_samples=2))
    config = ReflConfig(t2=8)
    samples = truncated_samples(net, short_schedule, corpus[seed : seed + 2], world, t, 2, rng)
    state = net.state_dict()

    def evaluate() -> float:
        net.load_state(state)
        return reward_loss(net, short_schedule, samples, t, reward, config)[0].item()

    net.load_state(state)
    grads = backward(reward_loss(net, short_schedule, samples, t, reward, config)[0])
    for name, array in state.items():
        for _ in range(2):
            index = tuple(int(rng.integers(dim)) for dim in array.shape)
            numeric = central_difference(evaluate, array, index)
            assert grads[name].array[index] == pytest.approx(numeric, rel=1e-4, abs=1e-7), (name, index)


def test_finetune_without_steps(
    short_schedule: NoiseSchedule, small_net: EpsNet, corpus: list[PromptPair], world: WorldEmbedding
) -> None:
    before = small_net.state_dict()
    reward = RewardFunction.for_world(world, RewardConfig(n_samples=2))

    result = refl_finetune(small_net, short_schedule, corpus, world, reward, ReflConfig(t2=8, steps=0))

    assert (result.curve, result.steps, result.failures) == ([], 0, 0)
    for name, array in small_net.state_dict().items():
        np.testing.assert_array_equal(array, before[name])


def test_finetune_checks_inputs(
    short_schedule: NoiseSchedule, small_net: EpsNet, corpus: list[PromptPair], world: WorldEmbedding
) -> None:
    reward = RewardFunction.for_world(world, RewardConfig(n_samples=2))
    with pytest.raises(StepError):
        refl_finetune(small_net, short_schedule, corpus, world, reward, ReflConfig(t2=9, steps=1))
    with pytest.raises(MaskError):
        refl_finetune(small_net, short_schedule, [], world, reward, SMALL_REFL)


def test_finetune_is_reproducible(
    short_schedule: NoiseSchedule, corpus: list[PromptPair], world: WorldEmbedding
) -> None:
    reward = RewardFunction.for_world(world, RewardConfig(n_samples=2))
    config = ReflConfig(t2=4, steps=3, batch_size=2, pretrain_batch=8, log_every=2, checkpoint_every=2)
    runs = []
    for order in (corpus, corpus[::-1]):
        net = EpsNet(world.dim, EpsNetConfig(hidden=8, time_dim=4, seed=3))
        before = net.state_dict()
        seen: list[int] = []
        result = refl_finetune(net, short_schedule, order, world, reward, config, lambda step, _: seen.append(step))
        assert not np.array_equal(net.state_dict()["w2"], before["w2"])
        runs.append((result, net.state_dict(), seen))

    (first, first_state, seen), (second, second_state, _) = runs
    assert [point.step for point in first.curve] == [2, 3]
    assert first.curve == second.curve
    assert (first.steps, first.failures) == (3, 0)
    assert seen == [2]
    for name, array in first_state.items():
        np.testing.assert_array_equal(array, second_state[name])

    lines = curve_to_csv(first.curve).splitlines()
    assert lines[0] == "step,reward,l_pre,l_r"
    assert len(lines) == 3
    assert float(lines[1].split(",")[1]) == first.curve[0].reward


def test_repeated_numeric_failures_abort(
    short_schedule: NoiseSchedule, small_net: EpsNet, corpus: list[PromptPair], world: WorldEmbedding
) -> None:
    before = small_net.state_dict()
    reward = _constant_reward(corpus, 0.4, aes=float("nan"))

    with pytest.raises(NumericError):
        refl_finetune(small_net, short_schedule, corpus, world, reward, SMALL_REFL)

    for name, node in small_net.params.items():
        np.testing.assert_array_equal(node.array, before[name])
        assert node.grad_array is None


class _DegenerateRelevanceScorer(AbstractRelevanceScorer):
    def score(self, prompt: Sequence[str], images: GradNode) -> GradNode:
        raise DomainError("cosine of a zero-norm image")


def test_reward_gradient_stops_at_the_sampled_step(
    short_schedule: NoiseSchedule, small_net: EpsNet, corpus: list[PromptPair], world: WorldEmbedding
) -> None:
    t = 3
    reward = RewardFunction.for_world(world, RewardConfig(n_samples=2))
    config = ReflConfig(t2=8)

    early = TappedDenoiser(small_net, range(t + 1, short_schedule.steps + 1))
    samples = truncated_samples(early, short_schedule, corpus[:2], world, t, 2, np.random.default_rng(0))
    grads = backward(reward_loss(early, short_schedule, samples, t, reward, config)[0])
    assert "tap" not in grads
    assert early.params["tap"].grad_array is None
    assert np.any(grads["w2"].array != 0.0)

    late = TappedDenoiser(small_net, [t])
    samples = truncated_samples(late, short_schedule, corpus[:2], world, t, 2, np.random.default_rng(0))
    grads = backward(reward_loss(late, short_schedule, samples, t, reward, config)[0])
    assert np.any(grads["tap"].array != 0.0)


def test_only_the_reward_step_builds_a_graph(
    short_schedule: NoiseSchedule, small_net: EpsNet, corpus: list[PromptPair], world: WorldEmbedding
) -> None:
    spy = TappedDenoiser(small_net, [])
    config = ReflConfig(t2=8, pretrain_batch=8)
    reward = RewardFunction.for_world(world, RewardConfig(n_samples=2))

    examples = pretrain_examples(corpus, world)

    outcome = refl_step(spy, short_schedule, corpus[:2], world, examples, reward, config, [5, 1])

    chain = [steps for steps, recorded in spy.calls if not recorded]
    graphed = [steps for steps, recorded in spy.calls if recorded]
    assert chain == [(s, s) for s in range(short_schedule.steps, outcome.t, -1)] * 2
    assert graphed[:2] == [(outcome.t, outcome.t)] * 2
    assert len(graphed) == 3
    assert len(graphed[2]) == 8


def test_degenerate_images_abort_like_numeric_failures(
    short_schedule: NoiseSchedule, small_net: EpsNet, corpus: list[PromptPair], world: WorldEmbedding
) -> None:
    before = small_net.state_dict()
    reward = RewardFunction(_DegenerateRelevanceScorer(), ConstantAestheticScorer(0.5), RewardConfig(n_samples=2))

    with pytest.raises(NumericError, match="3 consecutive") as info:
        refl_finetune(small_net, short_schedule, corpus, world, reward, SMALL_REFL)

    assert isinstance(info.value.__cause__, DomainError)
    for name, node in small_net.params.items():
        np.testing.assert_array_equal(node.array, before[name])
        assert node.grad_array is None


@pytest.mark.slow
def test_finetuning_raises_reward(corpus: list[PromptPair], world: WorldEmbedding) -> None:
    schedule = NoiseSchedule.from_config(ScheduleConfig())
    net = EpsNet(world.dim, EpsNetConfig())
    pretrain(net, schedule, corpus, world, PretrainConfig(steps=2000, optimizer="adam", lr=1e-3))
    reward = RewardFunction.for_world(world, RewardConfig())
    generator = DiffusionImageGenerator(net, schedule, world)

    def mean_reward() -> float:
        return float(np.mean([total_reward(p.source, p.target, generator, reward).total for p in corpus[:12]]))

    def regularizer() -> float:
        rng = np.random.default_rng(99)
        images, conds = draw_batch(pretrain_examples(corpus, world), world, 512, rng)
        return pretrain_loss(net, schedule, images, conds, rng).item()

    before, l_pre_before = mean_reward(), regularizer()
    refl_finetune(net, schedule, corpus, world, reward, DESK_REFL)

    assert mean_reward() - before >= 0.02
    assert regularizer() < 1.2 * l_pre_before
