import math
from collections import defaultdict
from dataclasses import replace

import numpy as np
import pytest

from src.model.core.autodiff import backward, constant, no_grad
from src.model.core.errors import CheckpointError, LengthError, MaskError, ShapeError, TruncationWarning, VocabError
from src.model.core.prompt_representations import BOS, EOS, SEP, PromptPair
from src.model.core.settings import DESK_PLM_LR, LexiconConfig, PlmConfig
from src.model.plm.decoding import rewrite
from src.model.plm.prompt_language_model import (
    PlmModel,
    format_pair,
    format_prefix,
    masked_cross_entropy,
    sft_loss,
)
from src.model.plm.sft_trainer import SftResult, canonical_order, sft_train
from src.model.textworld.world_embedding import WorldEmbedding
from tests.stubs import central_difference

PAIR = PromptPair("peace", ("a", "world", "of", "peace"), ("a", "dove", "and", "lake", "nostalgic"), ("nostalgic",))


def _zero_model(world: WorldEmbedding, config: PlmConfig) -> PlmModel:
    model = PlmModel(world.vocab, config)
    return PlmModel(world.vocab, config, state={name: np.zeros(shape) for name, shape in model.param_shapes().items()})


def test_format_pair() -> None:
    formatted = format_pair(PAIR)
    assert formatted.tokens == (BOS, "a", "world", "of", "peace", SEP, "a", "dove", "and", "lake", "nostalgic", EOS)
    assert formatted.mask == (0,) * 6 + (1,) * 6
    assert formatted.target() == PAIR.target


def test_format_pair_with_empty_target() -> None:
    formatted = format_pair(PromptPair("peace", ("peace",), (), ()))
    assert formatted.tokens == (BOS, "peace", SEP, EOS)
    assert formatted.mask == (0, 0, 0, 1)
    assert formatted.target() == ()


def test_format_length_limits() -> None:
    assert len(format_pair(PAIR, max_len=12).tokens) == 12
    with pytest.raises(LengthError):
        format_pair(PAIR, max_len=11)
    assert format_prefix(PAIR.source) == (BOS, "a", "world", "of", "peace", SEP)
    with pytest.raises(LengthError):
        format_prefix(PAIR.source, max_len=5)


def test_zero_model_loss_is_log_vocab(
    world: WorldEmbedding, tiny_plm_config: PlmConfig, corpus: list[PromptPair]
) -> None:
    model = _zero_model(world, tiny_plm_config)
    loss = sft_loss(model, [format_pair(pair) for pair in corpus[:5]])
    assert loss.item() == pytest.approx(math.log(len(world.vocab)), rel=1e-12)


def test_masked_cross_entropy_of_confident_logits() -> None:
    targets = [2, 0, 3]
    logits = np.zeros((3, 4))
    logits[np.arange(3), targets] = 50.0
    assert masked_cross_entropy(constant(logits), targets, [1, 1, 1]).item() == pytest.approx(0.0, abs=1e-12)


def test_masked_positions_carry_no_loss() -> None:
    rng = np.random.default_rng(0)
    logits = rng.standard_normal((4, 5))
    targets = [1, 4, 0, 2]
    mask = [0, 1, 0, 1]
    changed = logits.copy()
    changed[[0, 2]] = rng.standard_normal((2, 5)) * 10.0

    first = masked_cross_entropy(constant(logits), targets, mask).item()
    second = masked_cross_entropy(constant(changed), targets, mask).item()

    assert first == second
    log_probs = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    assert first == pytest.approx(-(log_probs[1, 4] + log_probs[3, 2]) / 2.0, rel=1e-12)


def test_masked_cross_entropy_errors() -> None:
    logits = constant(np.zeros((2, 3)))
    with pytest.raises(MaskError):
        masked_cross_entropy(logits, [0, 1], [0, 0])
    with pytest.raises(ShapeError):
        masked_cross_entropy(logits, [0, 1, 2], [1, 1, 1])


def test_sft_loss_of_empty_batch(world: WorldEmbedding, tiny_plm_config: PlmConfig) -> None:
    with pytest.raises(MaskError):
        sft_loss(PlmModel(world.vocab, tiny_plm_config), [])


@pytest.mark.parametrize("seed", range(3))
def test_sft_gradient_matches_finite_differences(world: WorldEmbedding, corpus: list[PromptPair], seed: int) -> None:
    config = PlmConfig(d_model=4, n_layers=1, n_heads=2, max_len=32, init_scale=0.3)
    model = PlmModel(world.vocab, config, seed=seed)
    batch = [format_pair(pair) for pair in corpus[seed : seed + 2]]
    state = model.state_dict()

    def evaluate() -> float:
        model.load_state(state)
        return sft_loss(model, batch).item()

    model.load_state(state)
    grads = backward(sft_loss(model, batch))
    rng = np.random.default_rng(seed)
    for name, array in state.items():
        used_rows = sorted(set(world.vocab.encode(batch[0].tokens)))
        for _ in range(3):
            if name == "tok_emb":
                index = (used_rows[int(rng.integers(len(used_rows)))], int(rng.integers(array.shape[1])))
            else:
                index = tuple(int(rng.integers(dim)) for dim in array.shape)
            numeric = central_difference(evaluate, array, index)
            assert grads[name].array[index] == pytest.approx(numeric, rel=1e-4, abs=1e-7), (name, index)


def test_zero_epochs_leave_model_unchanged(
    world: WorldEmbedding, tiny_plm_config: PlmConfig, corpus: list[PromptPair]
) -> None:
    config = replace(tiny_plm_config, epochs=0)
    model = PlmModel(world.vocab, config, seed=1)
    before = model.state_dict()

    result = sft_train(model, corpus, config, seed=0)

    assert result.losses == []
    for name, array in model.state_dict().items():
        np.testing.assert_array_equal(array, before[name])


def test_training_ignores_corpus_order(
    world: WorldEmbedding, tiny_plm_config: PlmConfig, corpus: list[PromptPair]
) -> None:
    first = sft_train(PlmModel(world.vocab, tiny_plm_config, seed=1), corpus, tiny_plm_config, seed=5)
    second = sft_train(PlmModel(world.vocab, tiny_plm_config, seed=1), corpus[::-1], tiny_plm_config, seed=5)

    assert len(first.losses) == tiny_plm_config.epochs
    assert first.losses == second.losses
    for name, array in first.model.state_dict().items():
        np.testing.assert_array_equal(array, second.model.state_dict()[name])


def test_checkpoint_hook(world: WorldEmbedding, tiny_plm_config: PlmConfig, corpus: list[PromptPair]) -> None:
    config = replace(tiny_plm_config, epochs=3, checkpoint_every=2)
    seen: list[int] = []

    result = sft_train(PlmModel(world.vocab, config), corpus[:8], config, 0, lambda epoch, model: seen.append(epoch))

    assert seen == result.checkpoint_epochs == [2, 3]


def test_empty_corpus(world: WorldEmbedding, tiny_plm_config: PlmConfig) -> None:
    with pytest.raises(MaskError):
        sft_train(PlmModel(world.vocab, tiny_plm_config), [], tiny_plm_config, 0)


def test_canonical_order(corpus: list[PromptPair]) -> None:
    assert canonical_order(corpus[::-1]) == canonical_order(corpus)


def test_zero_model_decodes_until_truncated(world: WorldEmbedding, tiny_plm_config: PlmConfig) -> None:
    model = _zero_model(world, tiny_plm_config)
    result = rewrite(model, PAIR.source)
    assert result.truncated
    assert isinstance(result.warning, TruncationWarning)
    assert result.tokens == ()
    assert result.text == ""


def test_decoding_errors(world: WorldEmbedding, tiny_plm_config: PlmConfig) -> None:
    model = PlmModel(world.vocab, tiny_plm_config)
    with pytest.raises(VocabError):
        rewrite(model, ("a", "unicorn"))
    with pytest.raises(LengthError):
        rewrite(model, ("peace",) * tiny_plm_config.max_len)


def test_decoding_is_deterministic(world: WorldEmbedding, tiny_plm_config: PlmConfig) -> None:
    first = PlmModel(world.vocab, tiny_plm_config, seed=2)
    second = PlmModel(world.vocab, tiny_plm_config, seed=2)
    for options in ({}, {"top_k": 5, "seed": 9}):
        one = rewrite(first, PAIR.source, **options)
        two = rewrite(second, PAIR.source, **options)
        assert (one.tokens, one.truncated) == (two.tokens, two.truncated)


def test_load_state_checks_parameters(world: WorldEmbedding, tiny_plm_config: PlmConfig) -> None:
    model = PlmModel(world.vocab, tiny_plm_config)
    state = model.state_dict()
    del state["w_out"]
    with pytest.raises(CheckpointError, match="missing"):
        model.load_state(state)


@pytest.mark.slow
def test_memorizes_small_corpus(world: WorldEmbedding, corpus: list[PromptPair]) -> None:
    pairs = []
    for pair in corpus:
        if pair.concept == "peace" and all(pair.source != kept.source for kept in pairs):
            pairs.append(pair)
    config = PlmConfig(epochs=300, batch_size=3, optimizer="adam", lr=DESK_PLM_LR)

    result = sft_train(PlmModel(world.vocab, config), pairs, config, seed=0)

    assert result.losses[-1] < 0.05
    for pair in pairs:
        assert rewrite(result.model, pair.source).tokens == pair.target


def _generating_loss(pairs: list[PromptPair], pool_size: int) -> float:
    # Mean per-token loss of the process that built the pairs: a uniform scene per source, then uniform modifier draws
    scenes: dict[tuple[str, ...], set[tuple[str, ...]]] = defaultdict(set)
    for pair in pairs:
        scenes[pair.source].add(pair.target[: len(pair.target) - len(pair.modifiers)])
    config = LexiconConfig()
    counts = config.max_modifiers - config.min_modifiers + 1
    nll = sum(
        math.log(len(scenes[pair.source])) + math.log(counts) + math.log(math.perm(pool_size, len(pair.modifiers)))
        for pair in pairs
    )
    return nll / sum(len(pair.target) + 1 for pair in pairs)


@pytest.fixture(scope="module")
def full_corpus_sft(full_world: WorldEmbedding, full_corpus: list[PromptPair]) -> SftResult:
    config = PlmConfig()
    return sft_train(PlmModel(full_world.vocab, config), full_corpus, config, seed=0)


@pytest.mark.slow
def test_sft_loss_falls_to_the_corpus_entropy(
    full_corpus_sft: SftResult, full_corpus: list[PromptPair], modifiers: list[str]
) -> None:
    floor = _generating_loss(full_corpus, len(modifiers))
    with no_grad():
        final = sft_loss(full_corpus_sft.model, [format_pair(pair) for pair in full_corpus]).item()
    first = full_corpus_sft.losses[0]

    # random scenes and modifiers keep the floor near 0.8 nats per token
    assert 0.3 < floor < first
    assert final - floor <= 0.05 * (first - floor)


@pytest.mark.slow
def test_trained_sources_rewrite_to_concrete_scenes(
    full_corpus_sft: SftResult, full_corpus: list[PromptPair], full_world: WorldEmbedding
) -> None:
    vocab = full_world.vocab
    sources = sorted({pair.source for pair in full_corpus})
    rewrites = [rewrite(full_corpus_sft.model, source).tokens for source in sources]
    concrete = sum(len(vocab.objects_in(tokens)) >= 2 and not vocab.concepts_in(tokens) for tokens in rewrites)
    assert concrete >= 0.9 * len(sources)


@pytest.mark.slow
def test_memorizes_single_pair(world: WorldEmbedding, corpus: list[PromptPair]) -> None:
    pair = corpus[0]
    config = PlmConfig(epochs=500, batch_size=1, optimizer="adam", lr=DESK_PLM_LR)

    result = sft_train(PlmModel(world.vocab, config), [pair], config, seed=0)

    assert result.losses[-1] < 0.01 * math.log(len(world.vocab))
    assert rewrite(result.model, pair.source).tokens == pair.target
