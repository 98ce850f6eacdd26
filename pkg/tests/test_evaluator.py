import json
import math

import numpy as np
import pytest

from src.model.core.errors import CheckpointError, ConfigError, ProtocolError
from src.model.core.prompt_representations import ConceptEntry
from src.model.core.settings import ConfigId, EvalConfig, PlmConfig, RewardConfig
from src.model.evaluation.evaluator import (
    ScoreRow,
    compare_table,
    evaluate,
    evaluate_config,
    relative_improvements,
    report_json,
    rows_to_csv,
    select_concepts,
    split_holdout,
    verdict,
)
from src.model.plm.prompt_language_model import PlmModel
from src.model.reward.reward_function import RewardFunction
from src.model.textworld.world_embedding import WorldEmbedding, clip_score, embed_text
from tests.stubs import echo_generator, seeded_noise_generator


Scores = tuple[float, float]


def _rows(base: Scores, poac: Scores, refl: Scores, n: int = 12) -> list[ScoreRow]:
    return [
        ScoreRow(ConfigId.BASE, *base, n, 0),
        ScoreRow(ConfigId.POAC, *poac, n, 0),
        ScoreRow(ConfigId.POAC_REFL, *refl, n, 0),
    ]


@pytest.fixture
def reward(world: WorldEmbedding) -> RewardFunction:
    return RewardFunction.for_world(world, RewardConfig())


def test_expected_ordering_passes() -> None:
    result = verdict(_rows((0.5, 0.6), (0.6, 0.7), (0.62, 0.698)))
    assert result.passed
    assert result.reasons == ()
    assert str(result) == "PASS"


def test_margins_are_inclusive() -> None:
    assert verdict(_rows((0.1, 0.6), (0.11, 0.61), (0.12, 0.605))).passed


def test_relevance_gain_is_relative_to_base() -> None:
    assert verdict(_rows((0.21, 0.19), (0.29, 0.25), (0.32, 0.26))).passed
    assert verdict(_rows((0.0, 0.6), (0.01, 0.61), (0.02, 0.61))).passed

    result = verdict(_rows((0.30, 0.50), (0.31, 0.51), (0.32, 0.51)))
    assert not result.passed
    assert result.reasons == ("POAC rel gain below 10% of BASE",)


@pytest.mark.parametrize("refl_aes, passed", [(0.695, True), (0.694, False)])
def test_aesthetics_may_dip_within_tolerance(refl_aes: float, passed: bool) -> None:
    rows = _rows((0.5, 0.6), (0.6, 0.7), (0.7, refl_aes))
    assert verdict(rows).passed is passed
    assert compare_table(rows)[1].passed is passed


@pytest.mark.parametrize(
    "rows, reasons",
    [
        (_rows((0.5, 0.6), (0.6, 0.7), (0.59, 0.7)), ("POAC_REFL rel below POAC",)),
        (
            _rows((0.5, 0.6), (0.505, 0.7), (0.6, 0.7)),
            ("POAC rel within 0.01 of BASE", "POAC rel gain below 10% of BASE"),
        ),
        (
            _rows((0.5, 0.6), (0.5, 0.7), (0.6, 0.7)),
            ("POAC rel within 0.01 of BASE", "POAC rel gain below 10% of BASE"),
        ),
        (_rows((0.5, 0.6), (0.54, 0.7), (0.6, 0.7)), ("POAC rel gain below 10% of BASE",)),
        (_rows((0.5, 0.6), (0.6, 0.605), (0.7, 0.7)), ("POAC aes not 0.01 above BASE",)),
        (_rows((0.5, 0.6), (0.6, 0.7), (0.7, 0.69)), ("POAC_REFL aes more than 0.005 below POAC",)),
        (
            _rows((0.5, 0.6), (0.4, 0.5), (0.3, 0.4)),
            (
                "POAC rel below BASE",
                "POAC_REFL rel below POAC",
                "POAC aes not 0.01 above BASE",
                "POAC_REFL aes more than 0.005 below POAC",
            ),
        ),
    ],
)
def test_failed_checks(rows: list[ScoreRow], reasons: tuple[str, ...]) -> None:
    result = verdict(rows)
    assert not result.passed
    assert result.reasons == reasons
    assert str(result) == "FAIL: " + "; ".join(reasons)


def test_verdict_ignores_row_order() -> None:
    rows = _rows((0.5, 0.6), (0.6, 0.7), (0.62, 0.698))
    assert verdict(rows[::-1]).passed


@pytest.mark.parametrize(
    "rows",
    [
        _rows((0.5, 0.6), (0.6, 0.7), (0.62, 0.698))[:2],
        _rows((0.5, 0.6), (0.6, 0.7), (0.62, 0.698))[:2] * 2,
        [*_rows((0.5, 0.6), (0.6, 0.7), (0.62, 0.698))[:2], ScoreRow(ConfigId.POAC, 0.6, 0.7, 12, 0)],
        [*_rows((0.5, 0.6), (0.6, 0.7), (0.62, 0.698))[:2], ScoreRow(ConfigId.POAC_REFL, 0.7, 0.7, 13, 0)],
        _rows((0.5, 0.6), (math.nan, 0.7), (0.62, 0.698)),
        _rows((0.5, 0.6), (0.6, 0.7), (0.62, math.inf)),
    ],
)
def test_malformed_rows(rows: list[ScoreRow]) -> None:
    with pytest.raises(ProtocolError):
        verdict(rows)


def test_rows_to_csv() -> None:
    rows = _rows((0.5, 0.25), (0.6, 0.7), (0.1 + 0.2, 0.75), n=36)
    assert rows_to_csv(rows).splitlines() == [
        "config,rel_score,aes_score,n,seed",
        "BASE,0.5,0.25,36,0",
        "POAC,0.6,0.7,36,0",
        "POAC_REFL,0.30000000000000004,0.75,36,0",
    ]


def test_compare_table_orders_rows() -> None:
    rows = _rows((0.5, 0.6), (0.6, 0.7), (0.62, 0.698))
    table, result = compare_table([rows[2], rows[0], rows[1]])
    assert table == rows_to_csv(rows)
    assert result.passed


def test_relative_improvements() -> None:
    gains = relative_improvements(_rows((0.5, 0.5), (0.6, 0.75), (0.66, 0.75)))
    assert gains["rel_poac_over_base"] == pytest.approx(0.2)
    assert gains["rel_refl_over_poac"] == pytest.approx(0.1)
    assert gains["aes_poac_over_base"] == pytest.approx(0.5)
    assert gains["aes_refl_over_poac"] == 0.0
    assert relative_improvements(_rows((0.0, 0.5), (0.1, 0.6), (0.2, 0.7)))["rel_poac_over_base"] == math.inf


def test_report_json() -> None:
    rows = _rows((0.5, 0.6), (0.6, 0.7), (0.62, 0.698))
    rows[0].per_concept = {"peace": (0.4, 0.5)}

    report = json.loads(json.dumps(report_json(rows)))

    assert [row["config"] for row in report["rows"]] == ["BASE", "POAC", "POAC_REFL"]
    assert report["rows"][0]["per_concept"] == {"peace": {"rel": 0.4, "aes": 0.5}}
    assert set(report["relative_improvements"]) == {
        "rel_poac_over_base",
        "rel_refl_over_poac",
        "aes_poac_over_base",
        "aes_refl_over_poac",
    }
    assert report["verdict"] == "PASS"


@pytest.mark.parametrize("size, trained, held", [(40, 32, 8), (5, 4, 1), (2, 1, 1), (1, 1, 0), (0, 0, 0)])
def test_split_holdout(full_lexicon: list[ConceptEntry], size: int, trained: int, held: int) -> None:
    train, test = split_holdout(full_lexicon[:size])
    assert (len(train), len(test)) == (trained, held)
    assert train + test == full_lexicon[:size]


def test_select_concepts(lexicon: list[ConceptEntry]) -> None:
    assert select_concepts(lexicon, EvalConfig()) == lexicon
    chosen = select_concepts(lexicon, EvalConfig(concepts=["wisdom", "peace"]))
    assert [entry.concept for entry in chosen] == ["peace", "wisdom"]
    assert [entry.concept for entry in select_concepts(lexicon, EvalConfig(holdout=True))] == ["honor"]


@pytest.mark.parametrize("config", [EvalConfig(concepts=["joy"]), EvalConfig(concepts=["peace"], holdout=True)])
def test_select_unknown_concepts(lexicon: list[ConceptEntry], config: EvalConfig) -> None:
    with pytest.raises(ConfigError):
        select_concepts(lexicon, config)


def test_echo_generator_scores_perfectly(
    lexicon: list[ConceptEntry], world: WorldEmbedding, reward: RewardFunction
) -> None:
    row = evaluate_config(ConfigId.BASE, None, echo_generator(world), lexicon, reward, EvalConfig(n_samples=2))
    assert row.n == 4 * 3 * 2
    assert row.rel_score == pytest.approx(1.0, abs=1e-12)
    assert row.aes_score == pytest.approx(1.0, abs=1e-12)
    assert set(row.per_concept) == {"peace", "courage", "wisdom", "honor"}


def test_base_relevance_is_mean_clip_score(
    lexicon: list[ConceptEntry], world: WorldEmbedding, reward: RewardFunction
) -> None:
    entries = lexicon[:2]
    config = EvalConfig(n_samples=3, seed=7)

    row = evaluate_config(ConfigId.BASE, None, seeded_noise_generator(world.dim), entries, reward, config)

    scores = []
    for ci, entry in enumerate(entries):
        for si, source in enumerate(entry.source_prompts):
            for k in range(3):
                image = np.random.default_rng([7, ci, si, k]).standard_normal(world.dim)
                scores.append(clip_score(embed_text(source, world), image))
    assert row.rel_score == pytest.approx(np.mean(scores), abs=1e-12)
    assert row.seed == 7


def test_empty_rewrites_fall_back_to_source(
    lexicon: list[ConceptEntry], world: WorldEmbedding, reward: RewardFunction
) -> None:
    config = PlmConfig(d_model=8, n_layers=1, n_heads=2, max_len=32)
    model = PlmModel(world.vocab, config)
    plm = PlmModel(world.vocab, config, state={name: np.zeros(shape) for name, shape in model.param_shapes().items()})
    generator = seeded_noise_generator(world.dim)
    eval_config = EvalConfig(n_samples=2)

    base = evaluate_config(ConfigId.BASE, None, generator, lexicon[:1], reward, eval_config)
    poac = evaluate_config(ConfigId.POAC, plm, generator, lexicon[:1], reward, eval_config)

    assert (poac.rel_score, poac.aes_score, poac.n) == (base.rel_score, base.aes_score, base.n)


def test_missing_models(lexicon: list[ConceptEntry], world: WorldEmbedding, reward: RewardFunction) -> None:
    with pytest.raises(CheckpointError):
        evaluate_config(ConfigId.BASE, None, None, lexicon, reward, EvalConfig(n_samples=1))
    with pytest.raises(CheckpointError):
        evaluate_config(ConfigId.POAC, None, echo_generator(world), lexicon, reward, EvalConfig(n_samples=1))


def test_evaluate_is_deterministic(lexicon: list[ConceptEntry], world: WorldEmbedding, reward: RewardFunction) -> None:
    generators = {ConfigId.BASE: seeded_noise_generator(world.dim)}
    config = EvalConfig(n_samples=2, configurations=[ConfigId.BASE], concepts=["courage"])

    first = evaluate(None, generators, lexicon, reward, config)
    second = evaluate(None, generators, lexicon, reward, config)

    assert len(first) == 1
    assert first == second
    assert list(first[0].per_concept) == ["courage"]
    with pytest.raises(CheckpointError):
        evaluate(None, {}, lexicon, reward, config)
