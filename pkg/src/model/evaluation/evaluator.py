"""
Relevance and aesthetic scores of the three pipeline configurations, and their comparison.

Every configuration renders the same sample seeds for the same source prompt, so differences
between rows come from prompts and denoisers alone.
"""
import csv
import io
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from loguru import logger

from src.model.core.errors import CheckpointError, ConfigError, ProtocolError
from src.model.core.prompt_representations import ConceptEntry
from src.model.core.settings import ConfigId, EvalConfig
from src.model.generators.abstract_image_generator import AbstractImageGenerator
from src.model.plm.decoding import rewrite
from src.model.plm.prompt_language_model import PlmModel
from src.model.reward.reward_function import RewardFunction

REL_MARGIN: float = 0.01
# POAC must also gain this fraction of BASE relevance
MIN_REL_GAIN: float = 0.10
AES_MARGIN: float = 0.01
# POAC_REFL may trail POAC on aesthetics by this much
AES_TOLERANCE: float = 0.005
HOLDOUT_FRACTION: float = 0.2
CSV_COLUMNS: tuple[str, ...] = ("config", "rel_score", "aes_score", "n", "seed")


@dataclass
class ScoreRow:
    """
    Scores of one configuration.

    :param config: Configuration
    :param rel_score: Mean relevance over every concept, source prompt and sample
    :param aes_score: Mean aesthetic score over the same images
    :param n: Images scored
    :param seed: Evaluation seed
    :param per_concept: (rel, aes) of each concept
    """

    config: ConfigId
    rel_score: float
    aes_score: float
    n: int
    seed: int
    per_concept: dict[str, tuple[float, float]] = field(default_factory=dict)


@dataclass(frozen=True)
class Verdict:
    """
    Whether the rows show the expected ordering.

    :param passed: True when every check holds
    :param reasons: Failed checks
    """

    passed: bool
    reasons: tuple[str, ...] = ()

    def __str__(self) -> str:
        return "PASS" if self.passed else "FAIL: " + "; ".join(self.reasons)


def split_holdout(entries: Sequence[ConceptEntry]) -> tuple[list[ConceptEntry], list[ConceptEntry]]:
    """
    Split a lexicon 80/20, keeping order.

    :param entries: Concept entries
    :return: (training concepts, held-out concepts); at least one held out when there are two or more
    """
    held = max(1, math.floor(len(entries) * HOLDOUT_FRACTION + 0.5)) if len(entries) > 1 else 0
    cut = len(entries) - held
    return list(entries[:cut]), list(entries[cut:])


def select_concepts(entries: Sequence[ConceptEntry], config: EvalConfig) -> list[ConceptEntry]:
    """
    Pick the concepts under test.

    :param entries: Lexicon
    :param config: Concept filter and holdout switch
    :raises ConfigError: A requested concept isn't in the lexicon
    :return: Concepts in lexicon order
    """
    chosen = split_holdout(entries)[1] if config.holdout else list(entries)
    if config.concepts is None:
        return chosen
    known = {entry.concept for entry in chosen}
    unknown = sorted(set(config.concepts) - known)
    if unknown:
        raise ConfigError("eval.concepts", f"not in the evaluated lexicon: {unknown}")
    wanted = set(config.concepts)
    return [entry for entry in chosen if entry.concept in wanted]


def evaluate_config(
    config_id: ConfigId,
    plm: PlmModel | None,
    generator: AbstractImageGenerator | None,
    entries: Sequence[ConceptEntry],
    reward: RewardFunction,
    eval_config: EvalConfig,
) -> ScoreRow:
    """
    Score one configuration over every source prompt of the concepts under test.

    BASE conditions on the original prompt and scores it as both original and optimized prompt;
    POAC and POAC_REFL condition on the rewrite. Sample k of source s of concept c uses seed
    [seed, c, s, k] whatever the configuration.

    :param config_id: Configuration to score
    :param plm: Prompt language model (unused by BASE)
    :param generator: Generator of the configuration: pretrained for BASE and POAC, fine-tuned for POAC_REFL
    :param entries: Concepts under test
    :param reward: Reward function
    :param eval_config: Sample count and seed
    :raises CheckpointError: A model the configuration needs is missing
    :return: Score row
    """
    if generator is None:
        raise CheckpointError(f"{config_id.value} needs a diffusion checkpoint")
    if config_id is not ConfigId.BASE and plm is None:
        raise CheckpointError(f"{config_id.value} needs a PLM checkpoint")
    rel_all: list[float] = []
    aes_all: list[float] = []
    per_concept: dict[str, tuple[float, float]] = {}
    for ci, entry in enumerate(entries):
        rel_concept: list[float] = []
        aes_concept: list[float] = []
        for si, source in enumerate(entry.source_prompts):
            used = source
            if plm is not None and config_id is not ConfigId.BASE:
                used = rewrite(plm, source).tokens
                if not used:
                    logger.warning(f"Empty rewrite of {' '.join(source)!r}; using the original prompt")
                    used = source
            seeds = [[eval_config.seed, ci, si, k] for k in range(eval_config.n_samples)]
            breakdown = reward.breakdown(source, used, generator.generate(used, seeds))
            rel_concept.extend(breakdown.rel_samples)
            aes_concept.extend(breakdown.aes_samples)
        per_concept[entry.concept] = (float(np.mean(rel_concept)), float(np.mean(aes_concept)))
        rel_all.extend(rel_concept)
        aes_all.extend(aes_concept)
    row = ScoreRow(
        config_id, float(np.mean(rel_all)), float(np.mean(aes_all)), len(rel_all), eval_config.seed, per_concept
    )
    logger.info(f"{config_id.value}: rel={row.rel_score:.4f} aes={row.aes_score:.4f} over {row.n} images")
    return row


def evaluate(
    plm: PlmModel | None,
    generators: Mapping[ConfigId, AbstractImageGenerator | None],
    entries: Sequence[ConceptEntry],
    reward: RewardFunction,
    eval_config: EvalConfig,
) -> list[ScoreRow]:
    """
    Score every configuration listed in the evaluation config.

    :param plm: Prompt language model
    :param generators: Generator of each configuration
    :param entries: Lexicon
    :param reward: Reward function
    :param eval_config: Protocol settings
    :return: Rows in configuration order
    """
    chosen = select_concepts(entries, eval_config)
    return [
        evaluate_config(config_id, plm, generators.get(config_id), chosen, reward, eval_config)
        for config_id in eval_config.configurations
    ]


def _ordered_rows(rows: Sequence[ScoreRow]) -> list[ScoreRow]:
    if len(rows) != len(ConfigId):
        raise ProtocolError(f"need exactly {len(ConfigId)} rows, got {len(rows)}")
    by_config = {row.config: row for row in rows}
    if set(by_config) != set(ConfigId):
        raise ProtocolError(f"need one row per configuration, got {[row.config.value for row in rows]}")
    if len({row.n for row in rows}) != 1:
        raise ProtocolError("rows scored different numbers of images")
    for row in rows:
        if not (math.isfinite(row.rel_score) and math.isfinite(row.aes_score)):
            raise ProtocolError(f"{row.config.value} has non-finite scores")
    return [by_config[config_id] for config_id in ConfigId]


def verdict(rows: Sequence[ScoreRow]) -> Verdict:
    """
    Check the ordering BASE < POAC < POAC_REFL.

    Relevance must rise by at least REL_MARGIN (0.01) at each step, and from BASE to POAC also by at least
    MIN_REL_GAIN (10%) of the BASE score. POAC must beat BASE on aesthetics by AES_MARGIN (0.01). Aesthetics
    from POAC to POAC_REFL count as non-decreasing within AES_TOLERANCE (0.005).

    :param rows: One row per configuration
    :raises ProtocolError: Not exactly one row per configuration
    :return: Verdict with the failed checks
    """
    base, poac, refl = _ordered_rows(rows)
    eps = 1e-12
    reasons = []
    for low, high in ((base, poac), (poac, refl)):
        label = f"{high.config.value} rel"
        if high.rel_score < low.rel_score:
            reasons.append(f"{label} below {low.config.value}")
        elif high.rel_score + eps < low.rel_score + REL_MARGIN:
            reasons.append(f"{label} within {REL_MARGIN} of {low.config.value}")
    if base.rel_score <= poac.rel_score and poac.rel_score - base.rel_score + eps < MIN_REL_GAIN * abs(base.rel_score):
        reasons.append(f"POAC rel gain below {MIN_REL_GAIN:.0%} of BASE")
    if poac.aes_score + eps < base.aes_score + AES_MARGIN:
        reasons.append(f"POAC aes not {AES_MARGIN} above BASE")
    if refl.aes_score + eps < poac.aes_score - AES_TOLERANCE:
        reasons.append(f"POAC_REFL aes more than {AES_TOLERANCE} below POAC")
    return Verdict(not reasons, tuple(reasons))


def relative_improvements(rows: Sequence[ScoreRow]) -> dict[str, float]:
    """
    Relative score gains between consecutive configurations.

    :param rows: One row per configuration
    :return: Gains keyed like "rel_poac_over_base"
    """
    base, poac, refl = _ordered_rows(rows)
    gains = {}
    for metric in ("rel", "aes"):
        for name, low, high in (("poac_over_base", base, poac), ("refl_over_poac", poac, refl)):
            before = getattr(low, f"{metric}_score")
            after = getattr(high, f"{metric}_score")
            gains[f"{metric}_{name}"] = (after - before) / abs(before) if before else math.inf
    return gains


def rows_to_csv(rows: Sequence[ScoreRow]) -> str:
    """
    Tabulate rows as CSV in the order given.

    :param rows: Score rows
    :return: CSV text with columns config, rel_score, aes_score, n, seed
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([row.config.value, repr(row.rel_score), repr(row.aes_score), row.n, row.seed])
    return buffer.getvalue()


def compare_table(rows: Sequence[ScoreRow]) -> tuple[str, Verdict]:
    """
    Tabulate the rows as CSV and judge the ordering.

    The verdict is the one from verdict: relevance strictly rising with margins, POAC aesthetics at least
    AES_MARGIN above BASE, and POAC_REFL aesthetics non-decreasing within AES_TOLERANCE of POAC.

    :param rows: One row per configuration
    :raises ProtocolError: Not exactly one row per configuration
    :return: CSV text (config, rel_score, aes_score, n, seed) and verdict
    """
    ordered = _ordered_rows(rows)
    return rows_to_csv(ordered), verdict(ordered)


def report_json(rows: Sequence[ScoreRow]) -> dict[str, Any]:
    """
    Detailed report with per-concept scores, relative gains and the verdict.

    :param rows: One row per configuration
    :return: JSON-ready dictionary
    """
    ordered = _ordered_rows(rows)
    return {
        "rows": [
            {
                "config": row.config.value,
                "rel_score": row.rel_score,
                "aes_score": row.aes_score,
                "n": row.n,
                "seed": row.seed,
                "per_concept": {c: {"rel": r, "aes": a} for c, (r, a) in row.per_concept.items()},
            }
            for row in ordered
        ],
        "relative_improvements": relative_improvements(ordered),
        "verdict": str(verdict(ordered)),
    }
