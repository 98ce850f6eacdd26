"""Module to build the prompt pair corpus from the concept lexicon."""
import json
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from loguru import logger

from src.model.core.errors import PoolError, RejectedRewriteError
from src.model.core.prompt_representations import ConceptEntry, PromptPair, Vocabulary
from src.model.core.settings import LexiconConfig
from src.model.lexicon.lexicon_io import SOURCE_PROMPTS_PER_CONCEPT, load_modifiers, validate_lexicon
from src.model.lexicon.pair_validation import pair_violations
from src.model.rewriters.abstract_rewriter import AbstractRewriter
from src.model.rewriters.oracle_rewriter import OracleRewriter

# Rewrites per source prompt, each depicting a different scene
REWRITES_PER_SOURCE: int = 3

SeedLike = int | Sequence[int]


@dataclass(frozen=True)
class RejectedPair:
    """
    Pair dropped because its rewrite broke an invariant.

    :param concept: Abstract concept
    :param source_index: Source prompt index
    :param rotation: Rewrite index of that source
    :param reason: Why it was rejected
    """

    concept: str
    source_index: int
    rotation: int
    reason: str


@dataclass
class DatasetManifest:
    """
    Outcome of building a corpus.

    :param pairs: Prompt pairs in canonical order
    :param rejected: Dropped pairs
    :param recycled: Concepts with fewer than 3 scenes and how many pairs reused a scene
    :param seed: Seed the corpus was built with
    """

    pairs: list[PromptPair] = field(default_factory=list)
    rejected: list[RejectedPair] = field(default_factory=list)
    recycled: dict[str, int] = field(default_factory=dict)
    seed: int = 0

    @property
    def recycle_warnings(self) -> int:
        """
        Count pairs built from a reused scene.

        :return: Number of recycled pairs
        """
        return sum(self.recycled.values())

    def summary(self) -> dict[str, object]:
        """
        Summarize for the run manifest.

        :return: JSON-ready counts
        """
        return {
            "seed": self.seed,
            "pairs": len(self.pairs),
            "rejected": [asdict(rejection) for rejection in self.rejected],
            "recycled": dict(self.recycled),
            "recycle_warnings": self.recycle_warnings,
        }


def inject_modifiers(
    target: Sequence[str],
    pool: Sequence[str],
    rng_seed: SeedLike,
    k_min: int = 1,
    k_max: int = 3,
) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """
    Append k distinct modifiers, drawn without replacement, to a target.

    :param target: Target tokens
    :param pool: Modifier pool
    :param rng_seed: Seed (or seed entropy sequence) of the draw
    :param k_min: Fewest modifiers
    :param k_max: Most modifiers
    :raises PoolError: Empty pool, or fewer modifiers than k_max
    :return: Target with modifiers appended, and the modifiers chosen
    """
    if not pool:
        raise PoolError("modifier pool is empty")
    if not 0 <= k_min <= k_max <= len(pool):
        raise PoolError(f"can't draw between {k_min} and {k_max} modifiers from a pool of {len(pool)}")
    rng = np.random.default_rng(rng_seed)
    k = int(rng.integers(k_min, k_max + 1))
    chosen = tuple(pool[int(i)] for i in rng.choice(len(pool), size=k, replace=False))
    return (*target, *chosen), chosen


def _concept_pairs(
    ci: int,
    entry: ConceptEntry,
    rng_seed: int,
    pool: Sequence[str],
    config: LexiconConfig,
    rewriter: AbstractRewriter,
    vocab: Vocabulary,
) -> tuple[list[PromptPair], list[RejectedPair]]:
    pairs, rejected = [], []
    n_scenes = len(entry.scenes)
    for si in range(SOURCE_PROMPTS_PER_CONCEPT):
        for rotation in range(REWRITES_PER_SOURCE):
            scene_index = (si + rotation) % n_scenes
            try:
                rewrite = rewriter.rewrite(entry, si, scene_index)
            except RejectedRewriteError as err:
                logger.warning(f"Skipping {entry.concept} source {si} rewrite {rotation}: {err}")
                rejected.append(RejectedPair(entry.concept, si, rotation, str(err)))
                continue
            target, modifiers = inject_modifiers(
                rewrite.target, pool, [rng_seed, ci, si, rotation], config.min_modifiers, config.max_modifiers
            )
            pair = PromptPair(entry.concept, entry.source_prompts[si], target, modifiers, rewrite.provenance)
            problems = pair_violations(pair, vocab)
            if problems:
                reason = "; ".join(problems)
                logger.warning(f"Skipping {entry.concept} source {si} rewrite {rotation}: {reason}")
                rejected.append(RejectedPair(entry.concept, si, rotation, reason))
                continue
            pairs.append(pair)
    return pairs, rejected


def build_dataset(
    lexicon: Sequence[ConceptEntry],
    rng_seed: int,
    modifiers: Sequence[str] | None = None,
    config: LexiconConfig | None = None,
    rewriter: AbstractRewriter | None = None,
    workers: int = 1,
) -> DatasetManifest:
    """
    Cross every source prompt of every concept with three scenes and append modifiers.

    Source i of a concept is paired with scenes (i + r) mod n_scenes for r = 0, 1, 2, so with three
    scenes each source meets each scene once. Output order is (concept, source index, rotation) no matter
    how many workers rewrite concurrently.

    :param lexicon: Concept entries
    :param rng_seed: Seed of the modifier draws
    :param modifiers: Modifier pool; the shipped pool when omitted
    :param config: Modifier counts
    :param rewriter: Rewriter to use; the offline oracle when omitted
    :param workers: Concepts rewritten concurrently
    :raises LexiconError: Lexicon fails validation
    :raises RetryableError: A remote rewriter was unreachable
    :return: Manifest holding the pairs, rejections and recycled scene counts
    """
    validate_lexicon(lexicon)
    pool = list(modifiers) if modifiers is not None else load_modifiers()
    settings = config if config is not None else LexiconConfig()
    active = rewriter if rewriter is not None else OracleRewriter()
    vocab = Vocabulary.from_lexicon(lexicon, pool)

    manifest = DatasetManifest(seed=rng_seed)
    for entry in lexicon:
        missing = REWRITES_PER_SOURCE - len(entry.scenes)
        if missing > 0:
            manifest.recycled[entry.concept] = missing * SOURCE_PROMPTS_PER_CONCEPT
            logger.warning(f"{entry.concept} has {len(entry.scenes)} scenes; recycling them cyclically")

    def run(indexed: tuple[int, ConceptEntry]) -> tuple[list[PromptPair], list[RejectedPair]]:
        return _concept_pairs(indexed[0], indexed[1], rng_seed, pool, settings, active, vocab)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(run, enumerate(lexicon)))
    else:
        results = [run(indexed) for indexed in enumerate(lexicon)]
    for pairs, rejected in results:
        manifest.pairs.extend(pairs)
        manifest.rejected.extend(rejected)
    logger.info(
        f"Built {len(manifest.pairs)} pairs from {len(lexicon)} concepts ({len(manifest.rejected)} rejected)"
    )
    return manifest


def corpus_to_jsonl(pairs: Sequence[PromptPair]) -> str:
    """
    Serialize a corpus, one record per line.

    :param pairs: Prompt pairs
    :return: JSONL text, newline-terminated
    """
    return "".join(json.dumps(pair.to_record(), ensure_ascii=False) + "\n" for pair in pairs)


def read_corpus(path: Path) -> list[PromptPair]:
    """
    Read a JSONL corpus.

    :param path: Corpus file
    :return: Prompt pairs in file order
    """
    lines = path.read_text(encoding="utf-8").splitlines()
    return [PromptPair.from_record(json.loads(line)) for line in lines if line.strip()]
