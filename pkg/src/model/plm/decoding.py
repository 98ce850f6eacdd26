"""Module to decode rewrites from a trained prompt language model."""
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from loguru import logger

from src.model.core.autodiff import Array, no_grad
from src.model.core.errors import TruncationWarning
from src.model.core.prompt_representations import EOS, SPECIAL_TOKENS
from src.model.plm.prompt_language_model import PlmModel, format_prefix


@dataclass(frozen=True)
class RewriteResult:
    """
    Decoded rewrite of one source prompt.

    :param tokens: Target tokens, special tokens removed
    :param warning: Set when max length was reached before EOS
    """

    tokens: tuple[str, ...]
    warning: TruncationWarning | None = None

    @property
    def truncated(self) -> bool:
        """
        Whether decoding ran out of length.

        :return: True when no EOS was emitted
        """
        return self.warning is not None

    @property
    def text(self) -> str:
        """
        Get the rewrite as one string.

        :return: Space-joined tokens
        """
        return " ".join(self.tokens)


def _pick(logits: Array, top_k: int | None, rng: np.random.Generator | None) -> int:
    if top_k is None or rng is None:
        # argmax returns the first maximum, so ties go to the lowest id
        return int(np.argmax(logits))
    k = min(top_k, logits.shape[0])
    candidates = np.sort(np.argsort(-logits, kind="stable")[:k])
    scores = logits[candidates] - logits[candidates].max()
    probs = np.exp(scores) / np.exp(scores).sum()
    return int(candidates[rng.choice(k, p=probs)])


def rewrite(
    model: PlmModel,
    source: Sequence[str],
    top_k: int | None = None,
    seed: int | None = None,
) -> RewriteResult:
    """
    Decode "[BOS] source [SEP]" until EOS or max length.

    Greedy by default; with top_k and a seed, samples among the k most likely tokens.

    :param model: Trained prompt language model
    :param source: Source prompt tokens
    :param top_k: Sample among this many tokens instead of taking the argmax
    :param seed: Seed of the top-k draws
    :raises VocabError: Source has tokens outside the vocabulary
    :raises LengthError: Prefix is longer than max length
    :return: Decoded target with an optional truncation warning
    """
    max_len = model.config.max_len
    ids = model.vocab.encode(format_prefix(source, max_len))
    prefix_len = len(ids)
    eos = model.vocab.id_of(EOS)
    rng = np.random.default_rng(seed) if top_k is not None and seed is not None else None
    finished = False
    with no_grad():
        while len(ids) < max_len:
            next_id = _pick(model.logits([ids]).array[-1], top_k, rng)
            if next_id == eos:
                finished = True
                break
            ids.append(next_id)
    tokens = tuple(t for t in model.vocab.decode(ids[prefix_len:]) if t not in SPECIAL_TOKENS)
    if finished:
        return RewriteResult(tokens)
    warning = TruncationWarning(f"no EOS within {max_len} tokens for {' '.join(source)!r}")
    logger.warning(str(warning))
    return RewriteResult(tokens, warning)
