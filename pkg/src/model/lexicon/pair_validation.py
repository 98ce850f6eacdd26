"""Module to check prompt pairs against the corpus invariants, independently of how they were built."""
from collections.abc import Sequence

from src.model.core.prompt_representations import PromptPair, TokenKind, Vocabulary
from src.model.lexicon.lexicon_io import MAX_SCENE_OBJECTS, MIN_SCENE_OBJECTS


def target_violations(target: Sequence[str], vocab: Vocabulary) -> list[str]:
    """
    List what's wrong with a rewritten prompt.

    :param target: Target tokens (modifiers may be included)
    :param vocab: Vocabulary every token must belong to
    :return: Human-readable violations, empty when the target is valid
    """
    problems = []
    unknown = [token for token in target if token not in vocab]
    if unknown:
        problems.append(f"out-of-vocabulary tokens {unknown}")
    objects = vocab.objects_in(target)
    if not MIN_SCENE_OBJECTS <= len(objects) <= MAX_SCENE_OBJECTS:
        problems.append(f"{len(objects)} concrete objects, need 2 or 3")
    concepts = vocab.concepts_in(target)
    if concepts:
        problems.append(f"abstract tokens {concepts}")
    return problems


def pair_violations(pair: PromptPair, vocab: Vocabulary) -> list[str]:
    """
    List what's wrong with a prompt pair.

    :param pair: Prompt pair
    :param vocab: Vocabulary of the corpus
    :return: Human-readable violations, empty when the pair is valid
    """
    problems = target_violations(pair.target, vocab)
    if pair.concept not in vocab or vocab.kind_of(pair.concept) is not TokenKind.ABSTRACT_CONCEPT:
        problems.append(f"{pair.concept!r} is not an abstract concept")
    if pair.concept not in pair.source:
        problems.append("source doesn't include the concept")
    n_modifiers = len(pair.modifiers)
    if n_modifiers and pair.target[-n_modifiers:] != pair.modifiers:
        problems.append("modifiers aren't at the end of the target")
    stray = [m for m in pair.modifiers if m not in vocab or vocab.kind_of(m) is not TokenKind.MODIFIER]
    if stray:
        problems.append(f"non-modifier tokens {stray} listed as modifiers")
    return problems


def scan_corpus(pairs: Sequence[PromptPair], vocab: Vocabulary) -> dict[int, list[str]]:
    """
    Re-check a whole corpus.

    :param pairs: Prompt pairs
    :param vocab: Vocabulary of the corpus
    :return: Violations keyed by pair index; empty for a valid corpus
    """
    report = {}
    for i, pair in enumerate(pairs):
        problems = pair_violations(pair, vocab)
        if problems:
            report[i] = problems
    return report
