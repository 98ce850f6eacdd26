"""Module to hold the abstract rewriter and the record it returns."""
from abc import ABC, abstractmethod
from dataclasses import dataclass

from src.model.core.prompt_representations import ConceptEntry, Provenance


@dataclass(frozen=True)
class Rewrite:
    """
    Concrete rewrite of a source prompt, before modifiers are appended.

    :param target: Target tokens
    :param provenance: Who wrote the target
    """

    target: tuple[str, ...]
    provenance: Provenance


class AbstractRewriter(ABC):
    """
    Base class for rewriters.

    A rewriter turns a source prompt with an abstract concept into a prompt built on a dedicated scene with concrete
    objects.

    The scene index is a hint; rewriters that invent their own scene may ignore it.
    """

    @abstractmethod
    def rewrite(self, entry: ConceptEntry, source_index: int, scene_index: int) -> Rewrite:
        """
        Rewrite one source prompt of a concept.

        :param entry: Concept entry the source prompt belongs to
        :param source_index: Which of the entry's source prompts to rewrite
        :param scene_index: Which of the entry's scenes to depict
        :raises RejectedRewriteError: The rewrite breaks prompt pair invariants
        :raises RetryableError: The rewriter couldn't be reached
        :return: Rewrite
        """
        pass
