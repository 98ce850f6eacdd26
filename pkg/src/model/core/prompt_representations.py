"""Conglomeration of data types that represent prompts, concepts and their token alphabet."""
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from enum import Enum
from typing import Any

from src.model.core.errors import VocabError

BOS: str = "<bos>"
EOS: str = "<eos>"
SEP: str = "Rephrase:"
OBJECT_SLOT: str = "<obj>"
SPECIAL_TOKENS: tuple[str, ...] = (BOS, EOS, SEP)

_STRIP = re.compile(r"^[\"'.,!?;:()]+|[\"'.,!?;:()]+$")


class TokenKind(Enum):
    """Disjoint partitions of the vocabulary, in id order."""

    SPECIAL = "special"
    ABSTRACT_CONCEPT = "abstract_concept"
    CONCRETE_OBJECT = "concrete_object"
    SCENE_WORD = "scene_word"
    MODIFIER = "modifier"


class Provenance(Enum):
    """Who produced the target of a prompt pair."""

    ORACLE = "oracle"
    REMOTE = "remote"


def tokenize(text: str) -> list[str]:
    """
    Split free text into vocabulary-style tokens.

    Lower-cases, splits on whitespace and strips surrounding punctuation.

    :param text: Prompt text
    :return: Tokens, empty strings dropped
    """
    tokens = (_STRIP.sub("", word) for word in text.lower().split())
    return [token for token in tokens if token]


class Vocabulary:
    """
    Ordered token alphabet partitioned by token kind.

    :param tokens: Every token, ids dense and 0-based in this order
    :param index: Token to id
    """

    def __init__(self, partitions: Mapping[TokenKind, Sequence[str]]) -> None:
        """
        Lay tokens out by partition: specials, concepts, objects, scene words, modifiers.

        :param partitions: Tokens of each kind, in the order ids should follow
        :raises VocabError: A token appears twice or in two partitions
        """
        self._tokens: list[str] = []
        self._index: dict[str, int] = {}
        self._kinds: dict[str, TokenKind] = {}
        for kind in TokenKind:
            for token in partitions.get(kind, ()):
                if token in self._index:
                    raise VocabError(
                        f"token {token!r} listed as {kind.value} and {self._kinds[token].value}"
                    )
                self._index[token] = len(self._tokens)
                self._kinds[token] = kind
                self._tokens.append(token)
        for special in SPECIAL_TOKENS:
            if self._kinds.get(special) is not TokenKind.SPECIAL:
                raise VocabError(f"special token {special!r} missing")

    @classmethod
    def from_lexicon(cls, entries: Sequence["ConceptEntry"], modifiers: Sequence[str]) -> "Vocabulary":
        """
        Derive the vocabulary of a lexicon and a modifier pool.

        Concepts keep lexicon order, objects and scene words keep first-seen order.

        :param entries: Concept lexicon
        :param modifiers: Modifier pool
        :raises VocabError: A concept is also used as an object or modifier
        :return: Vocabulary covering every lexicon and modifier token
        """
        concepts = [entry.concept for entry in entries]
        objects = _unique(obj for entry in entries for scene in entry.scenes for obj in scene.objects)
        taken = set(concepts) | set(objects) | set(modifiers) | set(SPECIAL_TOKENS) | {OBJECT_SLOT}
        words = _unique(
            token
            for entry in entries
            for sequence in (*entry.source_prompts, *(scene.template for scene in entry.scenes))
            for token in sequence
            if token not in taken
        )
        return cls(
            {
                TokenKind.SPECIAL: SPECIAL_TOKENS,
                TokenKind.ABSTRACT_CONCEPT: concepts,
                TokenKind.CONCRETE_OBJECT: objects,
                TokenKind.SCENE_WORD: words,
                TokenKind.MODIFIER: list(modifiers),
            }
        )

    @property
    def tokens(self) -> list[str]:
        """
        Get every token in id order.

        :return: Tokens
        """
        return list(self._tokens)

    @property
    def index(self) -> dict[str, int]:
        """
        Get the token to id map.

        :return: Copy of the index
        """
        return dict(self._index)

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: object) -> bool:
        return token in self._index

    def id_of(self, token: str) -> int:
        """
        Look up the id of a token.

        :param token: Token
        :raises VocabError: Token isn't in the vocabulary
        :return: Token id
        """
        try:
            return self._index[token]
        except KeyError:
            raise VocabError(f"unknown token {token!r}") from None

    def token_of(self, token_id: int) -> str:
        """
        Look up the token of an id.

        :param token_id: Token id
        :raises VocabError: Id outside the vocabulary
        :return: Token
        """
        if not 0 <= token_id < len(self._tokens):
            raise VocabError(f"token id {token_id} outside [0, {len(self._tokens)})")
        return self._tokens[token_id]

    def kind_of(self, token: str) -> TokenKind:
        """
        Get the partition of a token.

        :param token: Token
        :raises VocabError: Token isn't in the vocabulary
        :return: Token kind
        """
        self.id_of(token)
        return self._kinds[token]

    def tokens_of_kind(self, kind: TokenKind) -> list[str]:
        """
        Get the tokens of one partition in id order.

        :param kind: Partition
        :return: Tokens of that kind
        """
        return [token for token in self._tokens if self._kinds[token] is kind]

    def encode(self, tokens: Sequence[str]) -> list[int]:
        """
        Map tokens to ids.

        :param tokens: Token sequence
        :raises VocabError: Any token is unknown
        :return: Id sequence
        """
        return [self.id_of(token) for token in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        """
        Map ids to tokens.

        :param ids: Id sequence
        :return: Token sequence
        """
        return [self.token_of(int(token_id)) for token_id in ids]

    def objects_in(self, tokens: Sequence[str]) -> list[str]:
        """
        Get the distinct concrete objects of a token sequence, in order of appearance.

        :param tokens: Token sequence (unknown tokens are ignored)
        :return: Concrete object tokens
        """
        return _unique(t for t in tokens if self._kinds.get(t) is TokenKind.CONCRETE_OBJECT)

    def concepts_in(self, tokens: Sequence[str]) -> list[str]:
        """
        Get the distinct abstract concepts of a token sequence.

        :param tokens: Token sequence (unknown tokens are ignored)
        :return: Abstract concept tokens
        """
        return _unique(t for t in tokens if self._kinds.get(t) is TokenKind.ABSTRACT_CONCEPT)

    def partitions(self) -> dict[str, list[str]]:
        """
        Get every partition keyed by its kind name.

        :return: Tokens per partition
        """
        return {kind.value: self.tokens_of_kind(kind) for kind in TokenKind}

    @classmethod
    def from_partitions(cls, tokens: Sequence[str], partitions: Mapping[str, Sequence[str]]) -> "Vocabulary":
        """
        Rebuild a serialized vocabulary and check its token order survived.

        :param tokens: Tokens in id order
        :param partitions: Tokens per partition keyed by kind name
        :raises VocabError: Partitions don't reproduce the token order
        :return: Vocabulary
        """
        vocab = cls({TokenKind(kind): list(members) for kind, members in partitions.items()})
        if vocab.tokens != list(tokens):
            raise VocabError("token order doesn't match partitions")
        return vocab


@dataclass(frozen=True)
class Scene:
    """
    Dedicated scene expressing an abstract concept.

    :param template: Tokens with OBJECT_SLOT markers where objects go
    :param objects: Concrete objects filling the slots, in order
    """

    template: tuple[str, ...]
    objects: tuple[str, ...]


@dataclass(frozen=True)
class ConceptEntry:
    """
    One abstract concept of the lexicon.

    :param concept: Abstract concept token
    :param source_prompts: Short prompts including the concept
    :param scenes: Scenes that express the concept with concrete objects
    """

    concept: str
    source_prompts: tuple[tuple[str, ...], ...]
    scenes: tuple[Scene, ...]

    @property
    def objects(self) -> list[str]:
        """
        Get every concrete object of the concept's scenes, in first-seen order.

        :return: Concrete objects of the concept
        """
        return _unique(obj for scene in self.scenes for obj in scene.objects)


@dataclass(frozen=True)
class PromptPair:
    """
    Source prompt with an abstract concept and its rewrite with concrete objects.

    :param concept: Abstract concept of the source
    :param source: Source prompt tokens
    :param target: Rewritten prompt tokens, modifiers at the end
    :param modifiers: Modifiers appended to the target
    :param provenance: Who wrote the target
    """

    concept: str
    source: tuple[str, ...]
    target: tuple[str, ...]
    modifiers: tuple[str, ...]
    provenance: Provenance = Provenance.ORACLE

    def to_record(self) -> dict[str, Any]:
        """
        Serialize as a corpus JSONL record.

        :return: Record with keys concept, source, target, modifiers, provenance
        """
        return {
            "concept": self.concept,
            "source": list(self.source),
            "target": list(self.target),
            "modifiers": list(self.modifiers),
            "provenance": self.provenance.value,
        }

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "PromptPair":
        """
        Parse a corpus JSONL record.

        :param record: Record as written by to_record
        :return: Prompt pair
        """
        return cls(
            concept=str(record["concept"]),
            source=tuple(record["source"]),
            target=tuple(record["target"]),
            modifiers=tuple(record["modifiers"]),
            provenance=Provenance(record.get("provenance", Provenance.ORACLE.value)),
        )

    def __str__(self) -> str:
        return f"{' '.join(self.source)} {SEP} {' '.join(self.target)}"


def _unique(items: Iterable[str]) -> list[str]:
    return list(dict.fromkeys(items))
