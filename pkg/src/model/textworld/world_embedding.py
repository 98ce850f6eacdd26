"""
Synthetic stand-in for the text encoder, the image space and the aesthetic model.

Every concrete object gets a seeded unit signature in R^m. An abstract concept vector sits at a fixed
angle arctan(rho) from the direction of its objects' signature sum, so the relevance gap between
abstract and concrete prompts is known in closed form.
"""
import hashlib
import json
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import numpy.typing as npt

from src.model.core.autodiff import (
    NORM_EPS,
    Array,
    GradNode,
    constant,
    cosine,
    exp,
    norm,
    scale,
    square,
    sub,
)
from src.model.core.errors import (
    DegenerateSceneError,
    DomainError,
    EmptyPromptError,
    EmptySceneError,
    NumericError,
    VocabError,
)
from src.model.core.prompt_representations import (
    SPECIAL_TOKENS,
    ConceptEntry,
    TokenKind,
    Vocabulary,
)
from src.model.core.settings import WorldConfig

# Images are plain vectors in R^m
ImageVec = npt.NDArray[np.float64]

SCENE_DEGENERACY_EPS: float = 1e-9

_SIGNATURE_SALT = 0
_DEVIATION_SALT = 1


def _token_key(token: str) -> int:
    return int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest()[:8], "little")


def _seeded_unit(seed: int, token: str, salt: int, dim: int) -> Array:
    rng = np.random.default_rng([seed, _token_key(token), salt])
    draw = rng.standard_normal(dim)
    return draw / np.linalg.norm(draw)


def _normalize(vector: Array) -> Array:
    length = float(np.linalg.norm(vector))
    if length < NORM_EPS:
        raise DomainError("normalize of a zero-norm vector")
    return vector / length


class WorldEmbedding:
    """
    Token vectors of the shared text/image space.

    Signatures are regenerated from the seed, so serialization only stores the vocabulary,
    the seed and which objects each concept owns.
    """

    def __init__(
        self,
        vocab: Vocabulary,
        concept_objects: Mapping[str, Sequence[str]],
        config: WorldConfig,
    ) -> None:
        """
        Draw every token vector.

        :param vocab: Token alphabet
        :param concept_objects: Concrete objects owned by each abstract concept
        :param config: Dimension, deviation rho and seed
        :raises VocabError: Concept objects reference a non-object token
        """
        self._vocab: Vocabulary = vocab
        self._config: WorldConfig = config
        self._concept_objects: dict[str, list[str]] = {
            concept: list(objects) for concept, objects in concept_objects.items()
        }
        dim = config.dim
        vectors = np.zeros((len(vocab), dim))
        for token in vocab.tokens:
            kind = vocab.kind_of(token)
            if kind in (TokenKind.CONCRETE_OBJECT, TokenKind.SCENE_WORD, TokenKind.MODIFIER):
                vectors[vocab.id_of(token)] = _seeded_unit(config.seed, token, _SIGNATURE_SALT, dim)
        for concept in vocab.tokens_of_kind(TokenKind.ABSTRACT_CONCEPT):
            objects = self._concept_objects.get(concept, [])
            for obj in objects:
                if vocab.kind_of(obj) is not TokenKind.CONCRETE_OBJECT:
                    raise VocabError(f"{obj!r} of concept {concept!r} is not a concrete object")
            if not objects:
                vectors[vocab.id_of(concept)] = _seeded_unit(config.seed, concept, _SIGNATURE_SALT, dim)
                continue
            direction = _normalize(vectors[sorted(vocab.encode(objects))].sum(axis=0))
            # Gram-Schmidt the deviation against the object direction
            draw = _seeded_unit(config.seed, concept, _DEVIATION_SALT, dim)
            deviation = _normalize(draw - float(draw @ direction) * direction)
            vectors[vocab.id_of(concept)] = _normalize(direction + config.rho * deviation)
        vectors.setflags(write=False)
        self._vectors: Array = vectors

    @classmethod
    def from_lexicon(
        cls, entries: Sequence[ConceptEntry], modifiers: Sequence[str], config: WorldConfig
    ) -> "WorldEmbedding":
        """
        Build the vocabulary and world of a lexicon.

        :param entries: Concept lexicon
        :param modifiers: Modifier pool
        :param config: World settings
        :return: World embedding
        """
        vocab = Vocabulary.from_lexicon(entries, modifiers)
        return cls(vocab, {entry.concept: entry.objects for entry in entries}, config)

    @property
    def vocab(self) -> Vocabulary:
        """
        Get the token alphabet.

        :return: Vocabulary
        """
        return self._vocab

    @property
    def config(self) -> WorldConfig:
        """
        Get the world settings.

        :return: World config
        """
        return self._config

    @property
    def dim(self) -> int:
        """
        Get the dimension m.

        :return: Dimension of token vectors and images
        """
        return self._config.dim

    @property
    def vectors(self) -> Array:
        """
        Get every token vector, one row per token id (special tokens are zero rows).

        :return: Read-only [V, m] matrix
        """
        return self._vectors

    def vector(self, token: str) -> Array:
        """
        Get the vector of one token.

        :param token: Token
        :return: Unit vector (zero for special tokens)
        """
        return self._vectors[self._vocab.id_of(token)]

    def concept_objects(self, concept: str) -> list[str]:
        """
        Get the objects an abstract concept owns.

        :param concept: Abstract concept token
        :return: Concrete objects
        """
        return list(self._concept_objects.get(concept, []))

    def to_dict(self) -> dict[str, Any]:
        """
        Serialize without the vectors themselves.

        :return: JSON-ready dictionary
        """
        return {
            "seed": self._config.seed,
            "dim": self._config.dim,
            "rho": self._config.rho,
            "tokens": self._vocab.tokens,
            "partitions": self._vocab.partitions(),
            "concept_objects": self._concept_objects,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], config: WorldConfig | None = None) -> "WorldEmbedding":
        """
        Regenerate a world from its serialized form.

        :param data: Dictionary written by to_dict
        :param config: Settings for fields not serialized (gamma, render noise)
        :return: World embedding identical to the one serialized
        """
        base = config if config is not None else WorldConfig()
        world_config = WorldConfig(
            dim=int(data["dim"]),
            rho=float(data["rho"]),
            gamma=base.gamma,
            render_noise=base.render_noise,
            seed=int(data["seed"]),
        )
        vocab = Vocabulary.from_partitions(data["tokens"], data["partitions"])
        return cls(vocab, data["concept_objects"], world_config)

    @classmethod
    def load(cls, path: Path, config: WorldConfig | None = None) -> "WorldEmbedding":
        """
        Read a world written as JSON by to_dict.

        :param path: Source file
        :param config: Settings for fields not serialized
        :return: World embedding
        """
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")), config)


def embed_text(prompt: Sequence[str], world: WorldEmbedding) -> Array:
    """
    Encode a prompt as the normalized sum of its distinct token vectors.

    :param prompt: Token sequence
    :param world: World embedding
    :raises VocabError: Unknown token
    :raises EmptyPromptError: Nothing left once special tokens are dropped
    :return: Unit vector in R^m
    """
    ids = sorted({world.vocab.id_of(token) for token in prompt if token not in SPECIAL_TOKENS})
    if not ids:
        raise EmptyPromptError("prompt has no tokens besides special tokens")
    return _normalize(world.vectors[ids].sum(axis=0))


def render(
    objects: Sequence[str],
    world: WorldEmbedding,
    noise_sigma: float,
    rng: np.random.Generator | None = None,
) -> ImageVec:
    """
    Synthesize the image of a scene: normalized signature sum plus Gaussian noise.

    :param objects: Concrete object tokens (duplicates count once)
    :param world: World embedding
    :param noise_sigma: Standard deviation of the added noise
    :param rng: Noise source; seeded from the world seed when omitted
    :raises EmptySceneError: No objects
    :raises VocabError: A token isn't a concrete object
    :raises DegenerateSceneError: Signatures cancel out
    :return: Image vector
    """
    if not objects:
        raise EmptySceneError("can't render an empty scene")
    ids = sorted({world.vocab.id_of(obj) for obj in objects})
    for obj in objects:
        if world.vocab.kind_of(obj) is not TokenKind.CONCRETE_OBJECT:
            raise VocabError(f"{obj!r} is not a concrete object")
    total = world.vectors[ids].sum(axis=0)
    length = float(np.linalg.norm(total))
    if length <= SCENE_DEGENERACY_EPS:
        raise DegenerateSceneError(f"signatures of {sorted(set(objects))} cancel out")
    generator = rng if rng is not None else np.random.default_rng(world.config.seed)
    image: ImageVec = total / length + noise_sigma * generator.standard_normal(world.dim)
    return image


def clip_relevance(text_emb: Array, images: GradNode) -> GradNode:
    """
    Differentiable cosine between one text embedding and each image.

    :param text_emb: Text embedding in R^m
    :param images: Image node of shape [m] or [N, m]
    :raises DomainError: A zero image
    :return: Node of shape [] or [N]
    """
    tiled = np.broadcast_to(text_emb, images.shape)
    return cosine(constant(tiled), images)


def aesthetic(images: GradNode, gamma: float) -> GradNode:
    """
    Differentiable exp(-gamma * (||image|| - 1)^2) for each image.

    :param images: Image node of shape [m] or [N, m]
    :param gamma: Sharpness around the unit sphere
    :return: Node of shape [] or [N]
    """
    return exp(scale(square(sub(norm(images), constant(1.0))), -gamma))


def clip_score(text_emb: Array, image: ImageVec) -> float:
    """
    Cosine similarity between a text embedding and an image.

    :param text_emb: Unit text embedding
    :param image: Image vector
    :raises DomainError: Image norm below 1e-12
    :return: Score in [-1, 1]
    """
    return clip_relevance(np.asarray(text_emb, dtype=np.float64), constant(image)).item()


def aes_score(image: ImageVec, gamma: float = 4.0) -> float:
    """
    Aesthetic score peaking on the unit sphere.

    :param image: Image vector
    :param gamma: Sharpness around the unit sphere
    :raises NumericError: Image has non-finite entries
    :return: Score in (0, 1]
    """
    if not np.isfinite(image).all():
        raise NumericError("image entries must be finite")
    return aesthetic(constant(image), gamma).item()
