"""Module to load and validate the concept lexicon and the modifier pool."""
import json
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

from src.model.core.errors import LexiconError
from src.model.core.prompt_representations import OBJECT_SLOT, SPECIAL_TOKENS, ConceptEntry, Scene

RESOURCES_DIR: Path = Path(__file__).resolve().parents[2] / "resources"
DEFAULT_LEXICON_PATH: Path = RESOURCES_DIR / "lexicon.json"
DEFAULT_MODIFIERS_PATH: Path = RESOURCES_DIR / "modifiers.json"

SOURCE_PROMPTS_PER_CONCEPT: int = 3
MIN_SCENE_OBJECTS: int = 2
MAX_SCENE_OBJECTS: int = 3


def _as_tokens(value: Any, where: str) -> tuple[str, ...]:
    # Token sequences may be written as a list or as one whitespace-separated string
    if isinstance(value, str):
        tokens = tuple(value.split())
    elif isinstance(value, list) and all(isinstance(token, str) for token in value):
        tokens = tuple(value)
    else:
        raise LexiconError(f"{where}: expected a token list or string, got {value!r}")
    if not tokens:
        raise LexiconError(f"{where}: empty token sequence")
    return tokens


def parse_entry(record: Mapping[str, Any], position: int = 0) -> ConceptEntry:
    """
    Parse one lexicon record into a concept entry.

    :param record: Record with keys concept, source_prompts and scenes
    :param position: Index of the record in the file, for error messages
    :raises LexiconError: Missing keys or malformed values
    :return: Concept entry (not yet validated, see validate_entry)
    """
    try:
        concept = record["concept"]
        sources = record["source_prompts"]
        scenes = record["scenes"]
    except KeyError as key:
        raise LexiconError(f"concepts[{position}]: missing key {key}") from None
    if not isinstance(concept, str) or not concept:
        raise LexiconError(f"concepts[{position}].concept: expected a non-empty string")
    if not isinstance(sources, list) or not isinstance(scenes, list):
        raise LexiconError(f"concepts[{position}] ({concept}): source_prompts and scenes must be lists")
    parsed_scenes = []
    for j, scene in enumerate(scenes):
        where = f"{concept}.scenes[{j}]"
        if not isinstance(scene, Mapping) or "template" not in scene or "objects" not in scene:
            raise LexiconError(f"{where}: expected {{template, objects}}")
        parsed_scenes.append(
            Scene(_as_tokens(scene["template"], f"{where}.template"), _as_tokens(scene["objects"], f"{where}.objects"))
        )
    return ConceptEntry(
        concept=concept,
        source_prompts=tuple(_as_tokens(source, f"{concept}.source_prompts[{i}]") for i, source in enumerate(sources)),
        scenes=tuple(parsed_scenes),
    )


def validate_entry(entry: ConceptEntry) -> None:
    """
    Check the invariants of one concept entry.

    :param entry: Concept entry
    :raises LexiconError: Wrong number of source prompts, a source without the concept, no scenes,
        a scene with other than 2 or 3 objects, or template slots that don't match the objects
    """
    if len(entry.source_prompts) != SOURCE_PROMPTS_PER_CONCEPT:
        raise LexiconError(
            f"{entry.concept}: expected {SOURCE_PROMPTS_PER_CONCEPT} source prompts, got {len(entry.source_prompts)}"
        )
    for i, source in enumerate(entry.source_prompts):
        if entry.concept not in source:
            raise LexiconError(f"{entry.concept}.source_prompts[{i}] doesn't include the concept")
    if not entry.scenes:
        raise LexiconError(f"{entry.concept}: needs at least one scene")
    for j, scene in enumerate(entry.scenes):
        if not MIN_SCENE_OBJECTS <= len(set(scene.objects)) == len(scene.objects) <= MAX_SCENE_OBJECTS:
            raise LexiconError(f"{entry.concept}.scenes[{j}]: needs 2 or 3 distinct objects, got {list(scene.objects)}")
        slots = scene.template.count(OBJECT_SLOT)
        if slots != len(scene.objects):
            raise LexiconError(f"{entry.concept}.scenes[{j}]: {slots} slots for {len(scene.objects)} objects")


def validate_lexicon(entries: Sequence[ConceptEntry]) -> None:
    """
    Check every entry plus the invariants spanning the whole lexicon.

    Concept tokens must be unique and never appear in a scene, so no rewrite can leak an abstract token.

    :param entries: Concept lexicon
    :raises LexiconError: Any violated invariant
    """
    if not entries:
        raise LexiconError("lexicon has no concepts")
    concepts = [entry.concept for entry in entries]
    duplicates = sorted({concept for concept in concepts if concepts.count(concept) > 1})
    if duplicates:
        raise LexiconError(f"duplicate concepts {duplicates}")
    concept_set = set(concepts)
    reserved = concept_set | set(SPECIAL_TOKENS)
    for entry in entries:
        validate_entry(entry)
        for j, scene in enumerate(entry.scenes):
            leaked = sorted((set(scene.template) | set(scene.objects)) & reserved)
            if leaked:
                raise LexiconError(f"{entry.concept}.scenes[{j}] uses reserved tokens {leaked}")


def load_lexicon(path: Path | None = None, max_concepts: int | None = None) -> list[ConceptEntry]:
    """
    Read and validate a lexicon file.

    :param path: Lexicon JSON ({"concepts": [...]}); the shipped lexicon when omitted
    :param max_concepts: Keep only the first n concepts
    :raises LexiconError: Unreadable file or violated invariant
    :return: Concept entries in file order
    """
    source = path if path is not None else DEFAULT_LEXICON_PATH
    try:
        data = json.loads(source.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise LexiconError(f"can't read lexicon {source}: {err}") from err
    records = data.get("concepts") if isinstance(data, dict) else data
    if not isinstance(records, list):
        raise LexiconError(f"{source}: expected a list of concepts")
    entries = [parse_entry(record, i) for i, record in enumerate(records)]
    if max_concepts is not None:
        entries = entries[:max_concepts]
    validate_lexicon(entries)
    return entries


def load_modifiers(path: Path | None = None) -> list[str]:
    """
    Read the modifier pool.

    :param path: Modifier JSON ({"modifiers": [...]}); the shipped pool when omitted
    :raises LexiconError: Unreadable file, non-token entries or duplicates
    :return: Modifier tokens in file order
    """
    source = path if path is not None else DEFAULT_MODIFIERS_PATH
    try:
        data = json.loads(source.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise LexiconError(f"can't read modifiers {source}: {err}") from err
    modifiers = data.get("modifiers") if isinstance(data, dict) else data
    if not isinstance(modifiers, list) or not all(isinstance(m, str) and m and " " not in m for m in modifiers):
        raise LexiconError(f"{source}: modifiers must be a list of single tokens")
    if len(set(modifiers)) != len(modifiers):
        raise LexiconError(f"{source}: duplicate modifiers")
    return list(modifiers)
