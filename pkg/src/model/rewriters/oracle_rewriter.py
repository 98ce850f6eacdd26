"""Module for the deterministic offline rewriter that fills scene templates."""
from src.model.core.errors import TemplateError
from src.model.core.prompt_representations import OBJECT_SLOT, ConceptEntry, Provenance
from src.model.lexicon.lexicon_io import MAX_SCENE_OBJECTS, MIN_SCENE_OBJECTS
from src.model.rewriters.abstract_rewriter import AbstractRewriter, Rewrite


def oracle_rewrite(entry: ConceptEntry, source_index: int, scene_index: int) -> tuple[str, ...]:
    """
    Instantiate a scene template of the concept with the scene's objects.

    The source prompt only selects which pair is being built; every source of a concept maps to the same
    scenes.

    :param entry: Concept entry
    :param source_index: Index into the entry's source prompts
    :param scene_index: Index into the entry's scenes
    :raises IndexError: Either index out of range
    :raises TemplateError: Slot count doesn't match the objects, the scene doesn't have 2 or 3 objects,
        or the template mentions the concept
    :return: Target tokens
    """
    if not 0 <= source_index < len(entry.source_prompts):
        raise IndexError(f"source index {source_index} outside [0, {len(entry.source_prompts)})")
    if not 0 <= scene_index < len(entry.scenes):
        raise IndexError(f"scene index {scene_index} outside [0, {len(entry.scenes)})")
    scene = entry.scenes[scene_index]
    if not MIN_SCENE_OBJECTS <= len(scene.objects) <= MAX_SCENE_OBJECTS:
        raise TemplateError(f"{entry.concept}: scene needs 2 or 3 objects, got {len(scene.objects)}")
    slots = scene.template.count(OBJECT_SLOT)
    if slots != len(scene.objects):
        raise TemplateError(f"{entry.concept}: template has {slots} slots for {len(scene.objects)} objects")
    if entry.concept in scene.template:
        raise TemplateError(f"{entry.concept}: template mentions the concept")
    objects = iter(scene.objects)
    return tuple(next(objects) if token == OBJECT_SLOT else token for token in scene.template)


class OracleRewriter(AbstractRewriter):
    """Offline rewriter backed by the lexicon's hand-written scenes."""

    def rewrite(self, entry: ConceptEntry, source_index: int, scene_index: int) -> Rewrite:
        """
        Fill the requested scene template.

        :param entry: Concept entry
        :param source_index: Source prompt index
        :param scene_index: Scene index
        :return: Rewrite with oracle provenance
        """
        return Rewrite(oracle_rewrite(entry, source_index, scene_index), Provenance.ORACLE)
