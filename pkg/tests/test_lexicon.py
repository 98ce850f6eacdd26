import json
from collections import Counter
from pathlib import Path
from typing import Any

import pytest

from src.model.core.errors import LexiconError, PoolError, TemplateError
from src.model.core.prompt_representations import ConceptEntry, PromptPair, Provenance, Scene, Vocabulary, tokenize
from src.model.lexicon.dataset import build_dataset, corpus_to_jsonl, inject_modifiers, read_corpus
from src.model.lexicon.lexicon_io import load_lexicon, load_modifiers, parse_entry, validate_entry, validate_lexicon
from src.model.lexicon.pair_validation import pair_violations, scan_corpus, target_violations
from src.model.rewriters.oracle_rewriter import OracleRewriter, oracle_rewrite


def _record(**overrides: Any) -> dict[str, Any]:
    record: dict[str, Any] = {
        "concept": "joy",
        "source_prompts": ["a day of joy", "the joy of spring", "children full of joy"],
        "scenes": [
            {"template": "a <obj> flying over a <obj>", "objects": ["kite", "meadow"]},
            {"template": "a <obj> next to a <obj> and a <obj>", "objects": ["balloon", "cake", "gift"]},
        ],
    }
    record.update(overrides)
    return record


def _write_lexicon(path: Path, *records: dict[str, Any]) -> Path:
    path.write_text(json.dumps({"concepts": list(records)}), encoding="utf-8")
    return path


def test_shipped_lexicon(full_lexicon: list[ConceptEntry], modifiers: list[str]) -> None:
    assert len(full_lexicon) == 40
    assert len({entry.concept for entry in full_lexicon}) == 40
    assert len(modifiers) == 12
    assert all(len(entry.scenes) >= 3 for entry in full_lexicon)


def test_load_lexicon_keeps_first_concepts(full_lexicon: list[ConceptEntry]) -> None:
    assert load_lexicon(max_concepts=5) == full_lexicon[:5]


def test_parse_entry_accepts_strings_and_lists() -> None:
    entry = parse_entry(_record(source_prompts=[["a", "day", "of", "joy"], "the joy of spring", "joy at last"]))
    assert entry.source_prompts[0] == ("a", "day", "of", "joy")
    assert entry.scenes[0] == Scene(("a", "<obj>", "flying", "over", "a", "<obj>"), ("kite", "meadow"))
    assert entry.objects == ["kite", "meadow", "balloon", "cake", "gift"]
    validate_entry(entry)


@pytest.mark.parametrize(
    "overrides",
    [
        {"source_prompts": ["a day of joy", "the joy of spring"]},
        {"source_prompts": ["a day of joy", "the joy of spring", "a sunny afternoon"]},
        {"scenes": []},
        {"scenes": [{"template": "a <obj> alone", "objects": ["kite"]}]},
        {"scenes": [{"template": "a <obj> with a <obj>", "objects": ["kite", "kite"]}]},
        {"scenes": [{"template": "a <obj> and a <obj> and a <obj> and a <obj>", "objects": ["a1", "b1", "c1", "d1"]}]},
        {"scenes": [{"template": "a <obj> over a meadow", "objects": ["kite", "cake"]}]},
    ],
)
def test_validate_entry_rejects(overrides: dict[str, Any]) -> None:
    with pytest.raises(LexiconError):
        validate_entry(parse_entry(_record(**overrides)))


def test_parse_entry_rejects_missing_keys() -> None:
    record = _record()
    del record["scenes"]
    with pytest.raises(LexiconError):
        parse_entry(record)


def test_validate_lexicon_rejects_duplicates_and_leaks() -> None:
    joy = parse_entry(_record())
    with pytest.raises(LexiconError):
        validate_lexicon([joy, joy])
    leaky = parse_entry(
        _record(
            concept="hope",
            source_prompts=["hope again", "a sign of hope", "hope rises"],
            scenes=[{"template": "a <obj> of joy near a <obj>", "objects": ["candle", "window"]}],
        )
    )
    with pytest.raises(LexiconError):
        validate_lexicon([joy, leaky])
    with pytest.raises(LexiconError):
        validate_lexicon([])


def test_load_lexicon_errors(tmp_path: Path) -> None:
    with pytest.raises(LexiconError):
        load_lexicon(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(LexiconError):
        load_lexicon(broken)
    with pytest.raises(LexiconError):
        load_lexicon(_write_lexicon(tmp_path / "bad.json", _record(scenes=[])))


def test_load_lexicon_from_file(tmp_path: Path) -> None:
    entries = load_lexicon(_write_lexicon(tmp_path / "lexicon.json", _record()))
    assert [entry.concept for entry in entries] == ["joy"]


def test_load_modifiers_rejects_duplicates(tmp_path: Path) -> None:
    path = tmp_path / "modifiers.json"
    path.write_text(json.dumps({"modifiers": ["hdr", "hdr"]}), encoding="utf-8")
    with pytest.raises(LexiconError):
        load_modifiers(path)


def test_tokenize() -> None:
    assert tokenize('  A Dove, carrying "an" olive_branch!  ') == ["a", "dove", "carrying", "an", "olive_branch"]


def test_oracle_fills_template(lexicon: list[ConceptEntry]) -> None:
    peace = lexicon[0]
    assert peace.concept == "peace"
    expected = ("a", "white", "dove", "carrying", "an", "olive_branch", "over", "a", "quiet", "field")
    assert oracle_rewrite(peace, 0, 0) == expected
    assert oracle_rewrite(peace, 2, 0) == expected
    rewrite = OracleRewriter().rewrite(peace, 1, 0)
    assert rewrite.target == expected
    assert rewrite.provenance is Provenance.ORACLE


def test_oracle_index_errors(lexicon: list[ConceptEntry]) -> None:
    with pytest.raises(IndexError):
        oracle_rewrite(lexicon[0], 3, 0)
    with pytest.raises(IndexError):
        oracle_rewrite(lexicon[0], 0, len(lexicon[0].scenes))


@pytest.mark.parametrize(
    "scene",
    [
        Scene(("a", "<obj>", "by", "a", "lake"), ("dove", "lantern")),
        Scene(("a", "<obj>"), ("dove",)),
        Scene(("joy", "with", "<obj>", "and", "<obj>"), ("dove", "lantern")),
    ],
)
def test_oracle_template_errors(scene: Scene) -> None:
    entry = ConceptEntry("joy", (("joy",), ("more", "joy"), ("joy", "again")), (scene,))
    with pytest.raises(TemplateError):
        oracle_rewrite(entry, 0, 0)


def test_inject_modifiers_appends_distinct_draws(modifiers: list[str]) -> None:
    target = ("a", "dove")
    for seed in range(50):
        extended, chosen = inject_modifiers(target, modifiers, seed)
        assert 1 <= len(chosen) <= 3
        assert len(set(chosen)) == len(chosen)
        assert set(chosen) <= set(modifiers)
        assert extended == (*target, *chosen)
        assert inject_modifiers(target, modifiers, seed) == (extended, chosen)


def test_inject_modifiers_counts() -> None:
    pool = ["m1", "m2", "m3"]
    assert inject_modifiers(("x",), pool, 7, 0, 0) == (("x",), ())
    extended, chosen = inject_modifiers(("x",), pool, 7, 3, 3)
    assert sorted(chosen) == pool
    assert extended[0] == "x"


def test_inject_modifiers_is_uniform_over_pool() -> None:
    pool = [f"m{i}" for i in range(6)]
    counts = Counter(inject_modifiers((), pool, seed, 1, 1)[1][0] for seed in range(1000))
    assert set(counts) == set(pool)
    for modifier in pool:
        assert 0.12 <= counts[modifier] / 1000 <= 0.22


@pytest.mark.parametrize("pool, k_min, k_max", [([], 1, 3), (["m1", "m2"], 1, 3), (["m1", "m2"], 2, 1)])
def test_inject_modifiers_pool_errors(pool: list[str], k_min: int, k_max: int) -> None:
    with pytest.raises(PoolError):
        inject_modifiers(("x",), pool, 0, k_min, k_max)


def test_dataset_crosses_sources_with_scenes(full_lexicon: list[ConceptEntry], modifiers: list[str]) -> None:
    lexicon = full_lexicon[:10]
    manifest = build_dataset(lexicon, 0, modifiers)

    assert len(manifest.pairs) == 90
    assert manifest.rejected == []
    assert manifest.recycled == {}
    assert scan_corpus(manifest.pairs, Vocabulary.from_lexicon(lexicon, modifiers)) == {}
    peace = [pair for pair in manifest.pairs if pair.concept == "peace"]
    for si, source in enumerate(lexicon[0].source_prompts):
        from_source = [pair for pair in peace if pair.source == source]
        assert len(from_source) == 3
        scenes = {pair.target[: len(pair.target) - len(pair.modifiers)] for pair in from_source}
        assert scenes == {oracle_rewrite(lexicon[0], si, j) for j in range(3)}


def test_dataset_is_reproducible(lexicon: list[ConceptEntry], modifiers: list[str]) -> None:
    first = corpus_to_jsonl(build_dataset(lexicon, 11, modifiers).pairs)
    threaded = corpus_to_jsonl(build_dataset(lexicon, 11, modifiers, workers=4).pairs)
    other_seed = corpus_to_jsonl(build_dataset(lexicon, 12, modifiers).pairs)
    assert first.encode("utf-8") == threaded.encode("utf-8")
    assert first != other_seed


def test_dataset_recycles_scenes(lexicon: list[ConceptEntry], modifiers: list[str]) -> None:
    peace = lexicon[0]
    short = ConceptEntry(peace.concept, peace.source_prompts, peace.scenes[:2])

    manifest = build_dataset([short, *lexicon[1:]], 0, modifiers)

    assert manifest.recycled == {"peace": 3}
    assert manifest.recycle_warnings == 3
    assert len([pair for pair in manifest.pairs if pair.concept == "peace"]) == 9
    assert manifest.summary()["pairs"] == 36


def test_corpus_file_round_trip(tmp_path: Path, corpus: list[PromptPair]) -> None:
    path = tmp_path / "corpus.jsonl"
    path.write_text(corpus_to_jsonl(corpus), encoding="utf-8")
    assert read_corpus(path) == corpus


def test_pair_violations(world_vocab: Vocabulary) -> None:
    good = PromptPair("peace", ("a", "world", "of", "peace"), ("a", "dove", "and", "lake", "nostalgic"), ("nostalgic",))
    assert pair_violations(good, world_vocab) == []

    cases = [
        PromptPair("peace", ("a", "world", "of", "peace"), ("a", "dove", "of", "peace"), ()),
        PromptPair("peace", ("a", "world"), ("a", "dove", "and", "lake"), ()),
        PromptPair("peace", ("peace",), ("nostalgic", "dove", "and", "lake"), ("nostalgic",)),
        PromptPair("dove", ("dove",), ("a", "dove", "and", "lake"), ()),
        PromptPair("peace", ("peace",), ("a", "dove", "and", "lake", "lantern"), ("lantern",)),
    ]
    for pair in cases:
        assert pair_violations(pair, world_vocab), str(pair)


def test_target_violations(world_vocab: Vocabulary) -> None:
    assert target_violations(("a", "dove", "and", "lake"), world_vocab) == []
    assert len(target_violations(("a", "dove"), world_vocab)) == 1
    assert len(target_violations(("a", "dove", "lake", "unicorn"), world_vocab)) == 1
    assert len(target_violations(("dove", "lake", "book", "candle"), world_vocab)) == 1


@pytest.fixture
def world_vocab(lexicon: list[ConceptEntry], modifiers: list[str]) -> Vocabulary:
    return Vocabulary.from_lexicon(lexicon, modifiers)
