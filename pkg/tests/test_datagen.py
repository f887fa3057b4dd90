import random
from dataclasses import replace

import pytest

from anchorparse.corpus import write_corpus
from anchorparse.datagen import (
    GenConfig,
    TABLES,
    _Phrasing,
    corpus_statistics,
    generate_corpus,
    sample_database,
    sample_sql,
    write_generated_corpus,
)
from anchorparse.errors import ConfigError
from anchorparse.executor import execute
from anchorparse.logical_form import parse_query, serialize

from conftest import TINY_GEN


def _files(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


def test_same_seed_gives_identical_files(tmp_path):
    cfg = replace(TINY_GEN, train=10, dev=2, test=2)
    write_generated_corpus(generate_corpus(cfg), tmp_path / "a", cfg)
    write_generated_corpus(generate_corpus(cfg), tmp_path / "b", cfg)
    assert _files(tmp_path / "a") == _files(tmp_path / "b")


def test_different_seed_differs(tiny_corpus):
    other = generate_corpus(replace(TINY_GEN, seed=TINY_GEN.seed + 1))
    assert [e.utterance for e in other.all_examples()] != [e.utterance for e in tiny_corpus.all_examples()]


def test_every_target_parses_and_executes(tiny_corpus):
    for example in tiny_corpus.all_examples():
        query = parse_query(" ".join(example.targets.main), example.kind)
        execute(query, tiny_corpus.schema_for(example))
        assert serialize(query) == example.targets.main


def test_split_sizes_and_ids(tiny_corpus):
    assert [len(tiny_corpus.split(s)) for s in ("train", "dev", "test")] == [24, 6, 6]
    ids = [e.id for e in tiny_corpus.all_examples()]
    assert ids == list(range(len(ids)))


def test_mixed_corpus_has_both_kinds(tiny_corpus):
    assert {e.kind for e in tiny_corpus.all_examples()} == {"sql", "sparql"}


@pytest.mark.parametrize(
    "changes",
    [
        {"max_tables": 0},
        {"min_columns": 7},
        {"kind": "tsv"},
        {"paraphrase_rate": 1.5},
        {"max_conditions": 9},
        {"train": 0, "dev": 0, "test": 0},
        {"heldout_schemas": True, "db_schemas": 2},
    ],
)
def test_infeasible_config(changes):
    with pytest.raises(ConfigError):
        replace(TINY_GEN, **changes).validate()


def test_heldout_schemas_are_disjoint():
    cfg = replace(TINY_GEN, heldout_schemas=True, db_schemas=5, kb_schemas=5, train=20, dev=6, test=6)
    corpus = generate_corpus(cfg)
    refs = {split: {e.schema_ref for e in corpus.split(split)} for split in ("train", "dev", "test")}
    assert not refs["train"] & refs["test"]
    assert not refs["train"] & refs["dev"]
    assert not refs["dev"] & refs["test"]


def test_greater_than_template_yields_one_condition():
    cfg = replace(TINY_GEN, max_conditions=1, paraphrase_rate=0.0)
    rng = random.Random(1)
    database, tables = sample_database(cfg, rng)
    for _ in range(200):
        sample = sample_sql(database, tables, cfg, rng, _Phrasing(rng, cfg))
        text = " ".join(sample.utterance)
        if " greater than " in text:
            assert len(sample.query.conditions) == 1
            assert sample.query.conditions[0].op == ">"
            return
    pytest.fail("no 'greater than' utterance sampled")


def test_statistics(tiny_corpus):
    stats = corpus_statistics(tiny_corpus, TINY_GEN)
    assert stats["examples"] == {"train": 24, "dev": 6, "test": 6}
    assert stats["schemas"] == 4
    assert sum(stats["shapes"].values()) == 36
    assert stats["anchors_per_example"]["min"] >= 1


def test_templates_have_distinct_column_names():
    for table in TABLES:
        names = [c.name for c in table.columns]
        assert len(set(names)) == len(names)


def test_written_corpus_has_layout(tmp_path, tiny_corpus):
    write_corpus(tiny_corpus, tmp_path)
    assert (tmp_path / "schemas").is_dir()
    assert {p.name for p in tmp_path.glob("*.jsonl")} == {"train.jsonl", "dev.jsonl", "test.jsonl"}
