"""Shared fixtures: small hand-built schemas, a tiny generated corpus, tiny double-precision models."""

from __future__ import annotations

from dataclasses import replace

import pytest

from anchorparse.corpus import Corpus, write_corpus
from anchorparse.datagen import GenConfig, generate_corpus
from anchorparse.model import ModelConfig, Seq2SeqTransformer
from anchorparse.schema import (
    Attribute,
    DatabaseInstance,
    Edge,
    KnowledgeBase,
    Node,
    RelationalSchema,
    SchemaDocument,
    TableSchema,
)
from anchorparse.tensor import set_default_dtype
from anchorparse.vocab import Vocabulary


TINY_GEN = GenConfig(
    seed=3,
    train=24,
    dev=6,
    test=6,
    db_schemas=2,
    kb_schemas=2,
    max_tables=2,
    max_rows=8,
    max_nodes=12,
    max_edges=16,
)


@pytest.fixture(autouse=True)
def double_precision():
    set_default_dtype("float64")
    yield
    set_default_dtype("float64")


@pytest.fixture
def company_schema() -> RelationalSchema:
    return RelationalSchema(
        [TableSchema("Company", (Attribute("Name", "text"), Attribute("Founded", "number")))]
    )


@pytest.fixture
def company_db(company_schema) -> SchemaDocument:
    database = DatabaseInstance(company_schema, {"company": [["saab", 1945], ["volvo", 1927]]})
    return SchemaDocument("db_company", "db", database=database)


@pytest.fixture
def car_kb() -> SchemaDocument:
    kb = KnowledgeBase(
        nodes=[
            Node("n1", "car1", (("year", 1990),)),
            Node("n2", "car2", (("year", 2001),)),
            Node("n3", "Saab", (("founded", 1945), ("country", "Sweden"))),
            Node("n4", "volvo", (("founded", 1927),)),
        ],
        edges=[
            Edge("e1", "n1", "produced_by", "n3"),
            Edge("e2", "n2", "produced_by", "n4"),
        ],
    )
    return SchemaDocument("kb_cars", "kb", kb=kb)


@pytest.fixture(scope="session")
def tiny_corpus() -> Corpus:
    return generate_corpus(TINY_GEN)


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory, tiny_corpus):
    path = tmp_path_factory.mktemp("corpus")
    write_corpus(tiny_corpus, path)
    return path


@pytest.fixture
def vocab(tiny_corpus) -> Vocabulary:
    return Vocabulary.build(tiny_corpus.token_sequences())


@pytest.fixture
def tiny_config(vocab) -> ModelConfig:
    return ModelConfig(
        vocab_size=len(vocab),
        d_model=8,
        n_heads=2,
        encoder_layers=1,
        decoder_layers=3,
        d_ff=16,
        dropout=0.0,
    )


@pytest.fixture
def tiny_model(tiny_config) -> Seq2SeqTransformer:
    return Seq2SeqTransformer(tiny_config, seed=0)


def small_config(vocab_size: int, **overrides) -> ModelConfig:
    base = ModelConfig(
        vocab_size=vocab_size,
        d_model=8,
        n_heads=2,
        encoder_layers=1,
        decoder_layers=3,
        d_ff=16,
        dropout=0.0,
        max_source_len=16,
        max_target_len=16,
    )
    return replace(base, **overrides)
