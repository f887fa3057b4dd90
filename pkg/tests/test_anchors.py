from anchorparse.anchors import (
    AnchorOccurrence,
    build_saa_target,
    build_sae_target,
    build_supervision_targets,
    extract_anchors,
    identifier_slots,
)
from anchorparse.logical_form import MASK, SEP
from anchorparse.schema import SchemaVocabulary, db_vocabulary

MAIN = ["select", "name", "from", "company", "where", "founded", ">", "1990"]


def scan_oracle(main, vocab):
    """Independent linear scan against the vocabulary's token set."""

    tokens = set(vocab.tokens)
    return [i for i in range(len(main)) if main[i] in tokens]


def test_extract_sql_anchors(company_schema):
    vocab = db_vocabulary(company_schema)
    occurrences = extract_anchors(MAIN, vocab)
    assert [o.position for o in occurrences] == [1, 3, 5]
    assert [o.kind for o in occurrences] == ["column", "table", "column"]


def test_extract_sparql_anchors(car_kb):
    main = ["select", "?x", "where", "{", "?x", "produced_by", "saab", "}"]
    assert [o.position for o in extract_anchors(main, car_kb.vocabulary)] == [5, 6]


def test_keyword_spelled_like_a_column_is_not_an_anchor():
    vocab = SchemaVocabulary({"count": "column", "2005": "column", "t": "table"})
    main = ["select", "count", "(", "count", ")", "from", "t", "where", "2005", "=", "2005"]
    occurrences = extract_anchors(main, vocab)
    assert [o.position for o in occurrences] == [3, 6, 8]
    assert [o.kind for o in occurrences] == ["column", "table", "column"]


def test_column_named_like_its_table_keeps_column_kind():
    vocab = SchemaVocabulary({"team": "table"})
    occurrences = extract_anchors(["select", "team", "from", "team"], vocab)
    assert [(o.position, o.kind) for o in occurrences] == [(1, "column"), (3, "table")]


def test_identifier_slots():
    assert identifier_slots(MAIN) == [(1, "column"), (3, "table"), (5, "column")]
    sparql = ["select", "?x", "where", "{", "?x", "produced_by", "saab", "}"]
    assert identifier_slots(sparql) == [(5, "predicate"), (6, "object")]
    assert identifier_slots(["company", "name"]) is None


def test_no_schema_tokens(company_schema):
    assert extract_anchors(["select", "?x", "where"], db_vocabulary(company_schema)) == []


def test_sae_target():
    occurrences = [AnchorOccurrence("name", 1, "column"), AnchorOccurrence("company", 3, "table"),
                   AnchorOccurrence("founded", 5, "column")]
    assert build_sae_target(occurrences) == ["name", SEP, "company", SEP, "founded"]
    assert build_sae_target(occurrences[:1]) == ["name"]
    assert build_sae_target([]) == []


def test_sae_deduplicates():
    repeated = [AnchorOccurrence("name", 1, "column"), AnchorOccurrence("name", 7, "column")]
    assert build_sae_target(repeated) == ["name"]


def test_saa_target(company_schema):
    occurrences = extract_anchors(MAIN, db_vocabulary(company_schema))
    saa, mask = build_saa_target(MAIN, occurrences)
    assert saa == [MASK, "name", MASK, "company", MASK, "founded", MASK, MASK]
    assert sum(mask) == 3


def test_saa_without_anchors():
    saa, mask = build_saa_target(["select", "x"], [])
    assert saa == [MASK, MASK]
    assert not any(mask)


def test_saa_all_anchors(company_schema):
    main = ["company", "name"]
    saa, mask = build_saa_target(main, extract_anchors(main, db_vocabulary(company_schema)))
    assert saa == main and all(mask)


def test_targets_on_generated_corpus_match_oracle(tiny_corpus):
    for example in tiny_corpus.all_examples():
        document = tiny_corpus.schema_for(example)
        targets = example.targets
        positions = [o.position for o in extract_anchors(targets.main, document.vocabulary)]
        assert positions == scan_oracle(targets.main, document.vocabulary)
        assert len(targets.saa) == len(targets.main)
        assert sum(targets.saa_mask) == len(positions)
        assert targets.check() == []
        distinct = len({targets.main[p] for p in positions})
        assert len(targets.sae) == max(0, 2 * distinct - 1)


def test_build_supervision_targets(company_schema):
    targets = build_supervision_targets(MAIN, db_vocabulary(company_schema))
    assert targets.sae == ["name", SEP, "company", SEP, "founded"]
    assert targets.sae_loss_mask(7) == [True] * 6 + [False]
    assert targets.sae_loss_mask(4) == [True] * 4
