import json

import numpy as np
import pytest

from anchorparse.analysis import (
    count_hallucinations,
    decode_intermediate_layers,
    evaluate,
    execution_accuracy,
    hallucination_flags,
    is_correct,
    layer_anchor_accuracy,
    missing_task_heads,
    weight_distribution_report,
    write_plot_data,
    write_predictions,
)
from anchorparse.anchors import build_supervision_targets
from anchorparse.corpus import Example
from anchorparse.errors import ContractError
from anchorparse.logical_form import query_shape, parse_sql
from anchorparse.model import Seq2SeqTransformer, apply_ablation

from conftest import small_config

GOLD_TEXT = "select name from company where founded > 1930 and name = 'saab'"


@pytest.fixture
def gold(company_db):
    main = GOLD_TEXT.split()
    return Example(
        id=0,
        utterance=["which", "company", "after", "1930", "is", "saab"],
        targets=build_supervision_targets(main, company_db.vocabulary),
        schema_ref=company_db.ref,
        split="test",
        kind="sql",
        shape=query_shape(parse_sql(GOLD_TEXT)),
    )


@pytest.fixture
def schemas(company_db):
    return {company_db.ref: company_db}


class TestExecutionAccuracy:
    def test_all_correct(self, gold, schemas):
        assert execution_accuracy([GOLD_TEXT], [gold], schemas) == 1.0

    def test_all_wrong(self, gold, schemas):
        assert execution_accuracy(["select name from company where founded < 1930"], [gold], schemas) == 0.0

    def test_reordered_conditions_are_correct(self, gold, company_db):
        assert is_correct("select name from company where name = 'saab' and founded > 1930", gold, company_db)

    def test_same_denotation_different_query(self, gold, company_db):
        assert is_correct("select name from company where founded > 1940", gold, company_db)

    def test_unparseable_prediction(self, gold, company_db):
        assert not is_correct("select from where", gold, company_db)

    def test_length_mismatch(self, gold, schemas):
        with pytest.raises(ContractError):
            execution_accuracy([], [gold], schemas)


class TestHallucinations:
    def test_unknown_table_is_strict(self, gold, company_db):
        strict, mismatch = hallucination_flags("select name from product", gold, company_db)
        assert strict and mismatch

    def test_wrong_operator_is_neither(self, gold, company_db):
        prediction = "select name from company where founded < 1930 and name = 'saab'"
        assert hallucination_flags(prediction, gold, company_db) == (False, False)

    def test_missing_anchor_is_a_mismatch(self, gold, company_db):
        assert hallucination_flags("select name from company", gold, company_db) == (False, True)

    def test_counts(self, gold, schemas):
        counts = count_hallucinations(["select name from product", GOLD_TEXT, "}"], [gold] * 3, schemas)
        assert (counts.strict, counts.anchor_mismatch) == (2, 2)


def test_evaluate_report(tiny_model, vocab, tiny_corpus, tmp_path):
    examples = tiny_corpus.split("dev")[:3]
    report, predictions = evaluate(tiny_model, vocab, examples, tiny_corpus.schemas, split="dev")
    assert report.total == 3 and len(predictions) == 3
    assert 0.0 <= report.execution_accuracy <= 1.0
    assert sum(row["total"] for row in report.per_shape.values()) == 3
    assert "execution accuracy" in report.summary_table()
    write_predictions(predictions, tmp_path / "p.jsonl")
    rows = [json.loads(line) for line in (tmp_path / "p.jsonl").read_text().splitlines()]
    assert [r["id"] for r in rows] == [e.id for e in examples]


class TestWeightReport:
    def test_untrained_weights_are_uniform(self, tiny_model, tmp_path):
        report = weight_distribution_report(tiny_model)
        assert report.applicable
        for task in ("sae", "saa"):
            np.testing.assert_allclose(report.distributions[task], [0.5, 0.5])
            assert report.center_of_mass[task] == pytest.approx(1.5)
        assert "extraction weighted toward lower layers" in report.render()
        write_plot_data(report, tmp_path / "w.jsonl")
        assert len((tmp_path / "w.jsonl").read_text().splitlines()) == 4

    def test_center_of_mass(self):
        model = Seq2SeqTransformer(small_config(10, decoder_layers=4))
        model.heads["sae"].layer_weights.data[:] = [30.0, 0.0, 0.0]
        model.heads["saa"].layer_weights.data[:] = [0.0, 0.0, 30.0]
        report = weight_distribution_report(model)
        assert report.center_of_mass["sae"] == pytest.approx(1.0, abs=1e-9)
        assert report.center_of_mass["saa"] == pytest.approx(3.0, abs=1e-9)
        assert report.render().endswith("yes")

    def test_not_applicable_without_hierarchy(self):
        report = weight_distribution_report(Seq2SeqTransformer(small_config(10, hierarchical=False)))
        assert not report.applicable
        assert "not applicable" in report.render()

    def test_not_applicable_for_baseline(self):
        report = weight_distribution_report(Seq2SeqTransformer(small_config(10, hierarchical=False, tasks=())))
        assert report.reason == "model has no task heads"


def test_decode_intermediate_layers(tiny_model, vocab, tiny_corpus):
    example = tiny_corpus.split("train")[0]
    result = decode_intermediate_layers(tiny_model, vocab, example)
    assert result.not_applicable == {}
    assert len(result.decodings) == (tiny_model.cfg.decoder_layers - 1) * 2
    assert {(d.layer, d.task) for d in result.decodings} == {(1, "sae"), (1, "saa"), (2, "sae"), (2, "saa")}
    assert all(len(d.tokens) == len(example.targets.main) for d in result.decodings)
    assert "not applicable" not in result.render()


@pytest.mark.parametrize(
    "ablation, decoded, missing",
    [
        ("no_sae", {"saa"}, {"sae": "model was trained without the sae task"}),
        ("no_saa", {"sae"}, {"saa": "model was trained without the saa task"}),
        ("baseline", set(), {"sae": "model has no task heads", "saa": "model has no task heads"}),
    ],
)
def test_decode_intermediate_layers_under_ablation(tiny_config, vocab, tiny_corpus, ablation, decoded, missing):
    model = Seq2SeqTransformer(apply_ablation(tiny_config, ablation), seed=0)
    result = decode_intermediate_layers(model, vocab, tiny_corpus.split("train")[0])
    assert {d.task for d in result.decodings} == decoded
    assert len(result.decodings) == (model.cfg.decoder_layers - 1) * len(decoded)
    assert result.not_applicable == missing
    assert missing_task_heads(model) == missing
    for task in missing:
        assert f"{task}: not applicable" in result.render()
    assert json.loads(json.dumps(result.to_dict()))["not_applicable"] == missing


def test_layer_anchor_accuracy_range(tiny_model, vocab, tiny_corpus):
    accuracy = layer_anchor_accuracy(tiny_model, vocab, tiny_corpus.split("dev"), batch_size=4)
    assert set(accuracy) == {"sae", "saa"}
    assert all(0.0 <= v <= 1.0 for per_layer in accuracy.values() for v in per_layer.values())
    assert all(set(per_layer) == {1, 2} for per_layer in accuracy.values())
