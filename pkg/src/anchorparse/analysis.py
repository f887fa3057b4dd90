"""Execution accuracy, hallucination counts, and layer-level interpretability reports."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .anchors import extract_anchors
from .corpus import Batch, Example, make_batch
from .decoding import DecodeMode, generate, greedy_decode
from .errors import AnchorParseError, ContractError
from .executor import execute, result_equal
from .logical_form import Query, referenced_identifiers, serialize, try_parse
from .model import TASKS, Seq2SeqTransformer, head_logits
from .schema import SchemaDocument
from .tensor import no_grad
from .vocab import PAD_ID, Vocabulary

logger = logging.getLogger(__name__)


# === execution accuracy ===

def _parse(text: str, example: Example) -> Query | None:
    query, _ = try_parse(text, example.kind)
    return query


def is_correct(prediction: str, gold: Example, document: SchemaDocument) -> bool:
    """True iff the prediction parses, executes, and denotes exactly what the gold query does."""

    query = _parse(prediction, gold)
    if query is None:
        return False
    try:
        predicted = execute(query, document)
    except AnchorParseError:
        return False
    gold_query = _parse(" ".join(gold.targets.main), gold)
    if gold_query is None:
        raise ContractError(f"gold target of example {gold.id} does not parse")
    return result_equal(predicted, execute(gold_query, document))


def execution_accuracy(
    predictions: Sequence[str], golds: Sequence[Example], schemas: Mapping[str, SchemaDocument]
) -> float:
    if len(predictions) != len(golds):
        raise ContractError(f"{len(predictions)} predictions for {len(golds)} examples")
    if not golds:
        return 0.0
    correct = sum(is_correct(p, g, schemas[g.schema_ref]) for p, g in zip(predictions, golds))
    return correct / len(golds)


# === hallucinations ===

@dataclass
class HallucinationCounts:
    strict: int = 0
    anchor_mismatch: int = 0


def hallucination_flags(prediction: str, gold: Example, document: SchemaDocument) -> Tuple[bool, bool]:
    """(strict, anchor-mismatch) for one prediction; an unparseable prediction is both."""

    query = _parse(prediction, gold)
    if query is None:
        return True, True
    vocabulary = document.vocabulary
    strict = any(name not in vocabulary for name in referenced_identifiers(query))
    predicted = Counter(a.token for a in extract_anchors(serialize(query), vocabulary))
    expected = Counter(a.token for a in extract_anchors(gold.targets.main, vocabulary))
    return strict, predicted != expected


def count_hallucinations(
    predictions: Sequence[str], golds: Sequence[Example], schemas: Mapping[str, SchemaDocument]
) -> HallucinationCounts:
    counts = HallucinationCounts()
    for prediction, gold in zip(predictions, golds):
        strict, mismatch = hallucination_flags(prediction, gold, schemas[gold.schema_ref])
        counts.strict += strict
        counts.anchor_mismatch += mismatch
    return counts


# === evaluation ===

@dataclass
class Prediction:
    id: int
    prediction: str
    gold: str
    correct: bool
    exact_match: bool
    parse_error: str | None
    strict_hallucination: bool
    anchor_mismatch: bool
    log_prob: float
    truncated: bool


@dataclass
class EvalReport:
    split: str
    total: int = 0
    execution_accuracy: float = 0.0
    exact_match: float = 0.0
    parse_failures: int = 0
    truncated: int = 0
    hallucination_strict: int = 0
    hallucination_anchor_mismatch: int = 0
    per_shape: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def summary_table(self) -> str:
        lines = [
            f"split                  {self.split}",
            f"examples               {self.total}",
            f"execution accuracy     {self.execution_accuracy:.4f}",
            f"exact match            {self.exact_match:.4f}",
            f"parse failures         {self.parse_failures}",
            f"strict hallucinations  {self.hallucination_strict}",
            f"anchor mismatches      {self.hallucination_anchor_mismatch}",
            "",
            f"{'shape':<28} {'n':>6} {'exec acc':>9}",
        ]
        for shape, row in sorted(self.per_shape.items()):
            lines.append(f"{shape:<28} {row['total']:>6} {row['execution_accuracy']:>9.4f}")
        return "\n".join(lines)


def _source_ids(examples: Sequence[Example], vocab: Vocabulary, max_len: int) -> np.ndarray:
    rows = []
    for example in examples:
        ids = vocab.encode(example.utterance)
        if len(ids) > max_len:
            logger.warning("utterance of example %d cut to %d tokens", example.id, max_len)
            ids = ids[:max_len]
        rows.append(ids)
    out = np.full((len(rows), max(len(r) for r in rows)), PAD_ID, dtype=np.int64)
    for i, ids in enumerate(rows):
        out[i, : len(ids)] = ids
    return out


def predict(
    model: Seq2SeqTransformer,
    vocab: Vocabulary,
    examples: Sequence[Example],
    *,
    mode: DecodeMode = "greedy",
    beam_size: int = 4,
    batch_size: int = 64,
    show_progress: bool = False,
) -> List[Tuple[List[str], float, bool]]:
    """(tokens, log-probability, truncated) for every example, in order."""

    outputs: List[Tuple[List[str], float, bool]] = []
    if mode == "beam":
        for example in tqdm(examples, desc="beam decode", disable=not show_progress, leave=False):
            source = _source_ids([example], vocab, model.cfg.max_source_len)[0]
            result = generate(model, source, mode="beam", beam_size=beam_size)
            outputs.append((vocab.decode(result.ids), result.log_prob, result.truncated))
        return outputs
    starts = range(0, len(examples), batch_size)
    for start in tqdm(starts, desc="decode", disable=not show_progress, leave=False):
        chunk = examples[start : start + batch_size]
        for result in greedy_decode(model, _source_ids(chunk, vocab, model.cfg.max_source_len)):
            outputs.append((vocab.decode(result.ids), result.log_prob, result.truncated))
    return outputs


def evaluate(
    model: Seq2SeqTransformer,
    vocab: Vocabulary,
    examples: Sequence[Example],
    schemas: Mapping[str, SchemaDocument],
    *,
    split: str = "test",
    mode: DecodeMode = "greedy",
    beam_size: int = 4,
    batch_size: int = 64,
    show_progress: bool = False,
) -> Tuple[EvalReport, List[Prediction]]:
    report = EvalReport(split=split, total=len(examples))
    predictions: List[Prediction] = []
    if not examples:
        return report, predictions
    decoded = predict(
        model, vocab, examples, mode=mode, beam_size=beam_size, batch_size=batch_size, show_progress=show_progress
    )
    shape_counts: Dict[str, List[int]] = {}
    for example, (tokens, log_prob, truncated) in zip(examples, decoded):
        text = " ".join(tokens)
        document = schemas[example.schema_ref]
        _, error = try_parse(text, example.kind)
        correct = is_correct(text, example, document)
        strict, mismatch = hallucination_flags(text, example, document)
        predictions.append(
            Prediction(
                id=example.id,
                prediction=text,
                gold=" ".join(example.targets.main),
                correct=correct,
                exact_match=tokens == example.targets.main,
                parse_error=str(error) if error else None,
                strict_hallucination=strict,
                anchor_mismatch=mismatch,
                log_prob=log_prob,
                truncated=truncated,
            )
        )
        tally = shape_counts.setdefault(example.shape, [0, 0])
        tally[0] += 1
        tally[1] += correct
    total = len(predictions)
    report.execution_accuracy = sum(p.correct for p in predictions) / total
    report.exact_match = sum(p.exact_match for p in predictions) / total
    report.parse_failures = sum(p.parse_error is not None for p in predictions)
    report.truncated = sum(p.truncated for p in predictions)
    report.hallucination_strict = sum(p.strict_hallucination for p in predictions)
    report.hallucination_anchor_mismatch = sum(p.anchor_mismatch for p in predictions)
    report.per_shape = {
        shape: {"total": n, "correct": c, "execution_accuracy": c / n}
        for shape, (n, c) in shape_counts.items()
    }
    return report, predictions


def write_predictions(predictions: Sequence[Prediction], path: Path) -> None:
    with path.open("w", encoding="utf-8") as handle:
        for p in predictions:
            handle.write(json.dumps(asdict(p), ensure_ascii=False) + "\n")


# === layer weights ===

@dataclass
class WeightReport:
    applicable: bool
    distributions: Dict[str, List[float]] = field(default_factory=dict)
    center_of_mass: Dict[str, float] = field(default_factory=dict)
    reason: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def render(self) -> str:
        if not self.applicable:
            return f"layer weights: not applicable ({self.reason})"
        tasks = sorted(self.distributions)
        layers = len(next(iter(self.distributions.values())))
        lines = ["layer  " + "  ".join(f"{t:>8}" for t in tasks)]
        for i in range(layers):
            lines.append(f"{i + 1:>5}  " + "  ".join(f"{self.distributions[t][i]:>8.4f}" for t in tasks))
        lines.append("c.o.m. " + "  ".join(f"{self.center_of_mass[t]:>8.4f}" for t in tasks))
        if "sae" in self.center_of_mass and "saa" in self.center_of_mass:
            lower = self.center_of_mass["sae"] <= self.center_of_mass["saa"]
            lines.append(f"extraction weighted toward lower layers than alignment: {'yes' if lower else 'no'}")
        return "\n".join(lines)

    def plot_records(self) -> List[Dict[str, Any]]:
        return [
            {"task": task, "layer": i + 1, "weight": weight}
            for task, dist in sorted(self.distributions.items())
            for i, weight in enumerate(dist)
        ]


def weight_distribution_report(model: Seq2SeqTransformer) -> WeightReport:
    """softmax of each task's layer weights and its center of mass sum(i * p_i), layers 1-based."""

    heads = {task: head for task, head in model.heads.items() if head.hierarchical}
    if not heads:
        reason = "model has no task heads" if not model.heads else "task heads read the final layer"
        return WeightReport(applicable=False, reason=reason)
    report = WeightReport(applicable=True)
    for task, head in sorted(heads.items()):
        dist = head.layer_distribution()
        report.distributions[task] = [float(p) for p in dist]
        report.center_of_mass[task] = float(np.dot(np.arange(1, dist.shape[0] + 1), dist))
    return report


def write_plot_data(report: WeightReport, path: Path) -> None:
    with path.open("w", encoding="utf-8") as handle:
        for record in report.plot_records():
            handle.write(json.dumps(record) + "\n")


# === intermediate decodings ===

@dataclass
class LayerDecoding:
    layer: int
    task: str
    tokens: List[str]


def _intermediate_argmax(
    model: Seq2SeqTransformer, vocab: Vocabulary, examples: Sequence[Example]
) -> List[Tuple[int, str, np.ndarray, Batch]]:
    """Teacher-forced pass; (layer, task, argmax ids [B, K], batch) for every intermediate layer and head."""

    batch = make_batch(examples, vocab)
    out = []
    model.eval()
    with no_grad():
        trace = model.forward(batch.source, batch.decoder_input)
        for layer, state in enumerate(trace.intermediate, start=1):
            for task, head in sorted(model.heads.items()):
                out.append((layer, task, head_logits(state, head).data.argmax(axis=-1), batch))
    return out


def missing_task_heads(model: Seq2SeqTransformer) -> Dict[str, str]:
    """Intermediate tasks this model cannot be probed for, mapped to the reason."""

    if not model.heads:
        return {task: "model has no task heads" for task in TASKS}
    return {task: f"model was trained without the {task} task" for task in TASKS if task not in model.heads}


@dataclass
class IntermediateDecodings:
    decodings: List[LayerDecoding] = field(default_factory=list)
    not_applicable: Dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def render(self) -> str:
        lines = [f"  layer {d.layer} {d.task}: {' '.join(d.tokens)}" for d in self.decodings]
        lines.extend(f"  {task}: not applicable ({reason})" for task, reason in sorted(self.not_applicable.items()))
        return "\n".join(lines)


def decode_intermediate_layers(
    model: Seq2SeqTransformer, vocab: Vocabulary, example: Example
) -> IntermediateDecodings:
    """Per-position argmax of every task head applied to every intermediate layer's states.

    Tasks without a head (baseline, no_sae, no_saa) are listed in
    `not_applicable` with the reason.
    """

    result = IntermediateDecodings(not_applicable=missing_task_heads(model))
    if not model.heads:
        return result
    length = len(example.targets.main)
    result.decodings = [
        LayerDecoding(layer, task, [vocab.tokens[int(i)] for i in ids[0, :length]])
        for layer, task, ids, _ in _intermediate_argmax(model, vocab, [example])
    ]
    return result


def layer_anchor_accuracy(
    model: Seq2SeqTransformer,
    vocab: Vocabulary,
    examples: Sequence[Example],
    *,
    batch_size: int = 64,
) -> Dict[str, Dict[int, float]]:
    """For each task head and intermediate layer, the share of anchor positions whose argmax is the anchor."""

    hits: Dict[Tuple[str, int], int] = Counter()
    total = 0
    for start in range(0, len(examples), batch_size):
        chunk = examples[start : start + batch_size]
        counted = False
        for layer, task, ids, batch in _intermediate_argmax(model, vocab, chunk):
            keep = ~batch.saa_ignore
            hits[(task, layer)] += int((ids == batch.saa_target)[keep].sum())
            if not counted:
                total += int(keep.sum())
                counted = True
    if total == 0:
        return {}
    out: Dict[str, Dict[int, float]] = {}
    for (task, layer), count in sorted(hits.items()):
        out.setdefault(task, {})[layer] = count / total
    return out
