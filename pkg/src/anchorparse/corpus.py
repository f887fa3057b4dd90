"""Corpus records, on-disk layout, and padded training batches.

A corpus directory holds::

    schemas/<schema_ref>.json   one schema document per schema
    train.jsonl dev.jsonl test.jsonl
    stats.json                  statistics written by the generator
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Literal, Mapping, Sequence

import numpy as np

from .anchors import SupervisionTargets
from .errors import ContractError, CorpusError, SchemaError
from .logical_form import QueryKind
from .schema import SchemaDocument, load_schema_document, save_schema_document
from .vocab import BOS_ID, EOS_ID, PAD_ID, Vocabulary

logger = logging.getLogger(__name__)

Split = Literal["train", "dev", "test"]
SPLITS: tuple[Split, ...] = ("train", "dev", "test")


@dataclass
class Example:
    """One (utterance, logical form) pair with its precomputed supervision targets."""

    id: int
    utterance: List[str]
    targets: SupervisionTargets
    schema_ref: str
    split: Split
    kind: QueryKind
    shape: str = ""

    def to_record(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "utterance": self.utterance,
            "main": self.targets.main,
            "sae": self.targets.sae,
            "saa": self.targets.saa,
            "saa_mask": self.targets.saa_mask,
            "schema_ref": self.schema_ref,
            "split": self.split,
            "kind": self.kind,
            "shape": self.shape,
        }

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "Example":
        try:
            targets = SupervisionTargets(
                main=list(record["main"]),
                sae=list(record["sae"]),
                saa=list(record["saa"]),
                saa_mask=[bool(m) for m in record["saa_mask"]],
            )
            example = cls(
                id=int(record["id"]),
                utterance=list(record["utterance"]),
                targets=targets,
                schema_ref=str(record["schema_ref"]),
                split=record["split"],
                kind=record["kind"],
                shape=str(record.get("shape", "")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusError(f"malformed corpus record: {exc!r}") from exc
        if example.split not in SPLITS or example.kind not in ("sql", "sparql"):
            raise CorpusError(f"record {example.id}: bad split or kind")
        return example


@dataclass
class Corpus:
    examples: Dict[str, List[Example]] = field(default_factory=dict)
    schemas: Dict[str, SchemaDocument] = field(default_factory=dict)
    root: Path | None = None

    def split(self, name: str) -> List[Example]:
        return self.examples.get(name, [])

    def all_examples(self) -> List[Example]:
        return [e for split in SPLITS for e in self.split(split)]

    def example_by_id(self, example_id: int) -> Example:
        for example in self.all_examples():
            if example.id == example_id:
                return example
        raise CorpusError(f"no example with id {example_id}")

    def schema_for(self, example: Example) -> SchemaDocument:
        try:
            return self.schemas[example.schema_ref]
        except KeyError:
            raise CorpusError(f"example {example.id} references unknown schema {example.schema_ref!r}") from None

    def token_sequences(self) -> Iterable[Sequence[str]]:
        for example in self.all_examples():
            yield example.utterance
            yield example.targets.main
            yield example.targets.sae
            yield example.targets.saa


def write_jsonl(path: Path, records: Iterable[Mapping[str, Any]]) -> None:
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def write_corpus(corpus: Corpus, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    schema_dir = out_dir / "schemas"
    schema_dir.mkdir(exist_ok=True)
    for ref in sorted(corpus.schemas):
        save_schema_document(corpus.schemas[ref], schema_dir / f"{ref}.json")
    for split in SPLITS:
        write_jsonl(out_dir / f"{split}.jsonl", (e.to_record() for e in corpus.split(split)))
    corpus.root = out_dir


def load_corpus(path: Path, *, validate: bool = True) -> Corpus:
    """Read a corpus directory; every record is checked against its targets' invariants."""

    if not path.is_dir():
        raise FileNotFoundError(f"corpus directory {path} does not exist")
    corpus = Corpus(root=path)
    schema_dir = path / "schemas"
    if schema_dir.is_dir():
        for schema_path in sorted(schema_dir.glob("*.json")):
            try:
                document = load_schema_document(schema_path)
            except SchemaError as exc:
                raise CorpusError(f"{schema_path}: {exc}") from exc
            corpus.schemas[document.ref] = document
    for split in SPLITS:
        split_path = path / f"{split}.jsonl"
        if not split_path.exists():
            continue
        examples = []
        with split_path.open(encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusError(f"{split_path}:{line_no}: {exc}") from exc
                examples.append(Example.from_record(record))
        corpus.examples[split] = examples
    if validate:
        validate_corpus(corpus)
    logger.info(
        "loaded corpus %s: %s",
        path,
        ", ".join(f"{s}={len(corpus.split(s))}" for s in SPLITS),
    )
    return corpus


def validate_corpus(corpus: Corpus) -> None:
    for example in corpus.all_examples():
        corpus.schema_for(example)
        problems = example.targets.check()
        if problems:
            raise CorpusError(f"example {example.id}: {'; '.join(problems)}")


# === batching ===

@dataclass
class Batch:
    """Padded id arrays for one teacher-forced pass; `*_ignore` is true where loss is skipped."""

    example_ids: List[int]
    source: np.ndarray
    decoder_input: np.ndarray
    main_target: np.ndarray
    main_ignore: np.ndarray
    sae_target: np.ndarray
    sae_ignore: np.ndarray
    saa_target: np.ndarray
    saa_ignore: np.ndarray
    sae_truncated: int = 0

    def __len__(self) -> int:
        return len(self.example_ids)

    def to_dict(self, vocab: Vocabulary) -> Dict[str, Any]:
        """Human-readable dump used for divergence diagnostics."""

        return {
            "example_ids": self.example_ids,
            "source": [vocab.decode(row, stop_at_eos=False) for row in self.source],
            "main_target": [vocab.decode(row) for row in self.main_target],
        }


def encode_source(utterance: Sequence[str], vocab: Vocabulary) -> List[int]:
    return vocab.encode(utterance)


def make_batch(
    examples: Sequence[Example],
    vocab: Vocabulary,
    *,
    max_source_len: int | None = None,
    max_target_len: int | None = None,
) -> Batch:
    if not examples:
        raise ContractError("cannot batch zero examples")
    sources = [encode_source(e.utterance, vocab) for e in examples]
    mains = [vocab.encode(e.targets.main) for e in examples]
    m = max(len(s) for s in sources)
    k = max(len(t) for t in mains) + 1
    if max_source_len is not None and m > max_source_len:
        raise ContractError(f"source length {m} exceeds maximum {max_source_len}")
    if max_target_len is not None and k > max_target_len:
        raise ContractError(f"target length {k} exceeds maximum {max_target_len}")

    size = len(examples)
    source = np.full((size, m), PAD_ID, dtype=np.int64)
    decoder_input = np.full((size, k), PAD_ID, dtype=np.int64)
    main_target = np.full((size, k), PAD_ID, dtype=np.int64)
    sae_target = np.full((size, k), PAD_ID, dtype=np.int64)
    saa_target = np.full((size, k), PAD_ID, dtype=np.int64)
    main_ignore = np.ones((size, k), dtype=bool)
    sae_ignore = np.ones((size, k), dtype=bool)
    saa_ignore = np.ones((size, k), dtype=bool)
    truncated = 0
    for row, (example, src, main) in enumerate(zip(examples, sources, mains)):
        source[row, : len(src)] = src
        length = len(main)
        decoder_input[row, : length + 1] = [BOS_ID] + main
        main_target[row, : length + 1] = main + [EOS_ID]
        main_ignore[row, : length + 1] = False

        sae = vocab.encode(example.targets.sae) + [EOS_ID]
        if len(sae) > length + 1:
            truncated += 1
            sae = sae[: length + 1]
        sae_target[row, : len(sae)] = sae
        sae_ignore[row, : length + 1] = ~np.asarray(example.targets.sae_loss_mask(length + 1), dtype=bool)

        saa = vocab.encode(example.targets.saa)
        saa_target[row, :length] = saa
        saa_ignore[row, :length] = ~np.asarray(example.targets.saa_mask, dtype=bool)
    if truncated:
        logger.warning("%d extraction targets truncated to the decoder length", truncated)
    return Batch(
        example_ids=[e.id for e in examples],
        source=source,
        decoder_input=decoder_input,
        main_target=main_target,
        main_ignore=main_ignore,
        sae_target=sae_target,
        sae_ignore=sae_ignore,
        saa_target=saa_target,
        saa_ignore=saa_ignore,
        sae_truncated=truncated,
    )
