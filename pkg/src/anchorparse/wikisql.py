"""Ingestion of the published WikiSQL line-delimited table and question files.

Tables file records: ``{"id", "header", "types", "rows"}`` with types "text" or
"real". Data file records: ``{"question", "table_id", "sql": {"sel", "agg",
"conds": [[column, op, value], ...]}}`` where ``agg`` indexes
(none, max, min, count, sum, avg) and ``op`` indexes (=, >, <).
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Tuple

from .anchors import build_supervision_targets
from .corpus import Example, Split, write_jsonl
from .errors import AnchorParseError, IngestError, SchemaError
from .executor import execute
from .logical_form import AGGREGATORS, COMPARISON_OPS, MAX_CONDITIONS, SQL_RESERVED, Condition, SqlQuery, query_shape, serialize
from .schema import (
    Attribute,
    DatabaseInstance,
    RelationalSchema,
    SchemaDocument,
    TableSchema,
    Value,
    canonical_number,
    is_number,
    normalize_identifier,
    save_schema_document,
)

logger = logging.getLogger(__name__)

MAX_MALFORMED_FRACTION = 0.05
_QUESTION_TOKEN = re.compile(r"\w+(?:[.'-]\w+)*|[^\w\s]")


class MalformedRecord(Exception):
    """A single record that cannot be converted; counted and skipped."""


@dataclass
class IngestReport:
    split: str
    total: int = 0
    kept: int = 0
    reasons: Counter = field(default_factory=Counter)

    @property
    def skipped(self) -> int:
        return self.total - self.kept

    @property
    def malformed_fraction(self) -> float:
        return self.skipped / self.total if self.total else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "split": self.split,
            "total": self.total,
            "kept": self.kept,
            "skipped": self.skipped,
            "reasons": dict(sorted(self.reasons.items())),
        }


def _read_jsonl(path: Path) -> Iterator[Tuple[int, Any]]:
    with path.open(encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                yield line_no, json.loads(line)
            except json.JSONDecodeError:
                yield line_no, None


def normalize_text_value(value: Any) -> str:
    """Text cells and literals compare case-insensitively with collapsed whitespace."""

    return " ".join(str(value).lower().split())


def _as_number(value: Any) -> int | float | None:
    if is_number(value):
        return canonical_number(value)
    try:
        return canonical_number(float(str(value).replace(",", "")))
    except ValueError:
        return None


def table_document(record: Mapping[str, Any]) -> SchemaDocument:
    """One WikiSQL table as a single-table database schema document."""

    try:
        table_id = str(record["id"])
        header = [str(h) for h in record["header"]]
        types = [str(t) for t in record["types"]]
        raw_rows = [list(r) for r in record["rows"]]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"malformed table record: {exc!r}") from exc
    if len(types) != len(header):
        raise SchemaError(f"table {table_id}: {len(header)} headers but {len(types)} types")
    for row in raw_rows:
        if len(row) != len(header):
            raise SchemaError(f"table {table_id}: row width {len(row)} differs from header")

    columns: List[List[Value]] = [[row[i] for row in raw_rows] for i in range(len(header))]
    attributes = []
    typed_columns: List[List[Value]] = []
    for raw_name, kind, cells in zip(header, types, columns):
        name = normalize_identifier(raw_name)
        if name in SQL_RESERVED:
            name += "_"
        if kind == "real":
            numbers = [_as_number(c) for c in cells]
            if all(n is not None for n in numbers):
                attributes.append(Attribute(name, "number"))
                typed_columns.append(numbers)  # type: ignore[arg-type]
                continue
            logger.debug("table %s: column %r has non-numeric cells, read as text", table_id, name)
        attributes.append(Attribute(name, "text"))
        typed_columns.append([normalize_text_value(c) for c in cells])

    name = normalize_identifier("table " + table_id)
    schema = RelationalSchema([TableSchema(name, tuple(attributes))])
    rows = [list(r) for r in zip(*typed_columns)] if typed_columns else []
    database = DatabaseInstance(schema, {schema.tables[0].name: rows})
    return SchemaDocument(name, "db", database=database)


def convert_record(record: Mapping[str, Any], document: SchemaDocument) -> Tuple[List[str], SqlQuery]:
    """(utterance tokens, query AST) for one data record, or MalformedRecord."""

    assert document.database is not None
    table = document.database.schema.tables[0]
    try:
        question = str(record["question"])
        sql = record["sql"]
        sel, agg = int(sql["sel"]), int(sql["agg"])
        conds = list(sql["conds"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedRecord("missing fields") from exc
    if not 0 <= sel < len(table.attributes):
        raise MalformedRecord("select column out of range")
    if not 0 <= agg < len(AGGREGATORS):
        raise MalformedRecord("unknown aggregation code")
    if len(conds) > MAX_CONDITIONS:
        raise MalformedRecord("too many conditions")

    conditions = []
    for cond in conds:
        try:
            column, op, raw = int(cond[0]), int(cond[1]), cond[2]
        except (TypeError, ValueError, IndexError) as exc:
            raise MalformedRecord("malformed condition") from exc
        if not 0 <= column < len(table.attributes):
            raise MalformedRecord("condition column out of range")
        if not 0 <= op < len(COMPARISON_OPS):
            raise MalformedRecord("unknown condition operator")
        attribute = table.attributes[column]
        if attribute.type == "number":
            value = _as_number(raw)
            if value is None:
                raise MalformedRecord("non-numeric literal on a numeric column")
        else:
            value = normalize_text_value(raw)
        conditions.append(Condition(attribute.name, COMPARISON_OPS[op], value))

    query = SqlQuery(AGGREGATORS[agg], table.attributes[sel].name, table.name, tuple(conditions))
    utterance = _QUESTION_TOKEN.findall(question.lower())
    if not utterance:
        raise MalformedRecord("empty question")
    return utterance, query


def ingest_wikisql(
    tables_path: Path,
    data_path: Path,
    out_dir: Path,
    *,
    split: Split = "train",
    start_id: int = 0,
) -> IngestReport:
    """Convert one WikiSQL split into the native corpus format under `out_dir`.

    Malformed records are skipped and counted by reason. If more than 5% of
    the records are malformed nothing is written and IngestError is raised.
    """

    for path in (tables_path, data_path):
        if not path.exists():
            raise FileNotFoundError(f"{path} does not exist")

    documents: Dict[str, SchemaDocument] = {}
    bad_tables: Dict[str, str] = {}
    for line_no, record in _read_jsonl(tables_path):
        table_id = str(record.get("id")) if isinstance(record, dict) else f"<line {line_no}>"
        try:
            if record is None:
                raise SchemaError("not JSON")
            documents[table_id] = table_document(record)
        except SchemaError as exc:
            bad_tables[table_id] = str(exc)
            logger.warning("tables file line %d: %s", line_no, exc)

    report = IngestReport(split=split)
    examples: List[Example] = []
    used: Dict[str, SchemaDocument] = {}
    for line_no, record in _read_jsonl(data_path):
        report.total += 1
        try:
            if not isinstance(record, dict):
                raise MalformedRecord("not a JSON object")
            table_id = str(record.get("table_id"))
            if table_id in bad_tables:
                raise MalformedRecord("table could not be read")
            document = documents.get(table_id)
            if document is None:
                raise MalformedRecord("unknown table id")
            utterance, query = convert_record(record, document)
            try:
                execute(query, document)
            except AnchorParseError as exc:
                raise MalformedRecord(f"does not execute ({type(exc).__name__})") from exc
        except MalformedRecord as exc:
            report.reasons[str(exc)] += 1
            logger.warning("%s line %d skipped: %s", data_path.name, line_no, exc)
            continue
        main = serialize(query)
        examples.append(
            Example(
                id=start_id + len(examples),
                utterance=utterance,
                targets=build_supervision_targets(main, document.vocabulary),
                schema_ref=document.ref,
                split=split,
                kind="sql",
                shape=query_shape(query),
            )
        )
        used[document.ref] = document
    report.kept = len(examples)

    if report.malformed_fraction > MAX_MALFORMED_FRACTION:
        raise IngestError(
            f"{report.skipped} of {report.total} records malformed "
            f"({report.malformed_fraction:.1%} > {MAX_MALFORMED_FRACTION:.0%})"
        )

    schema_dir = out_dir / "schemas"
    schema_dir.mkdir(parents=True, exist_ok=True)
    for ref in sorted(used):
        save_schema_document(used[ref], schema_dir / f"{ref}.json")
    write_jsonl(out_dir / f"{split}.jsonl", (e.to_record() for e in examples))
    (out_dir / f"ingest_{split}.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    logger.info("ingested %d of %d %s records", report.kept, report.total, split)
    return report
