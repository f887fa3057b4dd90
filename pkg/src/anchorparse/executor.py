"""In-memory evaluation of logical forms against database and knowledge-base instances."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from .errors import ExecutionError, SchemaReferenceError
from .logical_form import (
    ComparisonOp,
    Query,
    SparqlQuery,
    SqlQuery,
    Term,
    TriplePattern,
    Var,
)
from .schema import (
    DatabaseInstance,
    KnowledgeBase,
    SchemaDocument,
    Value,
    canonical_number,
    render_value,
)

Cell = Optional[Value]


@dataclass(frozen=True)
class ResultSet:
    """A bag of result rows under a column / variable header."""

    header: Tuple[str, ...]
    rows: Tuple[Tuple[Cell, ...], ...]

    def __len__(self) -> int:
        return len(self.rows)

    def canonical_rows(self) -> Counter:
        return Counter(tuple(render_cell(c) for c in row) for row in self.rows)


def render_cell(cell: Cell) -> str:
    """Typed rendering: NULL, numbers (12 significant digits), or quoted text."""

    if cell is None:
        return "NULL"
    if isinstance(cell, str):
        return "'" + cell
    number = canonical_number(cell)
    if isinstance(number, float):
        number = canonical_number(float(f"{number:.12g}"))
    return render_value(number)


def result_equal(a: ResultSet, b: ResultSet) -> bool:
    """Same header and the same multiset of rows; row order is irrelevant."""

    return a.header == b.header and a.canonical_rows() == b.canonical_rows()


def compare(cell: Cell, op: ComparisonOp, literal: Value) -> bool:
    """Typed comparison; a number never matches text and vice versa."""

    if cell is None or isinstance(cell, str) != isinstance(literal, str):
        return False
    if op == "=":
        return cell == literal
    if op == ">":
        return cell > literal  # type: ignore[operator]
    return cell < literal  # type: ignore[operator]


# === SQL ===

def execute_sql(query: SqlQuery, db: DatabaseInstance) -> ResultSet:
    table = db.schema.table(query.table)
    if table is None:
        raise SchemaReferenceError(query.table, "table")
    column = table.column_index(query.column)
    if column is None:
        raise SchemaReferenceError(query.column, "column")
    filters = []
    for cond in query.conditions:
        index = table.column_index(cond.column)
        if index is None:
            raise SchemaReferenceError(cond.column, "column")
        filters.append((index, cond.op, cond.value))

    selected = [
        row[column]
        for row in db.rows[table.name]
        if all(compare(row[i], op, value) for i, op, value in filters)
    ]
    if query.aggregator == "none":
        return ResultSet((query.column,), tuple((v,) for v in selected))

    header = (f"{query.aggregator}({query.column})",)
    if query.aggregator == "count":
        return ResultSet(header, ((len(selected),),))
    column_type = table.attributes[column].type
    if query.aggregator in ("sum", "avg") and column_type != "number":
        raise ExecutionError(f"{query.aggregator} needs a numeric column, {query.column!r} is text")
    if not selected:
        return ResultSet(header, ((None,),))
    if query.aggregator == "sum":
        value: Value = canonical_number(sum(selected))  # type: ignore[arg-type]
    elif query.aggregator == "avg":
        value = sum(selected) / len(selected)  # type: ignore[arg-type]
    elif query.aggregator == "max":
        value = max(selected)  # type: ignore[type-var]
    else:
        value = min(selected)  # type: ignore[type-var]
    return ResultSet(header, ((value,),))


# === SPARQL ===

Binding = Dict[str, Value]


def _check_constants(query: SparqlQuery, kb: KnowledgeBase) -> None:
    for pattern in query.patterns:
        if isinstance(pattern.subject, str) and kb.node_by_label(pattern.subject) is None:
            raise SchemaReferenceError(pattern.subject, "entity label")
        if isinstance(pattern.predicate, str) and (
            pattern.predicate not in kb.relation_labels
            and pattern.predicate not in kb.property_names
        ):
            raise SchemaReferenceError(pattern.predicate, "relation or property")
        if isinstance(pattern.object, str) and (
            kb.node_by_label(pattern.object) is None and pattern.object not in kb.text_values
        ):
            raise SchemaReferenceError(pattern.object, "entity label or value")
    for f in query.filters:
        if isinstance(f.value, str) and (
            kb.node_by_label(f.value) is None and f.value not in kb.text_values
        ):
            raise SchemaReferenceError(f.value, "entity label or value")


def _unify(term: Term, fact_value: Value, binding: Binding) -> Optional[Binding]:
    if isinstance(term, Var):
        bound = binding.get(term.name)
        if bound is None:
            extended = dict(binding)
            extended[term.name] = fact_value
            return extended
        return binding if _same(bound, fact_value) else None
    return binding if _same(term, fact_value) else None


def _same(a: Value, b: Value) -> bool:
    if isinstance(a, str) != isinstance(b, str):
        return False
    return a == b


def _solve(
    patterns: Sequence[TriplePattern],
    facts: Sequence[Tuple[str, str, Value]],
    binding: Binding,
) -> Iterator[Binding]:
    if not patterns:
        yield binding
        return
    first, rest = patterns[0], patterns[1:]
    for subject, predicate, obj in facts:
        step = _unify(first.subject, subject, binding)
        if step is None:
            continue
        step = _unify(first.predicate, predicate, step)
        if step is None:
            continue
        step = _unify(first.object, obj, step)
        if step is None:
            continue
        yield from _solve(rest, facts, step)


def execute_sparql(query: SparqlQuery, kb: KnowledgeBase) -> ResultSet:
    """Backtracking join of the triple patterns, then filters, then projection."""

    _check_constants(query, kb)
    rows: List[Tuple[Cell, ...]] = []
    for binding in _solve(query.patterns, kb.triples, {}):
        if all(compare(binding[f.variable.name], f.op, f.value) for f in query.filters):
            rows.append(tuple(binding[v.name] for v in query.variables))
    return ResultSet(tuple(str(v) for v in query.variables), tuple(rows))


def execute(query: Query, document: SchemaDocument) -> ResultSet:
    """Run a parsed query against the instance of a schema document."""

    if isinstance(query, SqlQuery):
        if document.database is None:
            raise ExecutionError(f"schema {document.ref!r} is not a database")
        return execute_sql(query, document.database)
    if document.kb is None:
        raise ExecutionError(f"schema {document.ref!r} is not a knowledge base")
    return execute_sparql(query, document.kb)

