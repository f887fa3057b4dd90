"""Knowledge-base and relational schemas, their instances, and flat vocabularies."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, Iterable, List, Literal, Mapping, Sequence, Tuple, Union

from .errors import SchemaError

Value = Union[int, float, str]
AttributeType = Literal["number", "text"]
ElementKind = Literal["table", "column", "entity-label", "relation-label", "property", "value"]
SchemaKind = Literal["kb", "db"]

SCHEMA_FORMAT_VERSION = 1

# Characters the query lexer reserves; they never survive normalization.
_RESERVED_CHARS = re.compile(r"[(){},=<>'\"?\x00-\x1f\x7f]")
_WHITESPACE = re.compile(r"\s+")


def normalize_identifier(text: str) -> str:
    """Lowercase, drop lexer-reserved characters, join whitespace runs with '_'.

    The result is a fixpoint: normalizing it again returns it unchanged.
    """

    cleaned = _RESERVED_CHARS.sub("", str(text).lower())
    return _WHITESPACE.sub("_", cleaned.strip())


def canonical_number(value: int | float) -> int | float:
    """Integral floats become ints so 1990.0 and 1990 render and compare alike."""

    if isinstance(value, bool):
        raise SchemaError("booleans are not schema values")
    if isinstance(value, float) and math.isfinite(value) and value.is_integer():
        return int(value)
    return value


def render_value(value: Value) -> str:
    """Canonical string for a schema value: integers plain, floats shortest repr, text verbatim."""

    if isinstance(value, str):
        return value
    number = canonical_number(value)
    return str(number) if isinstance(number, int) else repr(number)


def is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


@dataclass(frozen=True)
class SchemaVocabulary:
    """Normalized schema tokens mapped to the kind of element they name."""

    kinds: Mapping[str, ElementKind] = field(default_factory=dict)

    def __contains__(self, token: object) -> bool:
        return token in self.kinds

    def __len__(self) -> int:
        return len(self.kinds)

    def __iter__(self):
        return iter(self.kinds)

    @property
    def tokens(self) -> frozenset[str]:
        return frozenset(self.kinds)

    def kind_of(self, token: str) -> ElementKind | None:
        return self.kinds.get(token)


class _VocabularyBuilder:
    def __init__(self, strict: bool):
        self.kinds: Dict[str, ElementKind] = {}
        self.strict = strict

    def add(self, raw: str, kind: ElementKind) -> None:
        token = normalize_identifier(raw)
        if not token:
            return
        existing = self.kinds.get(token)
        if existing is None:
            self.kinds[token] = kind
        elif existing != kind and self.strict:
            raise SchemaError(f"token {token!r} names both a {existing} and a {kind}")

    def build(self) -> SchemaVocabulary:
        return SchemaVocabulary(dict(sorted(self.kinds.items())))


# === knowledge bases ===

Properties = Tuple[Tuple[str, Value], ...]


@dataclass(frozen=True)
class Node:
    id: str
    label: str
    properties: Properties = ()


@dataclass(frozen=True)
class Edge:
    id: str
    source: str
    label: str
    target: str
    properties: Properties = ()


def _normalize_properties(pairs: Iterable[Tuple[str, Value]]) -> Properties:
    out = []
    for name, value in pairs:
        if is_number(value):
            rendered: Value = canonical_number(value)
        elif isinstance(value, str):
            rendered = normalize_identifier(value)
        else:
            raise SchemaError(f"property {name!r} has unsupported value {value!r}")
        out.append((normalize_identifier(name), rendered))
    return tuple(out)


class KnowledgeBase:
    """A directed labelled graph whose nodes and edges carry property pairs.

    Labels, property names, and text values are stored normalized. Node labels
    are unique, and no normalized string may name two different kinds of
    element.
    """

    def __init__(self, nodes: Iterable[Node] = (), edges: Iterable[Edge] = ()):
        self.nodes: Dict[str, Node] = {}
        for node in nodes:
            if node.id in self.nodes:
                raise SchemaError(f"duplicate node id {node.id!r}")
            label = normalize_identifier(node.label)
            if not label:
                raise SchemaError(f"node {node.id!r} has an empty label")
            self.nodes[node.id] = Node(node.id, label, _normalize_properties(node.properties))
        self.edges: List[Edge] = []
        seen_edges: set[str] = set()
        for edge in edges:
            if edge.id in seen_edges:
                raise SchemaError(f"duplicate edge id {edge.id!r}")
            seen_edges.add(edge.id)
            for endpoint in (edge.source, edge.target):
                if endpoint not in self.nodes:
                    raise SchemaError(f"edge {edge.id!r} endpoint {endpoint!r} is not a node")
            label = normalize_identifier(edge.label)
            if not label:
                raise SchemaError(f"edge {edge.id!r} has an empty label")
            self.edges.append(
                Edge(edge.id, edge.source, label, edge.target, _normalize_properties(edge.properties))
            )
        labels = [n.label for n in self.nodes.values()]
        if len(set(labels)) != len(labels):
            raise SchemaError("node labels must be unique after normalization")
        # raises on cross-kind collisions
        self.vocabulary = kb_vocabulary(self)

    def node_by_label(self, label: str) -> Node | None:
        return self._label_index.get(label)

    @cached_property
    def _label_index(self) -> Dict[str, Node]:
        return {n.label: n for n in self.nodes.values()}

    @cached_property
    def relation_labels(self) -> frozenset[str]:
        return frozenset(e.label for e in self.edges)

    @cached_property
    def property_names(self) -> frozenset[str]:
        names = {name for n in self.nodes.values() for name, _ in n.properties}
        names.update(name for e in self.edges for name, _ in e.properties)
        return frozenset(names)

    @cached_property
    def text_values(self) -> frozenset[str]:
        values = {v for n in self.nodes.values() for _, v in n.properties if isinstance(v, str)}
        return frozenset(values)

    @cached_property
    def triples(self) -> Tuple[Tuple[str, str, Value], ...]:
        """Queryable facts: (label, relation, label) edges plus (label, property, value) pairs."""

        facts: List[Tuple[str, str, Value]] = []
        for edge in self.edges:
            facts.append(
                (self.nodes[edge.source].label, edge.label, self.nodes[edge.target].label)
            )
        for node in self.nodes.values():
            for name, value in node.properties:
                facts.append((node.label, name, value))
        return tuple(facts)


def kb_vocabulary(kb: KnowledgeBase) -> SchemaVocabulary:
    """Labels, property names, and rendered property values of a knowledge base."""

    builder = _VocabularyBuilder(strict=True)
    for node in kb.nodes.values():
        builder.add(node.label, "entity-label")
    for edge in kb.edges:
        builder.add(edge.label, "relation-label")
    holders: List[Properties] = [n.properties for n in kb.nodes.values()]
    holders.extend(e.properties for e in kb.edges)
    for properties in holders:
        for name, _ in properties:
            builder.add(name, "property")
    for properties in holders:
        for _, value in properties:
            builder.add(render_value(value), "value")
    return builder.build()


# === relational databases ===

@dataclass(frozen=True)
class Attribute:
    name: str
    type: AttributeType


@dataclass(frozen=True)
class TableSchema:
    name: str
    attributes: Tuple[Attribute, ...]

    def column_index(self, name: str) -> int | None:
        for i, attribute in enumerate(self.attributes):
            if attribute.name == name:
                return i
        return None

    @property
    def column_names(self) -> List[str]:
        return [a.name for a in self.attributes]


class RelationalSchema:
    """A set of single-table schemas with normalized, unique names."""

    def __init__(self, tables: Iterable[TableSchema] = ()):
        self.tables: List[TableSchema] = []
        seen: set[str] = set()
        for table in tables:
            name = normalize_identifier(table.name)
            if not name:
                raise SchemaError("table with an empty name")
            if name in seen:
                raise SchemaError(f"duplicate table name {name!r}")
            seen.add(name)
            attributes = []
            columns: set[str] = set()
            for attribute in table.attributes:
                column = normalize_identifier(attribute.name)
                if not column:
                    raise SchemaError(f"table {name!r} has a column with an empty name")
                if column in columns:
                    raise SchemaError(f"duplicate column {column!r} in table {name!r}")
                if attribute.type not in ("number", "text"):
                    raise SchemaError(f"column {column!r} has unknown type {attribute.type!r}")
                columns.add(column)
                attributes.append(Attribute(column, attribute.type))
            self.tables.append(TableSchema(name, tuple(attributes)))
        self._by_name = {t.name: t for t in self.tables}

    def table(self, name: str) -> TableSchema | None:
        return self._by_name.get(name)


def db_vocabulary(schema: RelationalSchema) -> SchemaVocabulary:
    """Table and column names of a relational schema; cell values are excluded."""

    builder = _VocabularyBuilder(strict=False)
    for table in schema.tables:
        builder.add(table.name, "table")
    for table in schema.tables:
        for attribute in table.attributes:
            builder.add(attribute.name, "column")
    return builder.build()


Row = Tuple[Value, ...]


class DatabaseInstance:
    """Rows for every table of a relational schema, typed per column."""

    def __init__(self, schema: RelationalSchema, rows: Mapping[str, Sequence[Sequence[Any]]]):
        self.schema = schema
        self.rows: Dict[str, List[Row]] = {}
        for table in schema.tables:
            typed: List[Row] = []
            for raw in rows.get(table.name, ()):
                if len(raw) != len(table.attributes):
                    raise SchemaError(
                        f"row {list(raw)!r} of table {table.name!r} has {len(raw)} values, "
                        f"expected {len(table.attributes)}"
                    )
                typed.append(tuple(_typed_cell(table, a, v) for a, v in zip(table.attributes, raw)))
            self.rows[table.name] = typed
        unknown = set(rows) - set(self.rows)
        if unknown:
            raise SchemaError(f"rows given for unknown tables {sorted(unknown)}")


def _typed_cell(table: TableSchema, attribute: Attribute, value: Any) -> Value:
    if attribute.type == "number":
        if not is_number(value):
            raise SchemaError(
                f"column {table.name}.{attribute.name} expects a number, got {value!r}"
            )
        return canonical_number(value)
    if not isinstance(value, str):
        raise SchemaError(f"column {table.name}.{attribute.name} expects text, got {value!r}")
    return value


# === schema documents ===

@dataclass
class SchemaDocument:
    """One schema plus its instance, as stored under a corpus's schemas/ directory."""

    ref: str
    kind: SchemaKind
    kb: KnowledgeBase | None = None
    database: DatabaseInstance | None = None

    @cached_property
    def vocabulary(self) -> SchemaVocabulary:
        if self.kind == "kb":
            assert self.kb is not None
            return self.kb.vocabulary
        assert self.database is not None
        return db_vocabulary(self.database.schema)

    def to_dict(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {"format_version": SCHEMA_FORMAT_VERSION, "ref": self.ref, "kind": self.kind}
        if self.kind == "kb":
            assert self.kb is not None
            doc["schema"] = {
                "nodes": [
                    {"id": n.id, "label": n.label, "properties": [list(p) for p in n.properties]}
                    for n in self.kb.nodes.values()
                ]
            }
            doc["triples"] = [
                {
                    "id": e.id,
                    "source": e.source,
                    "label": e.label,
                    "target": e.target,
                    "properties": [list(p) for p in e.properties],
                }
                for e in self.kb.edges
            ]
        else:
            assert self.database is not None
            schema = self.database.schema
            doc["schema"] = {
                "tables": [
                    {
                        "name": t.name,
                        "attributes": [{"name": a.name, "type": a.type} for a in t.attributes],
                    }
                    for t in schema.tables
                ]
            }
            doc["rows"] = {name: [list(r) for r in rows] for name, rows in self.database.rows.items()}
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "SchemaDocument":
        version = doc.get("format_version")
        if version != SCHEMA_FORMAT_VERSION:
            raise SchemaError(f"unsupported schema document version {version!r}")
        try:
            ref = str(doc["ref"])
            kind = doc["kind"]
            if kind == "kb":
                nodes = [
                    Node(n["id"], n["label"], tuple((p[0], p[1]) for p in n.get("properties", ())))
                    for n in doc["schema"]["nodes"]
                ]
                edges = [
                    Edge(
                        e["id"],
                        e["source"],
                        e["label"],
                        e["target"],
                        tuple((p[0], p[1]) for p in e.get("properties", ())),
                    )
                    for e in doc["triples"]
                ]
                return cls(ref, "kb", kb=KnowledgeBase(nodes, edges))
            if kind == "db":
                tables = [
                    TableSchema(
                        t["name"],
                        tuple(Attribute(a["name"], a["type"]) for a in t["attributes"]),
                    )
                    for t in doc["schema"]["tables"]
                ]
                schema = RelationalSchema(tables)
                return cls(ref, "db", database=DatabaseInstance(schema, doc["rows"]))
        except (KeyError, TypeError, IndexError) as exc:
            raise SchemaError(f"malformed schema document: {exc!r}") from exc
        raise SchemaError(f"schema document kind must be 'kb' or 'db', got {kind!r}")


def save_schema_document(document: SchemaDocument, path: Path) -> None:
    path.write_text(json.dumps(document.to_dict(), ensure_ascii=False, indent=1) + "\n", encoding="utf-8")


def load_schema_document(path: Path) -> SchemaDocument:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not a JSON document ({exc})") from exc
    return SchemaDocument.from_dict(doc)
