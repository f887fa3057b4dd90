"""Lexer, recursive-descent parsers, and canonical serializers for the query subsets.

Two languages are covered:

    sql    := SELECT selector FROM ident [WHERE cond (AND cond)*]
    selector := ident | agg "(" ident ")"
    cond   := ident op (NUMBER | STRING)

    sparql := SELECT var+ WHERE "{" triple ("." triple)* filter* "}"
    triple := term term term
    filter := FILTER "(" var op (NUMBER | ident) ")"

Keywords are case-insensitive and serialize lowercase. Aggregator names are
only keywords when followed by "(", so a column may be called "count".
Parsers are total: any input either yields an AST or raises a `QueryError`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import List, Literal, Sequence, Tuple, Union

from .errors import LexicalError, QueryError, QuerySyntaxError
from .schema import Value, canonical_number, render_value

Aggregator = Literal["none", "max", "min", "count", "sum", "avg"]
ComparisonOp = Literal["=", ">", "<"]
QueryKind = Literal["sql", "sparql"]

# Index order is the WikiSQL aggregation / condition code table.
AGGREGATORS: Tuple[Aggregator, ...] = ("none", "max", "min", "count", "sum", "avg")
COMPARISON_OPS: Tuple[ComparisonOp, ...] = ("=", ">", "<")
MAX_CONDITIONS = 4

SQL_RESERVED = frozenset({"select", "from", "where", "and"})
SPARQL_RESERVED = frozenset({"select", "where", "filter"})

PAD = "<PAD>"
BOS = "<BOS>"
EOS = "<EOS>"
SEP = "<SEP>"
MASK = "<MASK>"
UNK = "<UNK>"
SPECIAL_TOKENS: Tuple[str, ...] = (PAD, BOS, EOS, SEP, MASK, UNK)

TokenSequence = List[str]


# === lexer ===

TokenKind = Literal["word", "number", "string", "var", "punct"]


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    offset: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<string>'(?:[^']|'')*')
  | (?P<var>\?[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[(){},=<>])
  | (?P<word>[^\s(){},=<>'"?\x00-\x1f\x7f]+)
    """,
    re.VERBOSE,
)
_NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?")


def tokenize(text: str) -> List[Token]:
    """Split query text into tokens; raises LexicalError with the failing offset."""

    tokens: List[Token] = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise LexicalError(pos, text[pos])
        kind = match.lastgroup
        lexeme = match.group()
        if kind == "word" and _NUMBER_RE.fullmatch(lexeme):
            kind = "number"
        if kind != "ws":
            tokens.append(Token(kind, lexeme, pos))  # type: ignore[arg-type]
        pos = match.end()
    return tokens


def _number_value(lexeme: str) -> int | float:
    if re.fullmatch(r"-?\d+", lexeme):
        return int(lexeme)
    return canonical_number(float(lexeme))


def _string_value(lexeme: str) -> str:
    return lexeme[1:-1].replace("''", "'")


def quote_text(value: str) -> str:
    return "'" + value.replace("'", "''") + "'"


def render_literal(value: Value) -> str:
    """SQL literal rendering: numbers bare, text single-quoted."""

    return quote_text(value) if isinstance(value, str) else render_value(value)


# === ASTs ===

@dataclass(frozen=True)
class Condition:
    column: str
    op: ComparisonOp
    value: Value


@dataclass(frozen=True)
class SqlQuery:
    aggregator: Aggregator
    column: str
    table: str
    conditions: Tuple[Condition, ...] = ()


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return f"?{self.name}"


Term = Union[Var, str, int, float]


@dataclass(frozen=True)
class TriplePattern:
    subject: Term
    predicate: Term
    object: Term


@dataclass(frozen=True)
class Filter:
    variable: Var
    op: ComparisonOp
    value: Value


@dataclass(frozen=True)
class SparqlQuery:
    variables: Tuple[Var, ...]
    patterns: Tuple[TriplePattern, ...]
    filters: Tuple[Filter, ...] = ()


Query = Union[SqlQuery, SparqlQuery]


# === parsing ===

class _Cursor:
    def __init__(self, tokens: List[Token], source: str):
        self.tokens = tokens
        self.pos = 0
        self.end_offset = len(source)

    def peek(self, ahead: int = 0) -> Token | None:
        index = self.pos + ahead
        return self.tokens[index] if index < len(self.tokens) else None

    def advance(self) -> Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def fail(self, expected: str) -> QuerySyntaxError:
        token = self.peek()
        if token is None:
            return QuerySyntaxError(expected, "end of query", self.end_offset, self.pos + 1)
        return QuerySyntaxError(expected, repr(token.text), token.offset, self.pos + 1)

    def at_keyword(self, word: str, ahead: int = 0) -> bool:
        token = self.peek(ahead)
        return token is not None and token.kind == "word" and token.text.lower() == word

    def at_punct(self, symbol: str, ahead: int = 0) -> bool:
        token = self.peek(ahead)
        return token is not None and token.kind == "punct" and token.text == symbol

    def keyword(self, word: str) -> None:
        if not self.at_keyword(word):
            raise self.fail(repr(word))
        self.advance()

    def punct(self, symbol: str) -> None:
        if not self.at_punct(symbol):
            raise self.fail(repr(symbol))
        self.advance()

    def identifier(self, role: str, reserved: frozenset[str]) -> str:
        token = self.peek()
        if token is None or token.kind not in ("word", "number") or token.text.lower() in reserved:
            raise self.fail(role)
        return self.advance().text

    def comparison(self) -> ComparisonOp:
        token = self.peek()
        if token is None or token.kind != "punct" or token.text not in COMPARISON_OPS:
            raise self.fail("comparison operator")
        return self.advance().text  # type: ignore[return-value]

    def finish(self) -> None:
        if self.peek() is not None:
            raise self.fail("end of query")


def parse_sql(text: str) -> SqlQuery:
    """Parse the single-table SQL subset."""

    cursor = _Cursor(tokenize(text), text)
    cursor.keyword("select")
    aggregator: Aggregator = "none"
    head = cursor.peek()
    if (
        head is not None
        and head.kind == "word"
        and head.text.lower() in AGGREGATORS[1:]
        and cursor.at_punct("(", ahead=1)
    ):
        aggregator = cursor.advance().text.lower()  # type: ignore[assignment]
        cursor.punct("(")
        column = cursor.identifier("column", SQL_RESERVED)
        cursor.punct(")")
    else:
        column = cursor.identifier("column", SQL_RESERVED)
    cursor.keyword("from")
    table = cursor.identifier("table", SQL_RESERVED)
    conditions: List[Condition] = []
    if cursor.at_keyword("where"):
        cursor.advance()
        conditions.append(_sql_condition(cursor))
        while cursor.at_keyword("and") and len(conditions) < MAX_CONDITIONS:
            cursor.advance()
            conditions.append(_sql_condition(cursor))
    cursor.finish()
    return SqlQuery(aggregator, column, table, tuple(conditions))


def _sql_condition(cursor: _Cursor) -> Condition:
    column = cursor.identifier("column", SQL_RESERVED)
    op = cursor.comparison()
    token = cursor.peek()
    if token is None or token.kind not in ("number", "string"):
        raise cursor.fail("literal")
    cursor.advance()
    value: Value = _number_value(token.text) if token.kind == "number" else _string_value(token.text)
    return Condition(column, op, value)


def parse_sparql(text: str) -> SparqlQuery:
    """Parse the basic-graph-pattern SPARQL subset."""

    cursor = _Cursor(tokenize(text), text)
    cursor.keyword("select")
    variables: List[Var] = []
    while (token := cursor.peek()) is not None and token.kind == "var":
        variables.append(Var(cursor.advance().text[1:]))
    if not variables:
        raise cursor.fail("variable")
    cursor.keyword("where")
    cursor.punct("{")
    patterns = [_sparql_triple(cursor)]
    while cursor.at_keyword("."):
        cursor.advance()
        if cursor.at_punct("}") or cursor.at_keyword("filter"):
            break
        patterns.append(_sparql_triple(cursor))
    filters: List[Filter] = []
    while cursor.at_keyword("filter"):
        cursor.advance()
        cursor.punct("(")
        token = cursor.peek()
        if token is None or token.kind != "var":
            raise cursor.fail("variable")
        variable = Var(cursor.advance().text[1:])
        op = cursor.comparison()
        token = cursor.peek()
        if token is None or token.kind not in ("number", "word") or token.text.lower() in SPARQL_RESERVED:
            raise cursor.fail("literal")
        cursor.advance()
        value: Value = _number_value(token.text) if token.kind == "number" else token.text
        cursor.punct(")")
        filters.append(Filter(variable, op, value))
    cursor.punct("}")
    cursor.finish()

    bound = {t for p in patterns for t in (p.subject, p.predicate, p.object) if isinstance(t, Var)}
    for var in list(variables) + [f.variable for f in filters]:
        if var not in bound:
            raise QuerySyntaxError(
                "variable bound in a triple pattern", str(var), cursor.end_offset, cursor.pos
            )
    return SparqlQuery(tuple(variables), tuple(patterns), tuple(filters))


def _sparql_term(cursor: _Cursor, role: str) -> Term:
    token = cursor.peek()
    if token is None:
        raise cursor.fail(role)
    if token.kind == "var":
        return Var(cursor.advance().text[1:])
    if token.kind == "number" and role != "predicate":
        return _number_value(cursor.advance().text)
    if token.kind == "word" and token.text != "." and token.text.lower() not in SPARQL_RESERVED:
        return cursor.advance().text
    raise cursor.fail(role)


def _sparql_triple(cursor: _Cursor) -> TriplePattern:
    subject = _sparql_term(cursor, "subject")
    predicate = _sparql_term(cursor, "predicate")
    obj = _sparql_term(cursor, "object")
    return TriplePattern(subject, predicate, obj)


def parse_query(text: str, kind: QueryKind) -> Query:
    if kind == "sql":
        return parse_sql(text)
    return parse_sparql(text)


def try_parse(text: str, kind: QueryKind) -> Tuple[Query | None, QueryError | None]:
    """Parse without raising: (ast, None) on success, (None, error) otherwise."""

    try:
        return parse_query(text, kind), None
    except QueryError as exc:
        return None, exc


# === serialization ===

def _term_text(term: Term) -> str:
    if isinstance(term, Var):
        return str(term)
    if isinstance(term, str):
        return term
    return render_value(term)


def serialize(query: Query) -> TokenSequence:
    """Canonical token sequence of an AST (deterministic, lowercase keywords)."""

    return [text for text, _ in _serialize_with_roles(query)]


def identifier_positions(query: Query) -> List[Tuple[int, str]]:
    """(position, role) of every schema identifier slot in `serialize(query)`.

    Roles are "table" / "column" for SQL and "subject" / "predicate" /
    "object" for SPARQL constants. Variables, keywords, punctuation, and SQL
    literals have no role.
    """

    return [(i, role) for i, (_, role) in enumerate(_serialize_with_roles(query)) if role]


def _serialize_with_roles(query: Query) -> List[Tuple[str, str]]:
    out: List[Tuple[str, str]] = []
    if isinstance(query, SqlQuery):
        out.append(("select", ""))
        if query.aggregator == "none":
            out.append((query.column, "column"))
        else:
            out.extend([(query.aggregator, ""), ("(", ""), (query.column, "column"), (")", "")])
        out.extend([("from", ""), (query.table, "table")])
        for i, cond in enumerate(query.conditions):
            out.append(("where" if i == 0 else "and", ""))
            out.extend([(cond.column, "column"), (cond.op, ""), (render_literal(cond.value), "")])
        return out

    out.append(("select", ""))
    out.extend((str(v), "") for v in query.variables)
    out.extend([("where", ""), ("{", "")])
    for i, pattern in enumerate(query.patterns):
        if i:
            out.append((".", ""))
        for role, term in (
            ("subject", pattern.subject),
            ("predicate", pattern.predicate),
            ("object", pattern.object),
        ):
            out.append((_term_text(term), "" if isinstance(term, Var) else role))
    for f in query.filters:
        out.extend(
            [("filter", ""), ("(", ""), (str(f.variable), ""), (f.op, ""), (_term_text(f.value), "object"), (")", "")]
        )
    out.append(("}", ""))
    return out


def canonical(text: str, kind: QueryKind) -> str:
    return " ".join(serialize(parse_query(text, kind)))


def referenced_identifiers(query: Query) -> List[str]:
    """Schema identifiers a query names, in serialization order.

    Numeric SPARQL objects and filter literals are comparisons, not
    references, and are left out.
    """

    tokens = _serialize_with_roles(query)
    names = []
    for text, role in tokens:
        if not role:
            continue
        if isinstance(query, SparqlQuery) and role == "object" and _NUMBER_RE.fullmatch(text):
            continue
        names.append(text)
    return names


def query_shape(query: Query) -> str:
    """Coarse structural label used for per-shape breakdowns."""

    if isinstance(query, SqlQuery):
        return f"sql:{query.aggregator}:{len(query.conditions)}cond"
    return f"sparql:{len(query.patterns)}tp:{len(query.filters)}filter"
