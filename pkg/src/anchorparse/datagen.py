"""Seeded synthetic benchmark generation: schemas, instances, and templated examples."""

from __future__ import annotations

import json
import logging
import random
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Sequence, Tuple

from .anchors import build_supervision_targets, extract_anchors
from .corpus import SPLITS, Corpus, Example, Split, write_corpus
from .errors import ConfigError, CorpusError, ExecutionError, SchemaError, SchemaReferenceError
from .executor import execute
from .logical_form import (
    MAX_CONDITIONS,
    SQL_RESERVED,
    SPARQL_RESERVED,
    Aggregator,
    ComparisonOp,
    Condition,
    Filter,
    Query,
    QueryKind,
    SparqlQuery,
    SqlQuery,
    TriplePattern,
    Var,
    parse_query,
    query_shape,
    serialize,
)
from .schema import (
    Attribute,
    DatabaseInstance,
    Edge,
    KnowledgeBase,
    Node,
    RelationalSchema,
    SchemaDocument,
    TableSchema,
    Value,
    render_value,
)

logger = logging.getLogger(__name__)

CorpusKind = Literal["sql", "sparql", "mixed"]
TemplateSet = Literal["default", "minimal"]
_MAX_ATTEMPTS = 50


@dataclass
class GenConfig:
    """Everything that determines a generated corpus; the seed fixes the rest."""

    seed: int = 0
    train: int = 1000
    dev: int = 200
    test: int = 200
    kind: CorpusKind = "mixed"
    db_schemas: int = 6
    kb_schemas: int = 6
    min_tables: int = 1
    max_tables: int = 3
    min_columns: int = 2
    max_columns: int = 6
    min_rows: int = 5
    max_rows: int = 15
    min_nodes: int = 5
    max_nodes: int = 30
    min_edges: int = 5
    max_edges: int = 40
    max_conditions: int = 2
    template_set: TemplateSet = "default"
    paraphrase_rate: float = 0.3
    heldout_schemas: bool = False

    def validate(self) -> None:
        for name in ("train", "dev", "test"):
            if getattr(self, name) < 0:
                raise ConfigError(f"gen.{name} must be >= 0")
        if self.train + self.dev + self.test == 0:
            raise ConfigError("gen: at least one split needs examples")
        if self.kind not in ("sql", "sparql", "mixed"):
            raise ConfigError(f"gen.kind must be sql, sparql or mixed, got {self.kind!r}")
        if self.kind in ("sql", "mixed") and self.db_schemas < 1:
            raise ConfigError("gen.db_schemas must be >= 1 for sql corpora")
        if self.kind in ("sparql", "mixed") and self.kb_schemas < 1:
            raise ConfigError("gen.kb_schemas must be >= 1 for sparql corpora")
        for low, high, floor in (
            ("min_tables", "max_tables", 1),
            ("min_columns", "max_columns", 2),
            ("min_rows", "max_rows", 1),
            ("min_nodes", "max_nodes", 3),
            ("min_edges", "max_edges", 1),
        ):
            lo, hi = getattr(self, low), getattr(self, high)
            if lo < floor or hi < lo:
                raise ConfigError(f"gen.{low}..{high} must satisfy {floor} <= {low} <= {high}, got {lo}..{hi}")
        if self.max_tables > len(TABLES):
            raise ConfigError(f"gen.max_tables cannot exceed {len(TABLES)}")
        widest = max(len(t.columns) for t in TABLES)
        if self.min_columns > widest:
            raise ConfigError(f"gen.min_columns cannot exceed {widest}")
        if not 0 <= self.max_conditions <= MAX_CONDITIONS:
            raise ConfigError(f"gen.max_conditions must lie in 0..{MAX_CONDITIONS}")
        if self.template_set not in ("default", "minimal"):
            raise ConfigError(f"unknown template set {self.template_set!r}")
        if not 0.0 <= self.paraphrase_rate <= 1.0:
            raise ConfigError("gen.paraphrase_rate must lie in [0, 1]")
        if self.heldout_schemas:
            needed = {"sql": self.db_schemas, "sparql": self.kb_schemas}
            for kind, count in needed.items():
                if self.kind in (kind, "mixed") and count < 3:
                    raise ConfigError(f"held-out schemas need at least 3 {kind} schemas, got {count}")


# === schema templates ===

@dataclass
class ColumnTemplate:
    """A column the generator may place in a table, with its value pool."""

    name: str
    type: Literal["number", "text"]
    aliases: List[str] = field(default_factory=list)
    words: List[str] = field(default_factory=list)
    low: int = 0
    high: int = 100


@dataclass
class TableTemplate:
    key: str
    aliases: List[str]
    columns: List[ColumnTemplate]


TABLES = [
    TableTemplate(
        key="company",
        aliases=["firm", "business"],
        columns=[
            ColumnTemplate("name", "text", ["title"], ["saab", "volvo", "scania", "ikea", "ericsson", "spotify", "klarna", "hm"]),
            ColumnTemplate("founded", "number", ["founding_year"], low=1850, high=2020),
            ColumnTemplate("employees", "number", ["staff", "headcount"], low=10, high=90000),
            ColumnTemplate("country", "text", ["nation"], ["sweden", "norway", "finland", "denmark", "iceland"]),
            ColumnTemplate("revenue", "number", ["income", "turnover"], low=1, high=5000),
            ColumnTemplate("sector", "text", ["industry"], ["auto", "retail", "telecom", "finance", "music"]),
        ],
    ),
    TableTemplate(
        key="player",
        aliases=["athlete"],
        columns=[
            ColumnTemplate("player_name", "text", ["athlete_name"], ["berg", "lind", "holm", "dahl", "strand", "viklund", "ek"]),
            ColumnTemplate("position", "text", ["role"], ["guard", "forward", "center", "keeper", "winger"]),
            ColumnTemplate("jersey", "number", ["shirt_number"], low=1, high=99),
            ColumnTemplate("goals", "number", ["scores"], low=0, high=60),
            ColumnTemplate("club", "text", ["team"], ["aik", "djurgarden", "malmo", "hammarby", "elfsborg"]),
            ColumnTemplate("age", "number", ["years"], low=17, high=40),
        ],
    ),
    TableTemplate(
        key="city",
        aliases=["town"],
        columns=[
            ColumnTemplate("city_name", "text", ["town_name"], ["uppsala", "lund", "umea", "kiruna", "visby", "orebro"]),
            ColumnTemplate("population", "number", ["inhabitants", "residents"], low=1000, high=900000),
            ColumnTemplate("region", "text", ["province"], ["north", "south", "east", "west", "central"]),
            ColumnTemplate("area", "number", ["size"], low=5, high=20000),
            ColumnTemplate("elevation", "number", ["altitude", "height"], low=0, high=900),
            ColumnTemplate("mayor", "text", ["governor"], ["nilsson", "karlsson", "persson", "olsson", "larsson"]),
        ],
    ),
    TableTemplate(
        key="film",
        aliases=["movie"],
        columns=[
            ColumnTemplate("film_title", "text", ["movie_title"], ["persona", "fanny", "wild_strawberries", "the_seventh_seal", "cries"]),
            ColumnTemplate("director", "text", ["filmmaker"], ["bergman", "sjostrom", "widerberg", "troell", "andersson"]),
            ColumnTemplate("release_year", "number", ["year"], low=1920, high=2023),
            ColumnTemplate("runtime", "number", ["duration", "length"], low=70, high=200),
            ColumnTemplate("rating", "number", ["score"], low=1, high=10),
            ColumnTemplate("genre", "text", ["category"], ["drama", "comedy", "thriller", "western", "horror"]),
        ],
    ),
]


@dataclass
class PropertyTemplate:
    name: str
    aliases: List[str] = field(default_factory=list)
    words: List[str] = field(default_factory=list)
    low: int = 0
    high: int = 100

    @property
    def numeric(self) -> bool:
        return not self.words


@dataclass
class EntityClass:
    key: str
    labels: List[str]
    properties: List[PropertyTemplate]


@dataclass
class RelationTemplate:
    label: str
    source: str
    target: str
    aliases: List[str] = field(default_factory=list)


@dataclass
class KbTemplate:
    """A knowledge-base domain: entity classes and the relations between them."""

    key: str
    classes: List[EntityClass]
    relations: List[RelationTemplate]


KB_DOMAINS = [
    KbTemplate(
        key="automotive",
        classes=[
            EntityClass(
                "maker",
                ["saab", "volvo", "scania", "koenigsegg", "polestar", "husqvarna"],
                [
                    PropertyTemplate("founded", ["founding_year"], low=1850, high=2020),
                    PropertyTemplate("headquarters", ["base"], ["trollhattan", "gothenburg", "sodertalje", "angelholm"]),
                ],
            ),
            EntityClass(
                "vehicle",
                ["sonett", "amazon", "viggen", "agera", "regera", "jesko", "gripen", "draken", "p1800", "xc90"],
                [
                    PropertyTemplate("top_speed", ["maximum_speed"], low=120, high=450),
                    PropertyTemplate("body_style", ["body"], ["coupe", "sedan", "wagon", "roadster"]),
                ],
            ),
            EntityClass(
                "nation",
                ["sweden", "norway", "finland", "denmark"],
                [PropertyTemplate("population", ["inhabitants"], low=300000, high=11000000)],
            ),
        ],
        relations=[
            RelationTemplate("produced_by", "vehicle", "maker", ["made_by", "built_by"]),
            RelationTemplate("located_in", "maker", "nation", ["based_in"]),
            RelationTemplate("sold_in", "vehicle", "nation", ["marketed_in"]),
        ],
    ),
    KbTemplate(
        key="music",
        classes=[
            EntityClass(
                "artist",
                ["abba", "roxette", "robyn", "avicii", "europe", "lykke_li", "first_aid_kit", "ghost"],
                [
                    PropertyTemplate("debut", ["debut_year"], low=1960, high=2020),
                    PropertyTemplate("style", ["genre"], ["pop", "rock", "electro", "folk", "metal"]),
                ],
            ),
            EntityClass(
                "record",
                ["arrival", "joyride", "body_talk", "true", "the_final_countdown", "wounded_rhymes", "stay_gold", "meliora", "waterloo", "look_sharp"],
                [
                    PropertyTemplate("sales", ["copies_sold"], low=1, high=500),
                    PropertyTemplate("released", ["release_year"], low=1970, high=2023),
                ],
            ),
            EntityClass(
                "label",
                ["polar", "emi", "sony", "universal", "loma_vista"],
                [PropertyTemplate("established", ["founding_date"], low=1900, high=2010)],
            ),
        ],
        relations=[
            RelationTemplate("recorded_by", "record", "artist", ["performed_by"]),
            RelationTemplate("signed_to", "artist", "label", ["contracted_to"]),
            RelationTemplate("published_by", "record", "label", ["issued_by"]),
        ],
    ),
    KbTemplate(
        key="geography",
        classes=[
            EntityClass(
                "river",
                ["klaralven", "dalalven", "torne", "lule", "ume", "angerman", "ljusnan"],
                [
                    PropertyTemplate("length_km", ["length"], low=100, high=600),
                    PropertyTemplate("flow", ["current"], ["slow", "steady", "fast", "rapid"]),
                ],
            ),
            EntityClass(
                "lake",
                ["vanern", "vattern", "malaren", "hjalmaren", "storsjon", "siljan"],
                [PropertyTemplate("depth", ["max_depth"], low=10, high=140)],
            ),
            EntityClass(
                "county",
                ["varmland", "dalarna", "norrbotten", "vasterbotten", "jamtland", "uppland"],
                [
                    PropertyTemplate("residents", ["inhabitants"], low=50000, high=2000000),
                    PropertyTemplate("landscape", ["terrain"], ["forest", "mountain", "coast", "plain"]),
                ],
            ),
        ],
        relations=[
            RelationTemplate("flows_into", "river", "lake", ["drains_into"]),
            RelationTemplate("runs_through", "river", "county", ["crosses"]),
            RelationTemplate("lies_in", "lake", "county", ["situated_in"]),
        ],
    ),
]


# === utterance templates ===

SQL_TEMPLATES: Dict[Aggregator, List[str]] = {
    "none": ["what is the {col} of {table}", "list the {col} of {table}", "show {col} from {table}"],
    "count": ["how many {col} in {table}", "count of {col} in {table}", "number of {col} in {table}"],
    "max": ["highest {col} of {table}", "maximum {col} in {table}", "largest {col} among {table}"],
    "min": ["lowest {col} of {table}", "minimum {col} in {table}", "smallest {col} among {table}"],
    "sum": ["total {col} of {table}", "sum of {col} in {table}", "combined {col} across {table}"],
    "avg": ["average {col} of {table}", "mean {col} in {table}", "typical {col} across {table}"],
}
SQL_FILTERED_NONE = "which {col} of {table} has {cond}"
CONDITION_INTROS = ["where", "with", "whose"]
CONDITION_TEMPLATES: Dict[ComparisonOp, List[str]] = {
    "=": ["{col} is {value}", "{col} equals {value}"],
    ">": ["{col} greater than {value}", "{col} more than {value}", "{col} above {value}"],
    "<": ["{col} less than {value}", "{col} fewer than {value}", "{col} below {value}"],
}

SparqlShape = Literal["subject_of", "object_of", "property_of", "with_value", "filtered", "two_hop"]
SPARQL_SHAPES: Tuple[SparqlShape, ...] = (
    "subject_of",
    "object_of",
    "property_of",
    "with_value",
    "filtered",
    "two_hop",
)
SPARQL_TEMPLATES: Dict[SparqlShape, List[str]] = {
    "subject_of": ["which entity is {rel} {obj}", "what is {rel} {obj}", "name everything {rel} {obj}"],
    "object_of": ["what is {subj} {rel}", "{subj} is {rel} what", "find what {subj} is {rel}"],
    "property_of": ["what is the {prop} of {subj}", "give the {prop} of {subj}", "{subj} has which {prop}"],
    "with_value": ["which entity has {prop} {value}", "what has {prop} equal to {value}", "find entities whose {prop} is {value}"],
    "filtered": ["which entities have {prop} {cmp} {value}", "list entities with {prop} {cmp} {value}"],
    "two_hop": ["which entity is {rel} something {rel2} {obj}", "what is {rel} an entity {rel2} {obj}"],
}
FILTER_WORDS: Dict[ComparisonOp, List[str]] = {
    "=": ["equal to", "exactly"],
    ">": ["greater than", "above"],
    "<": ["less than", "below"],
}


class _Phrasing:
    """Template and synonym choices for one example."""

    def __init__(self, rng: random.Random, cfg: GenConfig):
        self.rng = rng
        self.minimal = cfg.template_set == "minimal"
        self.paraphrase_rate = cfg.paraphrase_rate

    def pick(self, options: Sequence[str]) -> str:
        return options[0] if self.minimal else self.rng.choice(list(options))

    def mention(self, name: str, aliases: Sequence[str]) -> str:
        if aliases and not self.minimal and self.rng.random() < self.paraphrase_rate:
            return self.rng.choice(list(aliases))
        return name


def _words(text: str) -> List[str]:
    return text.split()


# === schema sampling ===

def _column_value(template: ColumnTemplate, rng: random.Random) -> Value:
    if template.type == "number":
        return rng.randint(template.low, template.high)
    return rng.choice(template.words)


def sample_database(cfg: GenConfig, rng: random.Random) -> Tuple[DatabaseInstance, Dict[str, TableTemplate]]:
    n_tables = rng.randint(cfg.min_tables, cfg.max_tables)
    templates = rng.sample(TABLES, n_tables)
    tables = []
    rows: Dict[str, List[List[Value]]] = {}
    columns_by_table: Dict[str, TableTemplate] = {}
    for template in templates:
        n_columns = rng.randint(cfg.min_columns, min(cfg.max_columns, len(template.columns)))
        chosen = [template.columns[0]] + rng.sample(template.columns[1:], n_columns - 1)
        tables.append(TableSchema(template.key, tuple(Attribute(c.name, c.type) for c in chosen)))
        n_rows = rng.randint(cfg.min_rows, cfg.max_rows)
        rows[template.key] = [[_column_value(c, rng) for c in chosen] for _ in range(n_rows)]
        columns_by_table[template.key] = TableTemplate(template.key, template.aliases, chosen)
    return DatabaseInstance(RelationalSchema(tables), rows), columns_by_table


def _property_value(template: PropertyTemplate, rng: random.Random) -> Value:
    if template.numeric:
        return rng.randint(template.low, template.high)
    return rng.choice(template.words)


def sample_knowledge_base(cfg: GenConfig, rng: random.Random) -> Tuple[KnowledgeBase, KbTemplate]:
    domain = rng.choice(KB_DOMAINS)
    n_nodes = rng.randint(cfg.min_nodes, cfg.max_nodes)
    nodes: List[Node] = []
    classes: Dict[str, List[str]] = {c.key: [] for c in domain.classes}
    used: Counter = Counter()
    # every class gets at least one node so each relation can be instantiated
    order = list(domain.classes) + [rng.choice(domain.classes) for _ in range(max(0, n_nodes - len(domain.classes)))]
    for i, entity_class in enumerate(order):
        base = rng.choice(entity_class.labels)
        used[base] += 1
        label = base if used[base] == 1 else f"{base}_{used[base]}"
        node_id = f"n{i}"
        properties = tuple(
            (p.name, _property_value(p, rng)) for p in entity_class.properties if rng.random() < 0.8
        )
        nodes.append(Node(node_id, label, properties))
        classes[entity_class.key].append(node_id)

    n_edges = rng.randint(cfg.min_edges, cfg.max_edges)
    edges: List[Edge] = []
    seen: set[Tuple[str, str, str]] = set()
    for _ in range(n_edges * 4):
        if len(edges) >= n_edges:
            break
        relation = rng.choice(domain.relations)
        source = rng.choice(classes[relation.source])
        target = rng.choice(classes[relation.target])
        key = (source, relation.label, target)
        if key in seen:
            continue
        seen.add(key)
        edges.append(Edge(f"e{len(edges)}", source, relation.label, target))
    return KnowledgeBase(nodes, edges), domain


# === query sampling ===

@dataclass
class _Sample:
    query: Query
    utterance: List[str]


def _sql_value_for(rows: Sequence[Sequence[Value]], index: int, rng: random.Random) -> Value:
    return rng.choice([row[index] for row in rows])


def sample_sql(
    db: DatabaseInstance,
    templates: Dict[str, TableTemplate],
    cfg: GenConfig,
    rng: random.Random,
    phrasing: _Phrasing,
) -> _Sample:
    table = rng.choice(db.schema.tables)
    template = templates[table.name]
    aliases = {c.name: c.aliases for c in template.columns}
    numeric = [a.name for a in table.attributes if a.type == "number"]
    aggregator: Aggregator = rng.choice(["none", "none", "count", "max", "min", "sum", "avg"])  # type: ignore[assignment]
    if aggregator in ("max", "min", "sum", "avg") and not numeric:
        aggregator = "count"
    column = rng.choice(numeric if aggregator in ("max", "min", "sum", "avg") else table.column_names)

    rows = db.rows[table.name]
    n_conditions = rng.randint(0, min(cfg.max_conditions, len(table.attributes) - 1))
    condition_columns = rng.sample([a for a in table.attributes if a.name != column], n_conditions)
    conditions = []
    for attribute in condition_columns:
        op: ComparisonOp = "=" if attribute.type == "text" else rng.choice(["=", ">", "<"])  # type: ignore[assignment]
        value = _sql_value_for(rows, table.column_index(attribute.name), rng)  # type: ignore[arg-type]
        conditions.append(Condition(attribute.name, op, value))
    query = SqlQuery(aggregator, column, table.name, tuple(conditions))

    col_text = phrasing.mention(column, aliases[column])
    table_text = phrasing.mention(table.name, template.aliases)
    condition_texts = [
        phrasing.pick(CONDITION_TEMPLATES[c.op]).format(
            col=phrasing.mention(c.column, aliases[c.column]), value=render_value(c.value)
        )
        for c in conditions
    ]
    if aggregator == "none" and len(conditions) == 1 and not phrasing.minimal and rng.random() < 0.5:
        text = SQL_FILTERED_NONE.format(col=col_text, table=table_text, cond=condition_texts[0])
    else:
        text = phrasing.pick(SQL_TEMPLATES[aggregator]).format(col=col_text, table=table_text)
        if condition_texts:
            text += " " + phrasing.pick(CONDITION_INTROS) + " " + " and ".join(condition_texts)
    return _Sample(query, _words(text))


def _edges_with(kb: KnowledgeBase) -> List[Tuple[str, str, str]]:
    return [(kb.nodes[e.source].label, e.label, kb.nodes[e.target].label) for e in kb.edges]


def _property_facts(kb: KnowledgeBase) -> List[Tuple[str, str, Value]]:
    return [(n.label, name, value) for n in kb.nodes.values() for name, value in n.properties]


def sample_sparql(
    kb: KnowledgeBase,
    domain: KbTemplate,
    rng: random.Random,
    phrasing: _Phrasing,
) -> _Sample:
    edges = _edges_with(kb)
    facts = _property_facts(kb)
    rel_aliases = {r.label: r.aliases for r in domain.relations}
    prop_aliases = {p.name: p.aliases for c in domain.classes for p in c.properties}
    x, y = Var("x"), Var("y")

    shapes = list(SPARQL_SHAPES)
    rng.shuffle(shapes)
    for shape in shapes:
        if shape in ("subject_of", "object_of") and edges:
            subj, rel, obj = rng.choice(edges)
            rel_text = phrasing.mention(rel, rel_aliases.get(rel, []))
            if shape == "subject_of":
                query = SparqlQuery((x,), (TriplePattern(x, rel, obj),))
            else:
                query = SparqlQuery((x,), (TriplePattern(subj, rel, x),))
            text = phrasing.pick(SPARQL_TEMPLATES[shape]).format(subj=subj, rel=rel_text, obj=obj)
            return _Sample(query, _words(text))
        if shape in ("property_of", "with_value") and facts:
            subj, prop, value = rng.choice(facts)
            prop_text = phrasing.mention(prop, prop_aliases.get(prop, []))
            if shape == "property_of":
                query = SparqlQuery((x,), (TriplePattern(subj, prop, x),))
            else:
                query = SparqlQuery((x,), (TriplePattern(x, prop, value),))
            text = phrasing.pick(SPARQL_TEMPLATES[shape]).format(
                subj=subj, prop=prop_text, value=render_value(value)
            )
            return _Sample(query, _words(text))
        numeric = [f for f in facts if not isinstance(f[2], str)]
        if shape == "filtered" and numeric:
            _, prop, value = rng.choice(numeric)
            op: ComparisonOp = rng.choice([">", "<", "="])  # type: ignore[assignment]
            query = SparqlQuery((x,), (TriplePattern(x, prop, y),), (Filter(y, op, value),))
            text = phrasing.pick(SPARQL_TEMPLATES[shape]).format(
                prop=phrasing.mention(prop, prop_aliases.get(prop, [])),
                cmp=phrasing.pick(FILTER_WORDS[op]),
                value=render_value(value),
            )
            return _Sample(query, _words(text))
        if shape == "two_hop":
            chains = [(a, b) for a in edges for b in edges if a[2] == b[0]]
            if not chains:
                continue
            (_, rel, _), (_, rel2, obj) = rng.choice(chains)
            query = SparqlQuery(
                (x,), (TriplePattern(x, rel, y), TriplePattern(y, rel2, obj))
            )
            text = phrasing.pick(SPARQL_TEMPLATES[shape]).format(
                rel=phrasing.mention(rel, rel_aliases.get(rel, [])),
                rel2=phrasing.mention(rel2, rel_aliases.get(rel2, [])),
                obj=obj,
            )
            return _Sample(query, _words(text))
    raise SchemaError("knowledge base has no facts to query")


# === corpus generation ===

@dataclass
class _SchemaSlot:
    document: SchemaDocument
    tables: Dict[str, TableTemplate] | None = None
    domain: KbTemplate | None = None


def _build_schemas(cfg: GenConfig) -> Dict[QueryKind, List[_SchemaSlot]]:
    slots: Dict[QueryKind, List[_SchemaSlot]] = {"sql": [], "sparql": []}
    if cfg.kind in ("sql", "mixed"):
        for i in range(cfg.db_schemas):
            rng = random.Random(f"{cfg.seed}:schema:db:{i}")
            database, tables = sample_database(cfg, rng)
            document = SchemaDocument(f"db{i:03d}", "db", database=database)
            slots["sql"].append(_SchemaSlot(document, tables=tables))
    if cfg.kind in ("sparql", "mixed"):
        for i in range(cfg.kb_schemas):
            rng = random.Random(f"{cfg.seed}:schema:kb:{i}")
            kb, domain = sample_knowledge_base(cfg, rng)
            document = SchemaDocument(f"kb{i:03d}", "kb", kb=kb)
            slots["sparql"].append(_SchemaSlot(document, domain=domain))
    return slots


def _partition(slots: List[_SchemaSlot], split: Split, heldout: bool) -> List[_SchemaSlot]:
    """Schemas a split may draw from; with held-out schemas each split gets a disjoint share."""

    if not heldout or not slots:
        return slots
    n = len(slots)
    n_dev = max(1, n // 5)
    n_test = max(1, n // 5)
    n_train = n - n_dev - n_test
    if split == "train":
        return slots[:n_train]
    if split == "dev":
        return slots[n_train : n_train + n_dev]
    return slots[n_train + n_dev :]


def _sample_example(
    example_id: int,
    split: Split,
    index: int,
    cfg: GenConfig,
    slots: Dict[QueryKind, List[_SchemaSlot]],
) -> Example:
    rng = random.Random(f"{cfg.seed}:{split}:{index}")
    kind: QueryKind
    if cfg.kind == "mixed":
        kind = "sql" if rng.random() < 0.5 else "sparql"
    else:
        kind = cfg.kind  # type: ignore[assignment]
    pool = _partition(slots[kind], split, cfg.heldout_schemas)
    phrasing = _Phrasing(rng, cfg)
    for _ in range(_MAX_ATTEMPTS):
        slot = rng.choice(pool)
        if kind == "sql":
            assert slot.document.database is not None and slot.tables is not None
            sample = sample_sql(slot.document.database, slot.tables, cfg, rng, phrasing)
        else:
            assert slot.document.kb is not None and slot.domain is not None
            sample = sample_sparql(slot.document.kb, slot.domain, rng, phrasing)
        try:
            execute(sample.query, slot.document)
        except (ExecutionError, SchemaReferenceError) as exc:
            logger.debug("resampling example %d: %s", example_id, exc)
            continue
        main = serialize(sample.query)
        return Example(
            id=example_id,
            utterance=sample.utterance,
            targets=build_supervision_targets(main, slot.document.vocabulary),
            schema_ref=slot.document.ref,
            split=split,
            kind=kind,
            shape=query_shape(sample.query),
        )
    raise CorpusError(f"could not sample an executable query for example {example_id}")


def generate_corpus(cfg: GenConfig) -> Corpus:
    """Deterministic corpus: the same config always yields the same examples and schemas."""

    cfg.validate()
    slots = _build_schemas(cfg)
    corpus = Corpus()
    for kind_slots in slots.values():
        for slot in kind_slots:
            corpus.schemas[slot.document.ref] = slot.document
    next_id = 0
    for split in SPLITS:
        count = getattr(cfg, split)
        examples = []
        for index in range(count):
            examples.append(_sample_example(next_id, split, index, cfg, slots))
            next_id += 1
        corpus.examples[split] = examples
        logger.info("generated %d %s examples", count, split)
    self_check(corpus)
    return corpus


def self_check(corpus: Corpus) -> None:
    """Every target must round-trip, execute, and carry consistent supervision."""

    for example in corpus.all_examples():
        document = corpus.schema_for(example)
        text = " ".join(example.targets.main)
        try:
            query = parse_query(text, example.kind)
            execute(query, document)
        except Exception as exc:
            raise CorpusError(f"example {example.id} fails its self-check: {exc}") from exc
        if serialize(query) != example.targets.main:
            raise CorpusError(f"example {example.id}: serialization is not a fixpoint")
        problems = example.targets.check()
        if problems:
            raise CorpusError(f"example {example.id}: {'; '.join(problems)}")
        reserved = SQL_RESERVED if example.kind == "sql" else SPARQL_RESERVED
        if reserved & set(document.vocabulary.tokens):
            raise CorpusError(f"schema {document.ref} uses a reserved word as an identifier")


def corpus_statistics(corpus: Corpus, cfg: GenConfig | None = None) -> Dict[str, Any]:
    """Per-split counts, anchors-per-example summary, and the query-shape histogram."""

    anchor_counts = []
    empty = 0
    shapes: Counter = Counter()
    for example in corpus.all_examples():
        document = corpus.schema_for(example)
        count = len(extract_anchors(example.targets.main, document.vocabulary))
        anchor_counts.append(count)
        empty += count == 0
        shapes[example.shape] += 1
    total = len(anchor_counts)
    stats: Dict[str, Any] = {
        "examples": {split: len(corpus.split(split)) for split in SPLITS},
        "schemas": len(corpus.schemas),
        "anchors_per_example": {
            "mean": round(sum(anchor_counts) / total, 6) if total else 0.0,
            "min": min(anchor_counts) if total else 0,
            "max": max(anchor_counts) if total else 0,
        },
        "empty_anchor_examples": empty,
        "shapes": dict(sorted(shapes.items())),
    }
    if cfg is not None:
        stats["config"] = asdict(cfg)
    if total and empty / total > 0.01:
        logger.warning("%d of %d examples have no anchors", empty, total)
    return stats


def write_generated_corpus(corpus: Corpus, out_dir: Path, cfg: GenConfig | None = None) -> Dict[str, Any]:
    write_corpus(corpus, out_dir)
    stats = corpus_statistics(corpus, cfg)
    (out_dir / "stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return stats
