import random
from itertools import product

import pytest

from anchorparse.errors import ExecutionError, SchemaReferenceError
from anchorparse.executor import ResultSet, compare, execute, execute_sparql, execute_sql, result_equal
from anchorparse.logical_form import (
    Condition,
    SparqlQuery,
    SqlQuery,
    TriplePattern,
    Var,
    parse_sparql,
    parse_sql,
)
from anchorparse.schema import Attribute, DatabaseInstance, Edge, KnowledgeBase, Node, RelationalSchema, TableSchema


class TestSql:
    def test_filter_and_project(self, company_db):
        result = execute(parse_sql("select name from company where founded > 1930"), company_db)
        assert result_equal(result, ResultSet(("name",), (("saab",),)))

    def test_count_over_empty_table(self, company_schema):
        db = DatabaseInstance(company_schema, {})
        result = execute_sql(SqlQuery("count", "name", "company"), db)
        assert result.rows == ((0,),)

    def test_empty_selection_aggregates_to_null(self, company_db):
        query = parse_sql("select avg ( founded ) from company where founded > 3000")
        assert execute(query, company_db).rows == ((None,),)

    def test_unknown_column(self, company_db):
        with pytest.raises(SchemaReferenceError) as info:
            execute(parse_sql("select ceo from company"), company_db)
        assert info.value.identifier == "ceo"

    def test_sum_over_text(self, company_db):
        with pytest.raises(ExecutionError):
            execute(parse_sql("select sum ( name ) from company"), company_db)

    def test_typed_comparison_never_crosses_types(self, company_db):
        assert execute(parse_sql("select name from company where founded = '1945'"), company_db).rows == ()
        assert not compare("1945", "=", 1945)

    def test_condition_order_does_not_matter(self, company_db):
        a = execute(parse_sql("select name from company where founded > 1900 and name = 'saab'"), company_db)
        b = execute(parse_sql("select name from company where name = 'saab' and founded > 1900"), company_db)
        assert result_equal(a, b)

    def test_executor_is_pure(self, company_db):
        query = parse_sql("select max ( founded ) from company")
        assert execute(query, company_db) == execute(query, company_db)


class TestResultEqual:
    def test_permuted_rows(self):
        assert result_equal(ResultSet(("a",), ((1,), (2,))), ResultSet(("a",), ((2,), (1,))))

    def test_multiplicity(self):
        assert not result_equal(ResultSet(("a",), ((1,), (1,))), ResultSet(("a",), ((1,),)))

    def test_number_versus_text(self):
        assert not result_equal(ResultSet(("a",), ((1990,),)), ResultSet(("a",), (("1990",),)))

    def test_integral_float_equals_int(self):
        assert result_equal(ResultSet(("a",), ((1990.0,),)), ResultSet(("a",), ((1990,),)))


class TestSparql:
    def test_single_pattern(self, car_kb):
        result = execute(parse_sparql("select ?x where { ?x produced_by saab }"), car_kb)
        assert result.rows == (("car1",),)

    def test_unsatisfiable_pattern(self, car_kb):
        result = execute(parse_sparql("select ?x where { saab produced_by ?x }"), car_kb)
        assert result.rows == ()

    def test_unknown_relation(self, car_kb):
        with pytest.raises(SchemaReferenceError):
            execute(parse_sparql("select ?x where { ?x product saab }"), car_kb)

    def test_join_with_filter(self, car_kb):
        query = parse_sparql("select ?x where { ?x produced_by ?y . ?y founded ?z filter ( ?z > 1930 ) }")
        assert execute(query, car_kb).rows == (("car1",),)

    def test_text_property_value(self, car_kb):
        result = execute(parse_sparql("select ?x where { ?x country sweden }"), car_kb)
        assert result.rows == (("saab",),)


# === oracle equivalence ===

def naive_sql(query: SqlQuery, db: DatabaseInstance):
    table = db.schema.table(query.table)
    names = table.column_names
    kept = []
    for row in db.rows[table.name]:
        ok = True
        for cond in query.conditions:
            cell = row[names.index(cond.column)]
            if isinstance(cell, str) != isinstance(cond.value, str):
                ok = False
            elif cond.op == "=":
                ok = ok and cell == cond.value
            elif cond.op == ">":
                ok = ok and cell > cond.value
            else:
                ok = ok and cell < cond.value
        if ok:
            kept.append(row[names.index(query.column)])
    if query.aggregator == "none":
        return sorted(map(repr, kept))
    if query.aggregator == "count":
        return [len(kept)]
    if not kept:
        return [None]
    return [{"max": max, "min": min, "sum": sum, "avg": lambda v: sum(v) / len(v)}[query.aggregator](kept)]


def random_db(rng: random.Random) -> DatabaseInstance:
    schema = RelationalSchema([TableSchema("t", (Attribute("a", "number"), Attribute("b", "number"), Attribute("c", "text")))])
    rows = [[rng.randint(0, 9), rng.randint(0, 9), rng.choice("xyz")] for _ in range(rng.randint(0, 12))]
    return DatabaseInstance(schema, {"t": rows})


def random_sql(rng: random.Random) -> SqlQuery:
    conditions = []
    for _ in range(rng.randint(0, 3)):
        column = rng.choice("abc")
        value = rng.choice("xyz") if column == "c" else rng.randint(0, 9)
        conditions.append(Condition(column, rng.choice("=><"), value))
    aggregator = rng.choice(["none", "count", "max", "min", "sum", "avg"])
    column = rng.choice("ab") if aggregator in ("sum", "avg") else rng.choice("abc")
    return SqlQuery(aggregator, column, "t", tuple(conditions))


def test_sql_matches_row_scan_oracle():
    rng = random.Random(11)
    for _ in range(500):
        db, query = random_db(rng), random_sql(rng)
        result = execute_sql(query, db)
        expected = naive_sql(query, db)
        if query.aggregator == "none":
            assert sorted(repr(r[0]) for r in result.rows) == expected
        elif query.aggregator == "avg" and expected[0] is not None:
            assert result.rows[0][0] == pytest.approx(expected[0])
        else:
            assert [r[0] for r in result.rows] == expected


def random_kb(rng: random.Random) -> KnowledgeBase:
    nodes = [Node(f"n{i}", f"e{i}", (("rank", rng.randint(0, 5)),)) for i in range(rng.randint(2, 8))]
    edges = [
        Edge(f"r{j}", rng.choice(nodes).id, rng.choice(["knows", "likes"]), rng.choice(nodes).id)
        for j in range(rng.randint(1, 20))
    ]
    return KnowledgeBase(nodes, edges)


def nested_loop(query: SparqlQuery, kb: KnowledgeBase):
    facts = list(kb.triples)
    bindings = []
    for combo in product(facts, repeat=len(query.patterns)):
        binding = {}
        ok = True
        for pattern, fact in zip(query.patterns, combo):
            for term, value in zip((pattern.subject, pattern.predicate, pattern.object), fact):
                if isinstance(term, Var):
                    if term.name in binding and binding[term.name] != value:
                        ok = False
                    binding.setdefault(term.name, value)
                elif term != value or isinstance(term, str) != isinstance(value, str):
                    ok = False
        if ok:
            for f in query.filters:
                ok = ok and compare(binding[f.variable.name], f.op, f.value)
        if ok:
            bindings.append(tuple(binding[v.name] for v in query.variables))
    return sorted(bindings, key=repr)


def random_sparql(rng: random.Random, kb: KnowledgeBase) -> SparqlQuery:
    labels = [n.label for n in kb.nodes.values()]
    first = TriplePattern(Var("x"), rng.choice(sorted(kb.relation_labels)), Var("y"))
    patterns = [first]
    if rng.random() < 0.6:
        patterns.append(TriplePattern(Var("y"), rng.choice(sorted(kb.relation_labels)), Var("z")))
    elif rng.random() < 0.5:
        patterns[0] = TriplePattern(Var("x"), first.predicate, rng.choice(labels))
        patterns.append(TriplePattern(Var("x"), "rank", Var("y")))
    filters = ()
    if patterns[-1].predicate == "rank" and rng.random() < 0.5:
        from anchorparse.logical_form import Filter

        filters = (Filter(Var("y"), rng.choice("=><"), rng.randint(0, 5)),)
    return SparqlQuery((Var("x"),), tuple(patterns), filters)


def test_sparql_matches_nested_loop_oracle():
    rng = random.Random(5)
    for _ in range(500):
        kb = random_kb(rng)
        query = random_sparql(rng, kb)
        result = execute_sparql(query, kb)
        assert sorted(result.rows, key=repr) == nested_loop(query, kb)
