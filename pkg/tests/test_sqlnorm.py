import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convsql.sqlnorm import (
    GoldUnparseable,
    MultipleStatements,
    ParseError,
    decompose_clauses,
    exact_match,
    has_outer_order_by,
    normalize,
    parse,
    tokenize,
)
from convsql.sqlnorm.tokenizer import NAME, NUMBER, STRING

# a spread of parseable queries reused by idempotence/fuzzing checks
FIXTURE_QUERIES = [
    "SELECT Name FROM airlines WHERE Abbreviation = 'DL'",
    "SELECT count(*) FROM flights",
    "SELECT DISTINCT City FROM airports",
    "SELECT T1.FlightNo FROM flights AS T1 JOIN airlines AS T2 ON T1.Airline = T2.uid WHERE T2.Name = 'Delta Airlines'",
    "SELECT SourceAirport, count(*) FROM flights GROUP BY SourceAirport HAVING count(*) > 2",
    "SELECT AirportName FROM airports WHERE Country = 'United States' AND City = 'Boston'",
    "SELECT FlightNo FROM flights WHERE Price BETWEEN 100 AND 400",
    "SELECT FlightNo FROM flights WHERE SourceAirport IN ('APG', 'BOS')",
    "SELECT FlightNo FROM flights ORDER BY Price DESC LIMIT 3",
    "SELECT Name FROM airlines WHERE uid IN (SELECT Airline FROM flights WHERE SourceAirport = 'APG')",
    "SELECT City FROM airports EXCEPT SELECT City FROM airports WHERE AirportCode = 'APG'",
    "SELECT avg(Price) FROM flights WHERE DestAirport = 'ATL' OR DestAirport = 'LAX'",
    "SELECT * FROM (SELECT FlightNo, Price FROM flights WHERE Price > 200) AS pricey WHERE pricey.Price < 600",
    "SELECT a.City FROM airports a WHERE NOT a.AirportCode = 'JFK'",
    "SELECT Name FROM airlines WHERE Abbreviation LIKE 'D%'",
    "SELECT FlightNo FROM flights WHERE DestAirport IS NOT NULL",
    "SELECT count(DISTINCT Airline) FROM flights WHERE SourceAirport = 'APG'",
    "SELECT Name, Country FROM airlines UNION SELECT AirportName, Country FROM airports",
    "SELECT FlightNo FROM flights WHERE Price > 150 AND SourceAirport = 'APG' AND DestAirport = 'BOS'",
    "SELECT max(Price) - min(Price) FROM flights",
]


def test_value_masking_equates_literals(flights_schema):
    a = normalize("SELECT Name FROM airlines WHERE Abbreviation = 'DL'", flights_schema)
    b = normalize("SELECT Name FROM airlines WHERE Abbreviation = 'UA'", flights_schema)
    assert a == b
    assert a.sql == b.sql


@pytest.mark.parametrize("sql", FIXTURE_QUERIES)
def test_normalize_idempotent(sql, flights_schema):
    once = normalize(sql, flights_schema)
    twice = normalize(once.sql, flights_schema)
    assert once == twice


def test_alias_resolution():
    nq = normalize("SELECT a FROM t1 AS x JOIN t2 AS y ON x.id = y.id")
    assert "t1.id" in nq.sql and "t2.id" in nq.sql
    assert " x" not in nq.sql and " y" not in nq.sql
    cs = decompose_clauses(nq)
    assert cs.from_sources == frozenset({"t1", "t2"})
    assert cs.join_conditions == frozenset({("t1.id", "t2.id")})


def test_schema_disambiguation(flights_schema):
    plain = normalize(
        "SELECT FlightNo FROM flights JOIN airlines ON flights.Airline = airlines.uid "
        "WHERE Name = 'Delta Airlines'", flights_schema)
    qualified = normalize(
        "SELECT flights.FlightNo FROM flights JOIN airlines ON flights.Airline = airlines.uid "
        "WHERE airlines.Name = 'Delta Airlines'", flights_schema)
    assert plain == qualified


def test_decompose_count_star(flights_schema):
    cs = decompose_clauses(normalize("SELECT count(*) FROM flights", flights_schema))
    assert cs.select_items == frozenset({("count(*)", True, False)})
    assert cs.from_sources == frozenset({"flights"})
    assert cs.join_conditions == frozenset()
    assert cs.where_predicates == frozenset()
    assert cs.group_by == frozenset() and cs.having == frozenset()
    assert cs.order_by == () and not cs.limit_present
    assert cs.set_ops == frozenset() and cs.nested_query_count == 0


def test_conjunct_reordering_same_clauses():
    a = decompose_clauses(normalize("SELECT a FROM t WHERE a = 1 AND b = 2"))
    b = decompose_clauses(normalize("SELECT a FROM t WHERE b = 9 AND a = 7"))
    assert a == b


def test_bare_select_has_no_sources():
    assert decompose_clauses(normalize("SELECT 1")).from_sources == frozenset()


def test_implicit_join_equals_explicit(flights_schema):
    explicit = "SELECT FlightNo FROM flights JOIN airlines ON flights.Airline = airlines.uid"
    implicit = "SELECT FlightNo FROM flights, airlines WHERE flights.Airline = airlines.uid"
    assert exact_match(implicit, explicit, flights_schema)


def test_comparison_flip_and_swap():
    assert exact_match("SELECT a FROM t WHERE a > 5", "SELECT a FROM t WHERE 5 < a")
    assert exact_match("SELECT a FROM t WHERE 'x' = b", "SELECT a FROM t WHERE b = 'y'")
    assert not exact_match("SELECT a FROM t WHERE a > 5", "SELECT a FROM t WHERE a >= 5")


def test_order_by_and_limit_semantics(flights_schema):
    gold = "SELECT FlightNo FROM flights ORDER BY Price ASC LIMIT 5"
    assert exact_match("SELECT FlightNo FROM flights ORDER BY Price LIMIT 10",
                       gold, flights_schema)
    assert not exact_match("SELECT FlightNo FROM flights ORDER BY Price DESC LIMIT 5",
                           gold, flights_schema)
    assert not exact_match("SELECT FlightNo FROM flights ORDER BY Price",
                           gold, flights_schema)  # limit presence differs


def test_in_list_arity_masked():
    assert exact_match("SELECT a FROM t WHERE b IN (1, 2, 3)",
                       "SELECT a FROM t WHERE b IN (9)")


def test_set_ops_compared_with_arm_content():
    a = "SELECT a FROM t UNION SELECT b FROM u"
    assert exact_match(a, "SELECT a FROM t UNION ALL SELECT b FROM u")
    assert not exact_match(a, "SELECT a FROM t UNION SELECT c FROM v")
    assert not exact_match(a, "SELECT a FROM t INTERSECT SELECT b FROM u")


def test_nested_query_count():
    cs = decompose_clauses(normalize(
        "SELECT a FROM t WHERE b IN (SELECT c FROM u WHERE d IN (SELECT e FROM v))"))
    assert cs.nested_query_count == 2
    cs = decompose_clauses(normalize("SELECT a FROM t UNION SELECT b FROM u"))
    assert cs.nested_query_count == 1


def test_exact_match_reflexive_and_symmetric(flights_schema):
    for sql in FIXTURE_QUERIES:
        assert exact_match(sql, sql, flights_schema)
    a, b = FIXTURE_QUERIES[0], "SELECT Name FROM airlines WHERE Abbreviation = 'ZZ'"
    assert exact_match(a, b, flights_schema) == exact_match(b, a, flights_schema)


def test_unparseable_pred_is_false(flights_schema):
    assert not exact_match("SELEC oops FROM", FIXTURE_QUERIES[0], flights_schema)


def test_unparseable_gold_raises(flights_schema):
    with pytest.raises(GoldUnparseable):
        exact_match(FIXTURE_QUERIES[0], "DROP TABLE flights", flights_schema)


def test_multiple_statements_rejected():
    with pytest.raises(MultipleStatements):
        parse("SELECT 1; SELECT 2")
    parse("SELECT 1;")  # trailing semicolon fine


def test_missing_clause_is_mismatch(flights_schema):
    assert not exact_match("SELECT Name FROM airlines",
                           "SELECT Name FROM airlines WHERE Abbreviation = 'DL'",
                           flights_schema)


def test_select_alias_substitution_in_order_by():
    a = "SELECT SourceAirport, count(*) AS cnt FROM flights GROUP BY SourceAirport ORDER BY cnt"
    b = "SELECT SourceAirport, count(*) FROM flights GROUP BY SourceAirport ORDER BY count(*)"
    assert exact_match(a, b)


def test_has_outer_order_by():
    assert has_outer_order_by("SELECT a FROM t ORDER BY a")
    assert not has_outer_order_by("SELECT a FROM t")
    assert not has_outer_order_by(
        "SELECT a FROM (SELECT a FROM t ORDER BY a LIMIT 3) AS s")
    assert not has_outer_order_by("SELEC invalid ((")


def test_parse_error_reports_position():
    with pytest.raises(ParseError) as exc:
        parse("SELECT FROM t")
    assert exc.value.position >= 0


# ---------------------------------------------------------------------------
# fuzzers


def fuzz_literals(sql: str, rng: random.Random) -> str:
    """Replace every literal with a random one of the same syntactic class."""
    parts = []
    for tok in tokenize(sql):
        if tok.kind == STRING:
            parts.append("'" + "".join(rng.choice("abcwxyz") for _ in range(5)) + "'")
        elif tok.kind == NUMBER:
            if "." in tok.text or "e" in tok.text.lower():
                parts.append(f"{rng.uniform(0, 999):.3f}")
            else:
                parts.append(str(rng.randint(0, 9999)))
        else:
            parts.append(tok.text if tok.kind != NAME else tok.text)
    return " ".join(p for p in parts if p != "")


def fuzz_case_and_whitespace(sql: str, rng: random.Random) -> str:
    parts = []
    for tok in tokenize(sql):
        text = tok.text
        if tok.kind == NAME:
            text = "".join(c.upper() if rng.random() < 0.5 else c.lower() for c in text)
        elif tok.kind == STRING:
            text = "'" + text.replace("'", "''") + "'"
        parts.append(text)
        parts.append(" " * rng.randint(1, 3))
    return "".join(parts)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, len(FIXTURE_QUERIES) - 1))
def test_literal_fuzz_preserves_clause_set(seed, qi):
    rng = random.Random(seed)
    original = FIXTURE_QUERIES[qi]
    fuzzed = fuzz_literals(original, rng)
    assert decompose_clauses(normalize(fuzzed)) == decompose_clauses(normalize(original))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, len(FIXTURE_QUERIES) - 1))
def test_case_whitespace_fuzz_preserves_verdict(seed, qi):
    rng = random.Random(seed)
    original = FIXTURE_QUERIES[qi]
    fuzzed = fuzz_case_and_whitespace(original, rng)
    assert exact_match(fuzzed, original)
    other = FIXTURE_QUERIES[(qi + 1) % len(FIXTURE_QUERIES)]
    assert exact_match(fuzzed, other) == exact_match(original, other)
