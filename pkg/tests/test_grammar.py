import random
from fractions import Fraction

import pytest
from scipy.stats import chisquare

from qrfuzz.builtin_grammars import load_builtin_query_grammar, load_builtin_response_grammar
from qrfuzz.grammar import (
    GrammarError, SampleContext, alternative_frequencies, parse_grammar, rule_table, sample, validate,
)
from qrfuzz.wire import name


def test_builtin_grammars_validate_clean():
    assert validate(load_builtin_query_grammar()) == []
    assert validate(load_builtin_response_grammar()) == []


def test_opcode_probabilities_are_exact_fractions():
    table = rule_table(load_builtin_query_grammar())
    assert table["OPCODE"]["QUERY"] == Fraction(4, 5)
    assert sum(table["OPCODE"].values()) == 1
    assert table["RCODE"]["NOERROR"] == Fraction(4, 5)


def test_unweighted_alternatives_share_remaining_mass():
    g = parse_grammar("<start> ::= <x>\n<x> ::= a | b | c[.5]\n")
    p = g.rules["x"].probabilities()
    assert p == {"a": Fraction(1, 4), "b": Fraction(1, 4), "c": Fraction(1, 2)}


def test_validate_reports_bad_sum_and_dangling():
    g = parse_grammar("<start> ::= <x><y>\n<x> ::= a[.3] | b[.3]\n<z> ::= q\n")
    kinds = {v.kind for v in validate(g)}
    assert {"probability-sum", "dangling", "unreachable"} <= kinds


def test_same_seed_same_derivation():
    g = load_builtin_query_grammar()
    ctx = SampleContext(99, name("test-fwd.example.com"))
    a, b = sample(g, ctx), sample(g, ctx)
    assert a.values == b.values and a.choices == b.choices


def test_left_recursion_is_bounded():
    g = parse_grammar("<start> ::= <start> a\n")
    with pytest.raises(GrammarError):
        sample(g, SampleContext(0))


def test_opcode_frequencies_fit_declared_distribution():
    g = load_builtin_query_grammar()
    rng = random.Random(5)
    ctx = SampleContext(5, name("test-fwd.example.com"))
    ds = [sample(g, ctx, "OPCODE", rng=rng) for _ in range(20_000)]
    freq = alternative_frequencies(g, "OPCODE", ds)
    probs = g.rules["OPCODE"].probabilities()
    labels = list(probs)
    observed = [freq[k] for k in labels]
    expected = [float(probs[k]) * len(ds) for k in labels]
    assert chisquare(observed, expected).pvalue > 0.001
    assert 0.78 <= freq["QUERY"] / len(ds) <= 0.82


def test_generated_qnames_stay_under_base_and_fit():
    g = load_builtin_query_grammar()
    base = name("test-fwd.example.com")
    rng = random.Random(1)
    for i in range(2000):
        d = sample(g, SampleContext(i, base), "QNAME", rng=rng)
        q = d["QNAME"]
        assert q.is_subdomain_of(base)
        assert q.wire_length <= 255


def test_record_rdlength_classes():
    g = load_builtin_response_grammar()
    base = name("test-fwd.example.com")
    ctx = SampleContext(3, base, base.prepend(b"www"), 1)
    rng = random.Random(3)
    for _ in range(500):
        d = sample(g, ctx, "Record", rng=rng)
        label = g.rules["RDLENGTH"].alternatives[d.choices["RDLENGTH"]].label
        n, ln = d["RDLENGTH"], len(d["RDATA"])
        if label.startswith("(length"):
            assert n == ln
        elif "2*length" in label:
            assert ln <= n <= 2 * ln
        else:
            assert 0 <= n <= ln


def test_single_alternative_always_drawn():
    g = parse_grammar("<start> ::= <x>\n<x> ::= only[1.0]\n")
    rng = random.Random(0)
    assert {sample(g, SampleContext(0), rng=rng)["x"] for _ in range(100)} == {"only"}


def test_listing_probabilities_pinned():
    q = rule_table(load_builtin_query_grammar())
    assert q["OPCODE"] == {"QUERY": Fraction(80, 100), **{k: Fraction(4, 100) for k in
                           ("IQUERY", "STATUS", "NOTIFY", "UPDATE", "DSO")}}
    errors = [k for k in q["RCODE"] if k != "NOERROR"]
    assert len(errors) == 20 and all(q["RCODE"][k] == Fraction(1, 100) for k in errors)
    assert list(q["QNAME"].values()) == [Fraction(2, 5), Fraction(2, 5), Fraction(1, 10), Fraction(1, 10)]
    r = rule_table(load_builtin_response_grammar())
    assert r["TTL"] == {"60": 1}
    assert list(r["RDLENGTH"].values()) == [Fraction(9, 10), Fraction(1, 20), Fraction(1, 20)]
    assert set(r["NAME"].values()) == {Fraction(1, 5)} and len(r["NAME"]) == 5


def test_start_without_rule_is_dangling():
    g = parse_grammar("<x> ::= a\n", start="missing")
    assert any(v.kind == "dangling" and v.rule == "missing" for v in validate(g))


def test_sum_095_names_rule():
    g = parse_grammar("<start> ::= <x>\n<x> ::= a[.5] | b[.45]\n")
    (v,) = validate(g)
    assert v.kind == "probability-sum" and v.rule == "x"
