import json
import math
import random
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from qrfuzz.builtin_grammars import deep_subdomain, load_builtin_query_grammar, max_subdomain_depth
from qrfuzz.generator import (
    MODES, SPECIAL_BYTES, ConfigurationError, Mutation, MutationConfig, apply_mutation, case_from_record,
    case_to_record, generate_case, generate_sequence, mutate_bytes, replay_case_mutations, synthesize_record,
)
from qrfuzz.grammar import SampleContext, sample
from qrfuzz.wire import decode_message, name

BASE = "test-fwd.example.com"


def test_same_seed_identical_case():
    a = generate_case("forward-only", BASE, 1234, 0)
    b = generate_case("forward-only", BASE, 1234, 0)
    assert a == b
    assert a.query_octets == b.query_octets


def test_different_seeds_differ():
    octets = {generate_case("forward-only", BASE, s).query_octets for s in range(50)}
    assert len(octets) > 45


def test_unknown_mode_rejected():
    with pytest.raises(ConfigurationError):
        generate_case("stub-only", BASE, 1)


def test_bad_mutation_probability_rejected():
    with pytest.raises(ConfigurationError):
        MutationConfig(1.5)


def test_probability_zero_never_mutates():
    cfg = MutationConfig(0.0)
    assert not any(generate_case("forward-only", BASE, s, cfg=cfg).mutated for s in range(300))


def test_probability_one_always_mutates():
    cfg = MutationConfig(1.0)
    cases = [generate_case("forward-only", BASE, s, cfg=cfg) for s in range(300)]
    assert all(c.mutated for c in cases)
    targets = {c.provenance["mutation_target"] for c in cases}
    assert targets == {"query", "response", "both"}


def test_unmutated_query_is_structural():
    for s in range(200):
        c = generate_case("forward-only", BASE, s, cfg=MutationConfig(0.0))
        q = decode_message(c.query_octets)
        assert q.well_formed and q.qdcount == 1 and q.flags.qr == 0
        assert q.questions[0].qname.is_subdomain_of(name(BASE))


def test_template_render_copies_txid_and_question():
    c = generate_case("forward-only", BASE, 7, cfg=MutationConfig(0.0))
    q = decode_message(c.query_octets)
    qbytes = c.query_octets[12:]
    out = c.response_template.render(0xBEEF, qbytes, 1)
    assert out[:2] == b"\xbe\xef" and out[2] & 0x80
    assert out[4:6] == b"\x00\x01"
    assert out[12:12 + len(qbytes)] == qbytes
    assert q.qdcount == 1


def test_mutation_log_replays_exactly():
    cfg = MutationConfig(1.0)
    for s in range(200):
        c = generate_case("forward-only", BASE, s, cfg=cfg)
        q_octets, r_segs = replay_case_mutations(c)
        assert q_octets == c.query_octets
        assert r_segs == c.response_template.segments()


@pytest.mark.parametrize("op", ["add", "delete", "replace"])
def test_mutate_bytes_single_operator(op):
    data = b"\x01\x02\x03\x04"
    cfg = MutationConfig(operators=(op,))
    out, m = mutate_bytes(data, 42, cfg)
    assert m.operator == op
    assert len(out) - len(data) == {"add": 1, "delete": -1, "replace": 0}[op]
    if op != "delete":
        assert m.data[0] in SPECIAL_BYTES


def test_empty_field_delete_is_skipped():
    out, m = mutate_bytes(b"", 1, MutationConfig(operators=("delete",)))
    assert out == b"" and m.skipped


@given(st.binary(max_size=64), st.integers(0, 2**32))
def test_mutate_changes_at_most_one_position(data, seed):
    out, m = mutate_bytes(data, seed)
    assert abs(len(out) - len(data)) <= 1
    assert apply_mutation(data, m) == out
    assert Mutation.from_record(m.to_record()) == m


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(MODES))
def test_persistence_round_trip(seed, mode):
    c = generate_case(mode, "test-x.example.com", seed, cfg=MutationConfig(0.5))
    rec = json.loads(json.dumps(case_to_record(c)))
    back = case_from_record(rec)
    assert back.query_octets == c.query_octets
    assert back.response_template == c.response_template
    assert back.mutation_log == c.mutation_log


def test_sequence_first_step_matches_single_case():
    seq = generate_sequence("forward-only", BASE, 99, 3)
    assert len(seq) == 3
    assert seq[0] == generate_case("forward-only", BASE, 99)
    assert len({c.query_octets for c in seq}) == 3


def test_section_bounds_and_counts_on_unmutated_cases():
    for s in range(2000):
        c = generate_case("forward-only", BASE, s)
        if c.mutated:
            continue
        t = c.response_template
        for sec in (t.answers, t.authorities, t.additionals):
            assert 0 <= len(sec) <= 5
        assert t.counts_consistent


def test_replace_at_offset_zero():
    assert apply_mutation(b"abc", Mutation("replace", "", 0, b"\x00")) == b"\x00bc"


def test_mutate_same_seed_same_output():
    assert mutate_bytes(b"example", 77) == mutate_bytes(b"example", 77)


def test_add_operator_special_byte_uniformity():
    cfg = MutationConfig(operators=("add",))
    n = 100_000
    counts = Counter(mutate_bytes(b"xy", s, cfg)[1].data[0] for s in range(n))
    p = 1 / len(SPECIAL_BYTES)
    sigma = math.sqrt(n * p * (1 - p))
    assert set(counts) == set(SPECIAL_BYTES)
    assert all(abs(c - n * p) <= 3 * sigma for c in counts.values())


def test_depth_cap_fits_255_octets():
    # 22 octets for test-fwd.example.com, 2 per one-octet label: (255 - 22) // 2
    assert max_subdomain_depth(name(BASE)) == 116
    # from the root, 128 labels would need 257 octets
    assert max_subdomain_depth(name(".")) == 127
    deep = deep_subdomain(random.Random(0), name(BASE), 116)
    assert len(deep.labels) == 116 + 3 and deep.wire_length <= 255
    with pytest.raises(ValueError):
        deep_subdomain(random.Random(0), name(BASE), 117)


def test_base_class_qname_is_exactly_base():
    g = load_builtin_query_grammar()
    rng = random.Random(4)
    for i in range(500):
        d = sample(g, SampleContext(i, name(BASE)), "QNAME", rng=rng)
        if g.rules["QNAME"].alternatives[d.choices["QNAME"]].label == "(base domain)":
            assert d["QNAME"] == name(BASE)


def test_record_class_frequencies():
    base = name(BASE)
    ctx = SampleContext(0, base, base.prepend(b"www"), 16)
    rng = random.Random(8)
    n = 100_000
    names, queried, ttls = Counter(), 0, set()
    for _ in range(n):
        rr, info = synthesize_record(ctx, rng=rng)
        names[info["NAME"]] += 1
        queried += info["TYPE"] == "(TYPE queried)"
        ttls.add(rr.ttl)
    assert len(names) == 5 and all(0.19 <= c / n <= 0.21 for c in names.values())
    assert 0.49 <= queried / n <= 0.51
    assert ttls == {60}
