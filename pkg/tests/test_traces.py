import json
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from qrfuzz.traces import (
    CACHE_PARSERS, CLIENT_TO_RESOLVER, DUMP_WRITERS, NS_TO_RESOLVER, RESOLVER_TO_CLIENT, RESOLVER_TO_NS,
    CacheParseError, CacheRecord, LogEvent, Packet, TraceRecord, UnifiedCache, canonical_rdata,
    load_log_patterns, match_log_events, summarize_traffic, tokenize,
)
from qrfuzz.wire import type_code

FIX = Path(__file__).parent / "fixtures"
FIXTURES = [("bind", "bind_dump.txt", "bind.unified.json"),
            ("unbound", "unbound_dump.txt", "unbound.unified.json"),
            ("powerdns", "powerdns_dump.txt", "powerdns.unified.json"),
            ("technitium", "technitium_dump.json", "technitium.unified.json")]


def parse_fixture(fmt, fname):
    return CACHE_PARSERS[fmt]((FIX / fname).read_text())


@pytest.mark.parametrize("fmt,dump,golden", FIXTURES)
def test_fixture_matches_golden(fmt, dump, golden):
    cache = parse_fixture(fmt, dump)
    assert cache.dumps() == (FIX / golden).read_text()
    assert parse_fixture(fmt, dump).dumps() == cache.dumps()


def test_bind_fixture_root_ns():
    c = parse_fixture("bind", "bind_dump.txt")
    root = c.get(".")
    assert {(r.rtype, r.rdata) for r in root} == {(2, "a.root-servers.net."), (2, "b.root-servers.net.")}
    assert {r.ttl for r in root} == {518399}
    assert c.summary["date"] == "20220708100109"
    assert any("inferred IN" in d for d in c.diagnostics)
    ds = [r for r in c.get("app.") if r.rtype == type_code("DS")]
    assert ds and ds[0].rdata.startswith("23684 8 2 3A5CC8A3")


def test_unbound_fixture_joins_continuations():
    c = parse_fixture("unbound", "unbound_dump.txt")
    assert {r.rdata for r in c.get(".")} == {"j.root-servers.net.", "e.root-servers.net.",
                                             "h.root-servers.net."}
    rr = c.get("ck0pojmg874ljref7efn8430qvit8bsm.com.")
    types = {r.rtype for r in rr}
    assert types == {type_code("NSEC3"), type_code("RRSIG")}
    assert c.summary["message_cache_entries"] == 1


def test_powerdns_fixture_counts_negcache_only():
    c = parse_fixture("powerdns", "powerdns_dump.txt")
    assert len(c) == 5 and len(c.entries) == 4
    assert c.summary["negcache_entries"] == 1


def test_technitium_fixture():
    c = parse_fixture("technitium", "technitium_dump.json")
    assert [r.rdata for r in c.get("com.")] == ["a.gtld-servers.net."]
    (a,) = c.get("stephane.ns.cloudflare.com.")
    assert (a.rdata, a.ttl) == ("108.162.194.112", 86353)


def test_technitium_malformed_raises():
    with pytest.raises(CacheParseError):
        CACHE_PARSERS["technitium"]("{not json")
    with pytest.raises(CacheParseError):
        CACHE_PARSERS["technitium"]("[]")


def test_unbound_without_start_marker_is_empty_with_diagnostic():
    c = CACHE_PARSERS["unbound"]("garbage\n")
    assert len(c) == 0 and c.diagnostics


def test_tokenize_quotes_comments_parens():
    toks, comment = tokenize('a. 60 IN TXT "x ; y" ( 1 2 ) ; tail')
    assert toks == ["a.", "60", "IN", "TXT", '"x ; y"', "(", "1", "2", ")"]
    assert comment == "tail"


@pytest.mark.parametrize("rtype,raw,canon", [
    ("A", "010.0.0.1", "010.0.0.1"),  # unparseable address kept verbatim
    ("AAAA", "2001:DB8:0:0::1", "2001:db8::1"),
    ("NS", "NS1.Example.COM", "ns1.example.com."),
    ("MX", "10   Mail.Example.com.", "10 mail.example.com."),
    ("SOA", "A.root. Hostmaster.X. 1 2 3 4 5", "a.root. hostmaster.x. 1 2 3 4 5"),
])
def test_canonical_rdata_examples(rtype, raw, canon):
    assert canonical_rdata(type_code(rtype), raw) == canon


@pytest.mark.parametrize("fmt", sorted(DUMP_WRITERS))
def test_writers_round_trip_through_parsers(fmt):
    recs = [CacheRecord.make("example.com", "NS", "ns1.example.com."),
            CacheRecord.make("ns1.example.com", "A", "10.0.0.3", 60),
            CacheRecord.make("www.example.com", "AAAA", "2001:db8::1", 30),
            CacheRecord.make("example.com", "MX", "10 mail.example.com.", 60)]
    back = CACHE_PARSERS[fmt](DUMP_WRITERS[fmt](recs))
    assert back.key_set() == UnifiedCache(recs).key_set()


def test_duplicate_records_fold():
    r = CacheRecord.make("a.example", "A", "192.0.2.1", 60)
    assert len(UnifiedCache([r, r])) == 1


names = st.lists(st.text("abcXYZ0", min_size=1, max_size=5), min_size=1, max_size=3).map(".".join)
recs = st.one_of(
    st.builds(lambda n, a: CacheRecord.make(n, "A", a), names,
              st.tuples(*[st.integers(0, 255)] * 4).map(lambda t: ".".join(map(str, t)))),
    st.builds(lambda n, m: CacheRecord.make(n, "NS", m), names, names),
    st.builds(lambda n, p, m: CacheRecord.make(n, "MX", f"{p} {m}"), names, st.integers(0, 100), names),
)


@settings(max_examples=200)
@given(st.lists(recs, max_size=10))
def test_canonicalization_idempotent(records):
    c = UnifiedCache(records)
    once = c.canonicalize()
    assert once.canonicalize() == once
    assert once == c


@settings(max_examples=200)
@given(st.lists(recs, max_size=10))
def test_key_coherence_through_document(records):
    c = UnifiedCache(records)
    back = UnifiedCache.from_document(json.loads(c.dumps()))
    assert back.key_set() == c.key_set()
    assert all(r.key[0] == r.key[0].lower() for r in back.records())


def test_log_matching_first_pattern_wins_and_timestamp():
    text = "12:00:01 cache lookup www query\n12:00:02 sending packet\nnoise\n"
    pats = [("CACHE_LOOKUP", r"(?P<ts>\d+:\d+:\d+) cache lookup"), ("QUERY", r"query|sending packet")]
    ev = match_log_events(text, pats)
    assert [e.key for e in ev] == ["CACHE_LOOKUP", "QUERY"]
    assert ev[0].timestamp == "12:00:01"


def test_load_log_patterns(tmp_path):
    p = tmp_path / "pats.yaml"
    p.write_text("bind:\n  - [QUERY, 'sending packet']\n")
    assert load_log_patterns(str(p)) == {"bind": [("QUERY", "sending packet")]}


def test_summarize_traffic():
    pk = [Packet(CLIENT_TO_RESOLVER, 1.0, b"q" * 30), Packet(RESOLVER_TO_NS, 1.1, b"x" * 30),
          Packet(NS_TO_RESOLVER, 1.2, b"r" * 100), Packet(RESOLVER_TO_NS, 1.3, b"x" * 30),
          Packet(NS_TO_RESOLVER, 1.4, b"r" * 60), Packet(RESOLVER_TO_CLIENT, 1.5, b"a" * 80)]
    s = summarize_traffic(pk)
    assert (s.resolver_query_count, s.bytes_ns_to_resolver, s.max_response_size,
            s.bytes_resolver_to_client) == (2, 160, 100, 80)
    assert s.resolution_time == pytest.approx(0.5)
    assert summarize_traffic(pk[:2], timed_out=True, timeout=5.0).resolution_time == 5.0


def test_trace_record_round_trip():
    cache = UnifiedCache([CacheRecord.make("a.example", "A", "192.0.2.1", 60)], ["note"], {"x": 1})
    t = TraceRecord(3, "r1", 11, "forward-only", b"\x00" * 12, cache,
                    (LogEvent("QUERY", "query a"),), summarize_traffic([]), True, ("d",))
    back = TraceRecord.from_record(json.loads(json.dumps(t.to_record())))
    assert back == t and back.cache == cache
    assert back.cache.diagnostics == ("note",)


@pytest.mark.parametrize("fmt,text", [("bind", ""), ("powerdns", "; comment only\n"),
                                      ("technitium", "{}")])
def test_empty_dumps_give_empty_cache(fmt, text):
    assert len(CACHE_PARSERS[fmt](text)) == 0


def test_powerdns_root_server_addresses_and_negcache_excluded():
    c = parse_fixture("powerdns", "powerdns_dump.txt")
    assert {(r.rtype, r.rdata) for r in c.get("c.root-servers.net.")} == {
        (type_code("A"), "192.33.4.12"), (type_code("AAAA"), "2001:500:2::c")}
    assert not c.get("secpoll.powerdns.com.")


def test_bind_app_glue():
    c = parse_fixture("bind", "bind_dump.txt")
    ns = [r for r in c.get("app.") if r.rtype == type_code("NS")]
    assert len(ns) == 2 and {r.ttl for r in ns} == {172799}


def test_unbound_root_ttl():
    c = parse_fixture("unbound", "unbound_dump.txt")
    assert {r.ttl for r in c.get(".")} == {86398}


def test_log_event_counts():
    assert match_log_events("") == []
    text = "\n".join(f"cache lookup name{i}" for i in range(384))
    assert [e.key for e in match_log_events(text)] == ["CACHE_LOOKUP"] * 384


def test_traffic_magnitudes():
    empty = summarize_traffic([], timed_out=True)
    assert (empty.resolver_query_count, empty.bytes_ns_to_resolver, empty.timed_out) == (0, 0, True)
    nine = [Packet(RESOLVER_TO_NS, float(i), b"q") for i in range(9)]
    assert summarize_traffic(nine).resolver_query_count == 9
    big = [Packet(NS_TO_RESOLVER, 0.0, bytes(4096)), Packet(NS_TO_RESOLVER, 0.1, bytes(512))]
    assert summarize_traffic(big).max_response_size == 4096
