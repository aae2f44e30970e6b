import time

import pytest

from qrfuzz.generator import ResponseTemplate, generate_case
from qrfuzz.harness import (
    AdapterError, AttackerServer, CampaignConfig, CampaignIncomplete, ExternalAdapter, MockAdapter, Quirks,
    ReferenceAdapter, UnitEnvironment, ZoneConfig, accept_upstream, cache_candidates, check_liveness,
    iter_outcomes, localized_ns_answer, parse_adapter_spec, reference_resolver, run_campaign,
    serve_response, udp_exchange,
)
from qrfuzz.harness.campaign import UnitState, run_case
from qrfuzz.traces import RESOLVER_TO_NS
from qrfuzz.wire import (
    RCODES, DnsMessage, Flags, Question, ResourceRecord, decode_message, encode_message, name,
)

FWD = name("test-fwd.example.com")
REC = name("test-recursive.example.com")


def ns_rdata(target):
    return name(target).to_wire()


def a_rdata(addr):
    return bytes(int(x) for x in addr.split("."))


def client_query(qname, qtype=1, rd=1, txid=0x4242):
    return encode_message(DnsMessage.build(txid, Flags(rd=rd), [Question(name(qname), qtype)]))


def template(answers=(), authorities=(), additionals=(), **flags):
    return ResponseTemplate(Flags(qr=1, aa=1, **flags), tuple(answers), tuple(authorities), tuple(additionals))


def ask(zones, qname, qtype, server=None):
    q = DnsMessage.build(9, Flags(), [Question(name(qname), qtype)])
    return localized_ns_answer(q, zones, server)


# --- zones -----------------------------------------------------------------

def test_default_zones_valid_for_test_domains():
    z = ZoneConfig.default()
    assert z.validate(["test-fwd.example.com", "test-recursive.example.com", "test-cdns.example.com"]) == []


def test_zone_validation_reports_missing_delegation():
    z = ZoneConfig.default()
    assert any("not delegated" in p for p in z.validate(["other.example.com"]))


def test_referral_to_test_subdomain():
    r = ask(ZoneConfig.default(), "test-recursive.example.com", 2, "10.0.0.3")
    assert not r.flags.aa and r.answers == ()
    assert [(rr.name, rr.rtype, rr.rdata) for rr in r.authorities] == [
        (REC, 2, ns_rdata("ns.example.com"))]
    assert [(rr.name, rr.rdata) for rr in r.additionals] == [(name("ns.example.com"), a_rdata("10.0.0.53"))]


def test_root_ns_is_authoritative():
    r = ask(ZoneConfig.default(), ".", 2, "10.0.0.1")
    assert r.flags.aa and [rr.rdata for rr in r.answers] == [ns_rdata("a.root-servers.net")]


def test_nonexistent_name_is_nxdomain():
    r = ask(ZoneConfig.default(), "nonexistent.example.com", 1, "10.0.0.3")
    assert r.flags.rcode == RCODES["NXDOMAIN"] and r.authorities[0].rtype == 6


def test_com_server_refers_example():
    r = ask(ZoneConfig.default(), "www.example.com", 1, "10.0.0.2")
    assert r.authorities[0].name == name("example.com")
    assert r.additionals[0].rdata == a_rdata("10.0.0.3")


def test_zone_file_features(tmp_path):
    text = ("$ORIGIN .\n$TTL 60\n@ IN SOA a. b. ( 1 2\n 3 4 5 )\n@ IN NS a.\na. IN A 10.0.0.1\n"
            "t. IN NS ns.t.\nns.t. IN A 10.0.0.9\n"
            "$ORIGIN t.\n@ IN SOA ns b. 1 2 3 4 5\n@ IN NS ns\nns IN A 10.0.0.9\nwww 30 IN TXT \"hi there\"\n")
    p = tmp_path / "zones.txt"
    p.write_text(text)
    z = ZoneConfig.from_file(str(p))
    assert set(z.zones) == {name("."), name("t")}
    assert z.validate() == []
    txt = [rr for rr in z.zones[name("t")] if rr.rtype == 16]
    assert txt[0].ttl == 30 and txt[0].rdata == b"\x08hi there"


# --- attacker server --------------------------------------------------------

def test_serve_response_copies_txid_and_question():
    t = template([ResourceRecord.make(FWD, "A", a_rdata("192.0.2.9"))])
    q = DnsMessage.build(0xABCD, Flags(rd=1), [Question(FWD, 1)])
    r = decode_message(serve_response(t, q))
    assert r.txid == 0xABCD and r.questions == q.questions and r.flags.qr


def test_same_template_answers_successive_queries():
    t = template([ResourceRecord.make(FWD, "A", a_rdata("192.0.2.9"))])
    server = AttackerServer(FWD)
    server.arm(t)
    r1 = decode_message(server.handle(client_query("a.test-fwd.example.com", txid=1)))
    r2 = decode_message(server.handle(client_query("b.test-fwd.example.com", txid=2)))
    assert r1.answers == r2.answers and (r1.txid, r2.txid) == (1, 2) and server.served == 2


def test_mutated_counts_are_emitted_verbatim():
    rr = ResourceRecord.make(FWD, "A", a_rdata("192.0.2.9"))
    t = ResponseTemplate(Flags(qr=1), (rr, rr), ancount=5)
    out = serve_response(t, DnsMessage.build(3, Flags(), [Question(FWD, 1)]))
    r = decode_message(out)
    assert r.ancount == 5 and len(r.answers) == 2 and not r.well_formed


def test_undecodable_query_still_answered():
    out = serve_response(template(), b"\x12\x34\xff")
    assert out[:2] == b"\x12\x34" and decode_message(out).qdcount == 0


def test_unarmed_attacker_stays_silent():
    assert AttackerServer(FWD).handle(client_query("test-fwd.example.com")) is None


# --- upstream policy --------------------------------------------------------

def test_accept_upstream_rules():
    q = Question(FWD, 1)
    good = DnsMessage.build(7, Flags(qr=1), [q])
    assert accept_upstream(good, 7, q) is None
    assert accept_upstream(good, 8, q) == "txid mismatch"
    assert accept_upstream(DnsMessage.build(7, Flags(qr=1, opcode=4), [q]), 7, q) == "opcode mismatch"
    assert accept_upstream(DnsMessage.build(7, Flags(qr=1), [Question(REC, 1)]), 7, q) == "question mismatch"
    assert accept_upstream(DnsMessage.build(7, Flags(qr=1, rcode=2), [q]), 7, q) == "error rcode"
    upper = DnsMessage.build(7, Flags(qr=1), [Question(name("TEST-FWD.example.COM"), 1)])
    assert accept_upstream(upper, 7, q) is None


def test_cache_candidates_policy():
    q = Question(FWD, 1)
    resp = DnsMessage.build(1, Flags(qr=1), [q],
                            answers=[ResourceRecord.make(FWD, "A", a_rdata("1.2.3.4")),
                                     ResourceRecord.make("other.example", "A", a_rdata("1.2.3.5"))],
                            authorities=[ResourceRecord.make(FWD, "NS", ns_rdata("ns.test-fwd.example.com")),
                                         ResourceRecord.make(FWD, "TXT", b"\x01x")],
                            additionals=[ResourceRecord.make("ns.test-fwd.example.com", "A", a_rdata("1.1.1.1")),
                                         ResourceRecord.make("junk.example", "A", a_rdata("1.1.1.2"))])
    picked = [(s, rr.name.to_text(), rr.rtype) for s, rr in cache_candidates(resp, q)]
    assert picked == [("an", "test-fwd.example.com.", 1), ("ns", "test-fwd.example.com.", 2),
                      ("ar", "ns.test-fwd.example.com.", 1)]
    assert len(cache_candidates(resp, q, unsolicited=True)) == 5


# --- reference resolver -----------------------------------------------------

def run_one(adapter, query, tmpl):
    adapter.env.attacker.arm(tmpl)
    out = adapter.query(query, 5.0)
    adapter.env.attacker.disarm()
    return out


def test_reference_caches_exactly_the_answer_rrset():
    ad = reference_resolver()
    answer = [ResourceRecord.make(FWD, "A", a_rdata("192.0.2.1")), ResourceRecord.make(FWD, "A", a_rdata("192.0.2.2"))]
    out = run_one(ad, client_query("test-fwd.example.com"), template(answer))
    resp = decode_message(out.response)
    assert resp.flags.rcode == 0 and resp.answers == tuple(answer)
    assert ad.dump_cache().key_set() == {("test-fwd.example.com.", 1, "192.0.2.1"),
                                         ("test-fwd.example.com.", 1, "192.0.2.2")}


def foreign_ns_response():
    return template([ResourceRecord.make(FWD, "A", a_rdata("192.0.2.1"))],
                    [ResourceRecord.make("victim.example.org", "NS", ns_rdata("ns.attacker.example"))])


def test_out_of_bailiwick_ns_dropped_by_default():
    ad = reference_resolver()
    run_one(ad, client_query("test-fwd.example.com"), foreign_ns_response())
    assert not ad.dump_cache().get("victim.example.org.")
    assert any("out of bailiwick" in line for line in ad.resolver.log)


def test_out_of_bailiwick_ns_kept_with_quirk():
    ad = reference_resolver(Quirks(accept_out_of_bailiwick=True))
    run_one(ad, client_query("test-fwd.example.com"), foreign_ns_response())
    (rec,) = ad.dump_cache().get("victim.example.org.")
    assert (rec.rtype, rec.rdata) == (2, "ns.attacker.example.")


def test_crash_pattern_kills_resolver():
    ad = reference_resolver(Quirks(crash_pattern=b"\xde\xad"))
    assert check_liveness(ad)
    out = ad.query(client_query("test-fwd.example.com", txid=0xDEAD), 5.0)
    assert out.response is None and out.timed_out
    assert not check_liveness(ad)
    ad.start()
    assert check_liveness(ad)


def test_rd_zero_refused_unless_quirk():
    tmpl = template([ResourceRecord.make(FWD, "A", a_rdata("192.0.2.1"))])
    plain = run_one(reference_resolver(), client_query("test-fwd.example.com", rd=0), tmpl)
    assert decode_message(plain.response).flags.rcode == RCODES["REFUSED"]
    quirky = run_one(reference_resolver(Quirks(ignore_rd_flag=True)), client_query("test-fwd.example.com", rd=0), tmpl)
    assert decode_message(quirky.response).answers


def test_recursive_mode_walks_the_hierarchy():
    ad = reference_resolver(mode="recursive-only")
    qname = "www.test-recursive.example.com"
    out = run_one(ad, client_query(qname), template([ResourceRecord.make(qname, "A", a_rdata("192.0.2.3"))]))
    asked = [p for p in out.packets if p.direction == RESOLVER_TO_NS]
    assert len(asked) == 4  # root, com, example.com, attacker
    cache = ad.dump_cache()
    assert cache.get("test-recursive.example.com.") and cache.get(qname)


def test_truncated_response_retried_over_tcp():
    ad = reference_resolver()
    out = run_one(ad, client_query("test-fwd.example.com"),
                  template([ResourceRecord.make(FWD, "A", a_rdata("192.0.2.1"))], tc=1))
    assert sum(p.direction == RESOLVER_TO_NS for p in out.packets) == 2
    assert decode_message(out.response).answers


def test_malformed_upstream_gives_servfail():
    ad = reference_resolver()
    rr = ResourceRecord.make(FWD, "A", a_rdata("192.0.2.1"))
    out = run_one(ad, client_query("test-fwd.example.com"), ResponseTemplate(Flags(qr=1), (rr,), ancount=3))
    assert decode_message(out.response).flags.rcode == RCODES["SERVFAIL"]
    assert len(ad.dump_cache()) == 0


def test_dump_formats_agree():
    caches = []
    for fmt in ("unified", "bind", "unbound", "powerdns", "technitium"):
        env = UnitEnvironment.create(0, "forward-only", FWD)
        ad = ReferenceAdapter("r", env, Quirks(accept_out_of_bailiwick=True), fmt)
        ad.start()
        run_one(ad, client_query("test-fwd.example.com"), foreign_ns_response())
        caches.append(ad.dump_cache().key_set())
    assert all(c == caches[0] for c in caches) and len(caches[0]) == 2


# --- liveness and adapters ---------------------------------------------------

def test_mock_liveness_and_exit_on_next():
    m = MockAdapter()
    m.start()
    assert check_liveness(m)
    m.exit_on_next = True
    m.query(client_query("a.example"), 1.0)
    assert not check_liveness(m)


def test_external_liveness_uses_process_list():
    gone = ExternalAdapter("r", ("127.0.0.1", 53), commands={"process_list": "echo bash sleep"},
                           process_name="named")
    assert not check_liveness(gone)
    there = ExternalAdapter("r", ("127.0.0.1", 53), commands={"process_list": "echo bash named"},
                            process_name="named")
    assert check_liveness(there)


def test_external_dump_and_logs_via_commands(tmp_path):
    dump = tmp_path / "dump.db"
    dump.write_text("; Cache dump\n$DATE 20260101000000\n. 60 IN NS a.root-servers.net.\n")
    ext = ExternalAdapter("r", ("127.0.0.1", 53),
                          commands={"dump_cache": f"cat {dump}", "fetch_logs": "echo cache lookup x"})
    assert ext.dump_cache().key_set() == {(".", 2, "a.root-servers.net.")}
    assert ext.fetch_logs().strip() == "cache lookup x"
    broken = ExternalAdapter("r", ("127.0.0.1", 53), commands={"dump_cache": "exit 3"})
    assert broken.dump_cache() is None and "exited 3" in broken.last_dump_error


def test_adapter_spec_parsing():
    env = UnitEnvironment.create(0, "forward-only", FWD)
    ref = parse_adapter_spec("reference:accept-out-of-bailiwick,dump=bind,name=q")(env)
    assert (ref.name, ref.dump_format, ref.quirks.accept_out_of_bailiwick) == ("q", "bind", True)
    assert not parse_adapter_spec("reference:nodump", 2)(env).capabilities.cache_dump
    mock = parse_adapter_spec("mock:latency=0.01,never-answer", 1)(env)
    assert (mock.name, mock.latency, mock.never_answer) == ("mock1", 0.01, True)
    with pytest.raises(AdapterError):
        parse_adapter_spec("bind9")
    with pytest.raises(ValueError):
        parse_adapter_spec("reference:no-such-quirk")


def test_socket_server_round_trip():
    env = UnitEnvironment.create(0, "forward-only", FWD)
    srv = env.socket_server()
    try:
        resp = udp_exchange(srv.address, client_query("www.example.com", rd=0), 2.0)
        r = decode_message(resp)
        # one listener serves every zone, so the closest enclosing zone answers
        assert r.flags.aa and r.answers[0].rdata == a_rdata("10.0.0.80")
    finally:
        env.close()


# --- campaign ---------------------------------------------------------------

def test_three_cases_three_traces_in_order():
    cfg = CampaignConfig(unit_count=1, case_count=3, adapters=("mock",))
    traces = list(run_campaign(cfg))
    assert [t.case_id for t in traces] == [0, 1, 2]


def test_never_answering_resolver_times_out_after_5s():
    cfg = CampaignConfig(unit_count=1, case_count=1, timeout=5.0, adapters=("mock:never-answer",))
    start = time.monotonic()
    (t,) = run_campaign(cfg)
    assert t.timed_out and t.traffic.resolution_time == 5.0 and t.response is None
    assert time.monotonic() - start >= 5.0


def test_dead_resolver_restarted_between_cases():
    cfg = CampaignConfig(unit_count=1, case_count=3, adapters=("mock:exit-on-next",))
    traces = list(run_campaign(cfg))
    assert [t.alive for t in traces] == [False] * 3
    assert all(t.cache is None and "not running" in t.diagnostics[0] for t in traces)


def test_round_isolation():
    cfg = CampaignConfig(unit_count=1, case_count=6, seed=3,
                         adapters=("reference:name=a", "reference:name=b,accept-out-of-bailiwick"))
    together = {o.case_id: o for o in iter_outcomes(cfg)}
    alone = next(iter_outcomes(cfg, case_ids=[5]))
    for a, b in zip(together[5].traces, alone.traces):
        assert a.cache.key_set() == b.cache.key_set() and a.response == b.response


def test_parallel_units_match_single_unit():
    base = dict(case_count=40, seed=5, adapters=("reference:name=a", "reference:name=q,accept-out-of-bailiwick"))
    one = list(run_campaign(CampaignConfig(unit_count=1, **base)))
    four = list(run_campaign(CampaignConfig(unit_count=4, **base)))
    assert [(t.case_id, t.resolver, t.response, t.cache.key_set()) for t in one] == \
           [(t.case_id, t.resolver, t.response, t.cache.key_set()) for t in four]


def test_all_units_failing_is_incomplete():
    class Broken(MockAdapter):
        def start(self):
            raise RuntimeError("cannot start")

    cfg = CampaignConfig(unit_count=2, case_count=5)
    with pytest.raises(CampaignIncomplete) as exc:
        list(run_campaign(cfg, adapters=[lambda env: Broken()]))
    assert exc.value.completed == 0


def test_run_case_resets_resolvers():
    env = UnitEnvironment.create(0, "forward-only", FWD)
    ad = ReferenceAdapter("a", env)
    ad.start()
    unit = UnitState(0, env, [ad])
    cfg = CampaignConfig(case_count=1, seed=1)
    out = run_case(unit, cfg, 0, cfg.generate)
    assert len(out.traces) == 1 and ad.resolver.cache == {} and env.attacker.template is None
    assert generate_case("forward-only", FWD, cfg.case_seed(0)) == out.cases[0]
