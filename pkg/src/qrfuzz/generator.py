"""Paired client-query / ns-response test case generation with byte mutation."""

from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Optional, Sequence

from .builtin_grammars import load_builtin_query_grammar, load_builtin_response_grammar
from .grammar import Derivation, Grammar, SampleContext, sample
from .wire import (
    OPCODES, RCODES, DnsMessage, DnsName, Flags, Question, ResourceRecord,
    class_code, decode_message, encode_message, name, type_code,
)

MODES = ("recursive-only", "forward-only", "cdns-fallback", "cdns-nofallback")

MODE_DOMAINS = {
    "recursive-only": "test-recursive.example.com.",
    "forward-only": "test-fwd.example.com.",
    "cdns-fallback": "test-cdns.example.com.",
    "cdns-nofallback": "test-cdns.example.com.",
}

SPECIAL_BYTES = b".\x00@/\\"
SECTIONS = ("an", "ns", "ar")


class ConfigurationError(ValueError):
    pass


def derive_seed(seed: int, *parts: Any) -> int:
    """Stable 64-bit child seed."""
    h = hashlib.blake2b(repr((seed, *parts)).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "big")


# --- mutation --------------------------------------------------------------

@dataclass(frozen=True)
class MutationConfig:
    probability: float = 0.1
    special_bytes: bytes = SPECIAL_BYTES
    operators: tuple[str, ...] = ("add", "delete", "replace")

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ConfigurationError(f"mutation probability {self.probability} outside [0, 1]")
        if not self.special_bytes:
            raise ConfigurationError("special byte set is empty")
        bad = set(self.operators) - {"add", "delete", "replace"}
        if bad or not self.operators:
            raise ConfigurationError(f"unknown mutation operators {sorted(bad)}")


@dataclass(frozen=True)
class Mutation:
    operator: str
    field: str
    offset: int
    data: bytes = b""  # inserted / replacement byte, or the deleted byte
    skipped: bool = False

    def to_record(self) -> dict:
        return {"operator": self.operator, "field": self.field, "offset": self.offset,
                "bytes": self.data.hex(), "skipped": self.skipped}

    @classmethod
    def from_record(cls, r: dict) -> "Mutation":
        return cls(r["operator"], r["field"], r["offset"], bytes.fromhex(r["bytes"]), r["skipped"])


def apply_mutation(data: bytes, m: Mutation) -> bytes:
    if m.skipped:
        return data
    if m.operator == "add":
        return data[:m.offset] + m.data + data[m.offset:]
    if m.operator == "delete":
        return data[:m.offset] + data[m.offset + 1:]
    if m.operator == "replace":
        return data[:m.offset] + m.data + data[m.offset + 1:]
    raise ValueError(f"unknown mutation operator {m.operator!r}")


def mutate_bytes(data: bytes, seed: int, cfg: MutationConfig = MutationConfig(),
                 field: str = "") -> tuple[bytes, Mutation]:
    """One add/delete/replace with a special byte at a uniform offset."""
    rng = random.Random(seed)
    op = rng.choice(cfg.operators)
    if op == "add":
        offset = rng.randint(0, len(data))
        m = Mutation(op, field, offset, bytes([rng.choice(cfg.special_bytes)]))
    elif not data:
        m = Mutation(op, field, 0, skipped=True)
    elif op == "delete":
        offset = rng.randrange(len(data))
        m = Mutation(op, field, offset, data[offset:offset + 1])
    else:
        offset = rng.randrange(len(data))
        m = Mutation(op, field, offset, bytes([rng.choice(cfg.special_bytes)]))
    return apply_mutation(data, m), m


# --- field layouts ---------------------------------------------------------

Segments = tuple[tuple[str, bytes], ...]


def _record_segments(prefix: str, rr: ResourceRecord) -> list[tuple[str, bytes]]:
    return [
        (f"{prefix}.name", rr.name.to_wire()),
        (f"{prefix}.type", struct.pack("!H", rr.rtype)),
        (f"{prefix}.class", struct.pack("!H", rr.rclass)),
        (f"{prefix}.ttl", struct.pack("!I", rr.ttl & 0xFFFFFFFF)),
        (f"{prefix}.rdlength", struct.pack("!H", rr.rdlength & 0xFFFF)),
        (f"{prefix}.rdata", rr.rdata),
    ]


def message_segments(msg: DnsMessage) -> Segments:
    """Terminal fields of a structural message in wire order."""
    segs = [("txid", struct.pack("!H", msg.txid)), ("flags", struct.pack("!H", msg.flags.to_word()))]
    segs += [(n, struct.pack("!H", c)) for n, c in
             zip(("qdcount", "ancount", "nscount", "arcount"),
                 (msg.qdcount, msg.ancount, msg.nscount, msg.arcount))]
    for i, q in enumerate(msg.questions):
        segs += [(f"qd[{i}].qname", q.qname.to_wire()), (f"qd[{i}].qtype", struct.pack("!H", q.qtype)),
                 (f"qd[{i}].qclass", struct.pack("!H", q.qclass))]
    for sec, rrs in zip(SECTIONS, (msg.answers, msg.authorities, msg.additionals)):
        for i, rr in enumerate(rrs):
            segs += _record_segments(f"{sec}[{i}]", rr)
    return tuple(segs)


def _mutate_segments(segs: Segments, rng: random.Random, cfg: MutationConfig) -> tuple[Segments, Mutation]:
    idx = rng.randrange(len(segs))
    fname, octets = segs[idx]
    new, m = mutate_bytes(octets, rng.getrandbits(64), cfg, fname)
    out = list(segs)
    out[idx] = (fname, new)
    return tuple(out), m


def replay_mutations(segs: Segments, log: Iterable[Mutation]) -> Segments:
    out = dict(segs)
    for m in log:
        out[m.field] = apply_mutation(out[m.field], m)
    return tuple((k, out[k]) for k, _ in segs)


# --- templates -------------------------------------------------------------

@dataclass(frozen=True)
class ResponseTemplate:
    """ns-response body; TXID and Question are copied from each resolver-query at serve time."""

    flags: Flags
    answers: tuple[ResourceRecord, ...] = ()
    authorities: tuple[ResourceRecord, ...] = ()
    additionals: tuple[ResourceRecord, ...] = ()
    ancount: Optional[int] = None
    nscount: Optional[int] = None
    arcount: Optional[int] = None
    segments_override: Optional[Segments] = None

    def __post_init__(self):
        for attr, sec in (("ancount", self.answers), ("nscount", self.authorities),
                          ("arcount", self.additionals)):
            if getattr(self, attr) is None:
                object.__setattr__(self, attr, len(sec))

    @property
    def counts_consistent(self) -> bool:
        return (self.ancount, self.nscount, self.arcount) == (
            len(self.answers), len(self.authorities), len(self.additionals))

    def structural_segments(self) -> Segments:
        segs = [("flags", struct.pack("!H", self.flags.to_word())),
                ("ancount", struct.pack("!H", self.ancount)),
                ("nscount", struct.pack("!H", self.nscount)),
                ("arcount", struct.pack("!H", self.arcount))]
        for sec, rrs in zip(SECTIONS, (self.answers, self.authorities, self.additionals)):
            for i, rr in enumerate(rrs):
                segs += _record_segments(f"{sec}[{i}]", rr)
        return tuple(segs)

    def segments(self) -> Segments:
        return self.segments_override if self.segments_override is not None else self.structural_segments()

    def fill(self, txid: int, questions: Sequence[Question]) -> DnsMessage:
        """Structural response for a given resolver-query (ignores any mutation)."""
        return DnsMessage(txid, self.flags, len(questions), self.ancount, self.nscount,
                          self.arcount, tuple(questions), self.answers, self.authorities,
                          self.additionals)

    def render(self, txid: int, question_octets: bytes, qdcount: int) -> bytes:
        segs = dict(self.segments())
        head = struct.pack("!H", txid & 0xFFFF) + segs.pop("flags") + struct.pack("!H", qdcount & 0xFFFF)
        head += segs.pop("ancount") + segs.pop("nscount") + segs.pop("arcount")
        return head + question_octets + b"".join(segs.values())

    def records(self) -> tuple[ResourceRecord, ...]:
        return self.answers + self.authorities + self.additionals


@dataclass(frozen=True)
class TestCase:
    id: int
    mode: str
    seed: int
    base_domain: DnsName
    client_query: DnsMessage
    response_template: ResponseTemplate
    mutated: bool = False
    mutation_log: tuple[Mutation, ...] = ()
    provenance: dict = field(default_factory=dict, compare=False)

    __test__ = False  # keep pytest from collecting this class

    @property
    def query_octets(self) -> bytes:
        return encode_message(self.client_query)

    @property
    def qname(self) -> DnsName:
        return self.client_query.questions[0].qname

    @property
    def qtype(self) -> int:
        return self.client_query.questions[0].qtype


# --- generation ------------------------------------------------------------

def _alt_label(g: Grammar, d: Derivation, key: str) -> str:
    return g.rules[key].alternatives[d.choices[key]].label


def _flags_from(d: Derivation) -> Flags:
    return Flags(qr=int(d["QR"]), opcode=OPCODES[d["OPCODE"]], aa=int(d["AA"]), tc=int(d["TC"]),
                 rd=int(d["RD"]), ra=int(d["RA"]), z=int(d["Z"]), ad=int(d["AD"]),
                 cd=int(d["CD"]), rcode=RCODES[d["RCODE"]] & 0xF)


def _record_from(d: Derivation) -> ResourceRecord:
    return ResourceRecord(d["NAME"], type_code(d["TYPE"]), class_code(d["CLASS"]), int(d["TTL"]),
                          d["RDLENGTH"], d["RDATA"])


def synthesize_qname(ctx: SampleContext, grammar: Optional[Grammar] = None,
                     rng: Optional[random.Random] = None) -> DnsName:
    g = grammar or load_builtin_query_grammar()
    return sample(g, ctx, "QNAME", rng=rng)["QNAME"]


def synthesize_record(ctx: SampleContext, section: str = "an", grammar: Optional[Grammar] = None,
                      rng: Optional[random.Random] = None) -> tuple[ResourceRecord, dict]:
    """One response record plus the grammar classes that produced it."""
    g = grammar or load_builtin_response_grammar()
    d = sample(g, ctx, "Record", rng=rng)
    info = {"section": section, "NAME": _alt_label(g, d, "NAME"), "TYPE": _alt_label(g, d, "TYPE"),
            "RDLENGTH": _alt_label(g, d, "RDLENGTH")}
    return _record_from(d), info


def generate_case(mode: str, base_domain: str | DnsName, seed: int, case_id: int = 0,
                  cfg: MutationConfig = MutationConfig(),
                  query_grammar: Optional[Grammar] = None,
                  response_grammar: Optional[Grammar] = None) -> TestCase:
    if mode not in MODES:
        raise ConfigurationError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    base = name(base_domain)
    if not base.labels:
        raise ConfigurationError("base domain must not be empty")
    qg = query_grammar or load_builtin_query_grammar()
    rg = response_grammar or load_builtin_response_grammar()
    rng = random.Random(seed)
    ctx = SampleContext(seed, base)

    qd = sample(qg, ctx, rng=rng)
    question = Question(qd["QNAME"], type_code(qd["QTYPE"]), class_code(qd["QCLASS"]))
    query = DnsMessage(qd["TransactionID"], _flags_from(qd), int(qd["QDCOUNT"]), int(qd["ANCOUNT"]),
                       int(qd["NSCOUNT"]), int(qd["ARCOUNT"]), (question,))

    ctx.queried_name, ctx.queried_type = question.qname, question.qtype
    hd = sample(rg, ctx, "Header", rng=rng)
    sections: list[list[ResourceRecord]] = [[], [], []]
    record_info = []
    for idx, (sec, key) in enumerate(zip(SECTIONS, ("ANCOUNT", "NSCOUNT", "ARCOUNT"))):
        for _ in range(int(hd[key])):
            rr, info = synthesize_record(ctx, sec, rg, rng)
            sections[idx].append(rr)
            record_info.append(info)
    template = ResponseTemplate(_flags_from(hd), *map(tuple, sections))

    provenance = {
        "query": {k: _alt_label(qg, qd, k) for k in ("OPCODE", "RCODE", "QNAME", "QTYPE", "RD")},
        "response": {k: _alt_label(rg, hd, k) for k in ("OPCODE", "RCODE", "ANCOUNT", "NSCOUNT", "ARCOUNT")},
        "records": record_info,
    }

    log: list[Mutation] = []
    if rng.random() < cfg.probability:
        target = rng.choice(("query", "response", "both"))
        provenance["mutation_target"] = target
        if target in ("query", "both"):
            segs, m = _mutate_segments(message_segments(query), rng, cfg)
            query = replace(query, raw_override=b"".join(o for _, o in segs))
            log.append(replace(m, field="query." + m.field))
        if target in ("response", "both"):
            segs, m = _mutate_segments(template.structural_segments(), rng, cfg)
            template = replace(template, segments_override=segs)
            log.append(replace(m, field="response." + m.field))
    return TestCase(case_id, mode, seed, base, query, template, bool(log), tuple(log), provenance)


def generate_sequence(mode: str, base_domain: str | DnsName, seed: int, length: int = 1,
                      case_id: int = 0, cfg: MutationConfig = MutationConfig()) -> list[TestCase]:
    """``length`` independently generated pairs; the first is ``generate_case(seed)``."""
    if length < 1:
        raise ConfigurationError("sequence length must be positive")
    return [generate_case(mode, base_domain, seed if i == 0 else derive_seed(seed, "step", i),
                          case_id, cfg) for i in range(length)]


def replay_case_mutations(case: TestCase) -> tuple[bytes, Segments]:
    """Re-apply the mutation log to the unmutated fields; returns (query octets, template segments)."""
    q_log = [replace(m, field=m.field[len("query."):]) for m in case.mutation_log
             if m.field.startswith("query.")]
    r_log = [replace(m, field=m.field[len("response."):]) for m in case.mutation_log
             if m.field.startswith("response.")]
    base_q = replace(case.client_query, raw_override=None)
    q_octets = b"".join(o for _, o in replay_mutations(message_segments(base_q), q_log))
    r_segs = replay_mutations(case.response_template.structural_segments(), r_log)
    return q_octets, r_segs


# --- persistence -----------------------------------------------------------

def _rr_record(rr: ResourceRecord) -> dict:
    return {"name": rr.name.to_text(), "type": rr.rtype, "class": rr.rclass, "ttl": rr.ttl,
            "rdlength": rr.rdlength, "rdata": rr.rdata.hex()}


def _rr_from(r: dict) -> ResourceRecord:
    return ResourceRecord(DnsName.from_text(r["name"]), r["type"], r["class"], r["ttl"],
                          r["rdlength"], bytes.fromhex(r["rdata"]))


def case_to_record(case: TestCase) -> dict:
    t = case.response_template
    structural_q = replace(case.client_query, raw_override=None)
    return {
        "id": case.id,
        "mode": case.mode,
        "seed": case.seed,
        "base_domain": case.base_domain.to_text(),
        "query": encode_message(structural_q).hex(),
        "query_octets": case.query_octets.hex(),
        "template": {
            "flags": t.flags.to_word(),
            "counts": [t.ancount, t.nscount, t.arcount],
            "answers": [_rr_record(r) for r in t.answers],
            "authorities": [_rr_record(r) for r in t.authorities],
            "additionals": [_rr_record(r) for r in t.additionals],
            "segments_override": None if t.segments_override is None
            else [[k, v.hex()] for k, v in t.segments_override],
        },
        "mutated": case.mutated,
        "mutation_log": [m.to_record() for m in case.mutation_log],
        "provenance": case.provenance,
    }


def case_from_record(r: dict) -> TestCase:
    query = decode_message(bytes.fromhex(r["query"]))
    query = replace(query, wire=None, section_offsets=())
    if r["query_octets"] != r["query"]:
        query = replace(query, raw_override=bytes.fromhex(r["query_octets"]))
    t = r["template"]
    so = t["segments_override"]
    template = ResponseTemplate(
        Flags.from_word(t["flags"]),
        tuple(_rr_from(x) for x in t["answers"]),
        tuple(_rr_from(x) for x in t["authorities"]),
        tuple(_rr_from(x) for x in t["additionals"]),
        *t["counts"],
        segments_override=None if so is None else tuple((k, bytes.fromhex(v)) for k, v in so),
    )
    return TestCase(r["id"], r["mode"], r["seed"], DnsName.from_text(r["base_domain"]), query,
                    template, r["mutated"], tuple(Mutation.from_record(m) for m in r["mutation_log"]),
                    r.get("provenance", {}))
