"""A small in-process resolver with an inspectable cache and switchable misbehaviours.

It resolves iteratively from the localized root, forwards to the attacker
server, or mixes both per mode. Its cache policy is deliberately plain so
that a difference between two instances can only come from a quirk.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from typing import Iterable, Optional

from ..traces import CacheRecord
from ..wire import (
    RCODES, DnsMessage, DnsName, Flags, Question, ResourceRecord, WireError,
    decode_message, decode_name, encode_message, rdata_to_text, type_text,
)
from .servers import InProcessNetwork
from .zones import ATTACKER_ADDRESS

ROOT_HINTS = ("10.0.0.1",)
MAX_REFERRALS = 16
MAX_CNAME_CHAIN = 8

NS, CNAME, SOA, A, AAAA, ANY = 2, 5, 6, 1, 28, 255


@dataclass(frozen=True)
class Quirks:
    accept_out_of_bailiwick: bool = False
    cache_unsolicited_records: bool = False
    ignore_rd_flag: bool = False
    crash_pattern: Optional[bytes] = None  # regex over raw client-query octets

    NAMES = ("accept-out-of-bailiwick", "cache-unsolicited-records", "ignore-rd-flag",
             "crash-on-pattern")

    @classmethod
    def parse(cls, items: Iterable[str]) -> "Quirks":
        """Items like ``accept-out-of-bailiwick`` or ``crash-on-pattern=40`` (hex octets)."""
        kw: dict = {}
        for item in items:
            key, _, val = item.partition("=")
            key = key.strip()
            if key == "crash-on-pattern":
                kw["crash_pattern"] = bytes.fromhex(val) if val else b"@"
            elif key in cls.NAMES:
                kw[key.replace("-", "_")] = True
            else:
                raise ValueError(f"unknown quirk {key!r}; known: {', '.join(cls.NAMES)}")
        return cls(**kw)

    def labels(self) -> list[str]:
        out = [n for n in self.NAMES[:3] if getattr(self, n.replace("-", "_"))]
        if self.crash_pattern is not None:
            out.append(f"crash-on-pattern={self.crash_pattern.hex()}")
        return out


def _question_matches(resp: DnsMessage, q: Question) -> bool:
    if len(resp.questions) != 1:
        return False
    r = resp.questions[0]
    return r.qname.lower() == q.qname.lower() and r.qtype == q.qtype and r.qclass == q.qclass


def accept_upstream(resp: DnsMessage, txid: int, q: Question) -> Optional[str]:
    """Reason to discard an upstream response, or None when it is usable."""
    if not resp.well_formed:
        return "malformed"
    if not resp.flags.qr:
        return "not a response"
    if resp.txid != txid:
        return "txid mismatch"
    if resp.flags.opcode != 0:
        return "opcode mismatch"
    if not _question_matches(resp, q):
        return "question mismatch"
    if resp.flags.rcode not in (RCODES["NOERROR"], RCODES["NXDOMAIN"]):
        return "error rcode"
    return None


def _rdata_target(rr: ResourceRecord, wire: Optional[bytes]) -> Optional[DnsName]:
    try:
        if wire is not None and rr.rdata_offset is not None:
            return decode_name(wire, rr.rdata_offset)[0].lower()
        return decode_name(rr.rdata, 0)[0].lower()
    except Exception:
        return None


def cache_candidates(resp: DnsMessage, q: Question, unsolicited: bool = False
                     ) -> list[tuple[str, ResourceRecord]]:
    """Records a resolver would consider caching, by section, before the bailiwick check."""
    qname = q.qname.lower()
    out = []
    for rr in resp.answers:
        if rr.name.lower() == qname and (rr.rtype == q.qtype or rr.rtype == CNAME or q.qtype == ANY):
            out.append(("an", rr))
    ns_targets = set()
    for rr in resp.authorities:
        if rr.rtype in (NS, SOA) or unsolicited:
            out.append(("ns", rr))
            if rr.rtype == NS:
                t = _rdata_target(rr, resp.wire)
                if t is not None:
                    ns_targets.add(t)
    for rr in resp.additionals:
        if (rr.rtype in (A, AAAA) and rr.name.lower() in ns_targets) or unsolicited:
            out.append(("ar", rr))
    return [(s, rr) for s, rr in out if rr.rclass == 1]


class ReferenceResolver:
    def __init__(self, network: InProcessNetwork, mode: str, base_domain: DnsName,
                 quirks: Quirks = Quirks(), name: str = "reference",
                 forwarder: str = ATTACKER_ADDRESS, root_hints: tuple[str, ...] = ROOT_HINTS):
        self.network = network
        self.mode = mode
        self.forward_zone = base_domain.lower()
        self.quirks = quirks
        self.name = name
        self.forwarder = forwarder
        self.root_hints = root_hints
        self.alive = True
        self.cache: dict[tuple[DnsName, int], list[tuple[ResourceRecord, CacheRecord]]] = {}
        self.log: list[str] = []
        self._rng = random.Random(name)
        self._journal: Optional[list] = None

    # --- lifecycle --------------------------------------------------------

    def reset(self) -> None:
        self.cache.clear()
        self.log.clear()
        self._rng = random.Random(self.name)

    def restart(self) -> None:
        self.reset()
        self.alive = True

    def cache_records(self) -> list[CacheRecord]:
        return [c for rrset in self.cache.values() for _, c in rrset]

    # --- client side ------------------------------------------------------

    def handle(self, octets: bytes, journal: Optional[list] = None) -> Optional[bytes]:
        """Process one client-query; returns the resolver-response or None (dropped)."""
        if not self.alive:
            return None
        if self.quirks.crash_pattern is not None and re.search(re.escape(self.quirks.crash_pattern), octets):
            self.alive = False
            self.log.append("fatal: assertion failure while parsing query")
            return None
        if len(octets) < 12:
            return None
        try:
            msg = decode_message(octets)
        except WireError:
            return self._error(octets[:2], RCODES["FORMERR"])
        if msg.flags.qr:
            return None
        if not msg.well_formed or msg.qdcount != 1:
            return self._error(octets[:2], RCODES["FORMERR"], msg.flags.rd)
        q = msg.questions[0]
        if msg.flags.opcode != 0:
            return self._reply(msg, RCODES["NOTIMP"], ())
        if q.qclass != 1:
            return self._reply(msg, RCODES["REFUSED"], ())
        self._journal = journal
        try:
            cached = self._lookup(q.qname.lower(), q.qtype)
            if cached:
                return self._reply(msg, RCODES["NOERROR"], cached)
            if not msg.flags.rd and not self.quirks.ignore_rd_flag:
                return self._reply(msg, RCODES["REFUSED"], ())
            rcode, answers = self._resolve(q.qname.lower(), q.qtype, 0)
            return self._reply(msg, rcode, answers)
        finally:
            self._journal = None

    def _error(self, txid: bytes, rcode: int, rd: int = 0) -> bytes:
        tid = int.from_bytes(txid.ljust(2, b"\0"), "big")
        return encode_message(DnsMessage.build(tid, Flags(qr=1, rd=rd, ra=1, rcode=rcode)))

    def _reply(self, msg: DnsMessage, rcode: int, answers) -> bytes:
        flags = Flags(qr=1, opcode=msg.flags.opcode, rd=msg.flags.rd, ra=1, rcode=rcode)
        return encode_message(DnsMessage.build(msg.txid, flags, msg.questions, answers))

    # --- cache ------------------------------------------------------------

    def _lookup(self, qname: DnsName, qtype: int) -> list[ResourceRecord]:
        self.log.append(f"cache lookup {qname.to_text()} {type_text(qtype)}")
        hit = self.cache.get((qname, qtype)) or self.cache.get((qname, CNAME))
        return [rr for rr, _ in hit] if hit else []

    def _store(self, resp: DnsMessage, q: Question, bailiwick: DnsName) -> list[ResourceRecord]:
        """Cache what policy allows; returns the accepted answer-section records."""
        fresh: dict[tuple[DnsName, int], list[tuple[ResourceRecord, CacheRecord]]] = {}
        answers = []
        for section, rr in cache_candidates(resp, q, self.quirks.cache_unsolicited_records):
            owner = rr.name.lower()
            if not owner.is_subdomain_of(bailiwick) and not self.quirks.accept_out_of_bailiwick:
                self.log.append(f"sanitize {owner.to_text()} {type_text(rr.rtype)} out of bailiwick {bailiwick}")
                continue
            rec = CacheRecord.make(owner, rr.rtype, rdata_to_text(rr, resp.wire), rr.ttl, rr.rclass)
            bucket = fresh.setdefault((owner, rr.rtype), [])
            if all(c != rec for _, c in bucket):
                bucket.append((rr, rec))
            if section == "an":
                answers.append(rr)
        self.cache.update(fresh)
        return answers

    # --- upstream ---------------------------------------------------------

    def _ask(self, address: str, qname: DnsName, qtype: int, rd: int) -> Optional[DnsMessage]:
        q = Question(qname, qtype)
        for _ in range(2):
            txid = self._rng.getrandbits(16)
            octets = encode_message(DnsMessage.build(txid, Flags(rd=rd), [q]))
            self.log.append(f"query {qname.to_text()} {type_text(qtype)} to {address}")
            raw = self.network.exchange(address, octets, self._journal)
            if raw is None:
                continue
            try:
                resp = decode_message(raw)
            except WireError:
                self.log.append(f"discard undecodable response from {address}")
                continue
            if resp.well_formed and resp.flags.tc:
                raw = self.network.exchange(address, octets, self._journal, tcp=True)
                if raw is None:
                    continue
                try:
                    resp = decode_message(raw)
                except WireError:
                    continue
            why = accept_upstream(resp, txid, q)
            if why is None:
                return resp
            self.log.append(f"discard response from {address}: {why}")
        return None

    def _resolve(self, qname: DnsName, qtype: int, chain: int) -> tuple[int, list[ResourceRecord]]:
        in_fwd = qname.is_subdomain_of(self.forward_zone)
        if self.mode == "forward-only" or (self.mode.startswith("cdns") and in_fwd):
            out = self._forward(qname, qtype, chain)
            if out is not None:
                return out
            if self.mode != "cdns-fallback":
                return RCODES["SERVFAIL"], []
            self.log.append(f"fallback to recursion for {qname.to_text()}")
        return self._iterate(qname, qtype, chain)

    def _finish(self, resp: DnsMessage, answers: list[ResourceRecord], qtype: int,
                chain: int) -> tuple[int, list[ResourceRecord]]:
        rcode = resp.flags.rcode
        if (answers and qtype not in (CNAME, ANY) and all(a.rtype == CNAME for a in answers)
                and chain < MAX_CNAME_CHAIN):
            target = _rdata_target(answers[-1], resp.wire)
            if target is not None:
                cached = self._lookup(target, qtype)
                if cached:
                    return rcode, answers + cached
                rc, more = self._resolve(target, qtype, chain + 1)
                return rc, answers + more
        return rcode, answers

    def _forward(self, qname: DnsName, qtype: int, chain: int) -> Optional[tuple[int, list[ResourceRecord]]]:
        resp = self._ask(self.forwarder, qname, qtype, rd=1)
        if resp is None:
            return None
        answers = self._store(resp, Question(qname, qtype), self.forward_zone)
        return self._finish(resp, answers, qtype, chain)

    def _iterate(self, qname: DnsName, qtype: int, chain: int) -> tuple[int, list[ResourceRecord]]:
        zone, servers = DnsName(()), list(self.root_hints)
        q = Question(qname, qtype)
        for _ in range(MAX_REFERRALS):
            resp = None
            for addr in servers:
                resp = self._ask(addr, qname, qtype, rd=0)
                if resp is not None:
                    break
            if resp is None:
                return RCODES["SERVFAIL"], []
            answers = self._store(resp, q, zone)
            if answers or resp.flags.rcode != 0:
                return self._finish(resp, answers, qtype, chain)
            cut = self._referral(resp, qname, zone)
            if cut is None:
                return resp.flags.rcode, []
            zone, servers = cut
            if not servers:
                return RCODES["SERVFAIL"], []
        return RCODES["SERVFAIL"], []

    def _referral(self, resp: DnsMessage, qname: DnsName, zone: DnsName
                  ) -> Optional[tuple[DnsName, list[str]]]:
        if resp.flags.aa:
            return None
        cuts = [rr for rr in resp.authorities
                if rr.rtype == NS and rr.name.lower() != zone and rr.name.is_subdomain_of(zone)
                and qname.is_subdomain_of(rr.name)]
        if not cuts:
            return None
        child = cuts[0].name.lower()
        addrs: list[str] = []
        for ns in cuts:
            if ns.name.lower() != child:
                continue
            target = _rdata_target(ns, resp.wire)
            for (owner, t), rrset in self.cache.items():
                if owner == target and t == A:
                    addrs += [c.rdata for _, c in rrset if c.rdata not in addrs]
        return child, addrs
