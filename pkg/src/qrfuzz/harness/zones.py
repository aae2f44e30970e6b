"""Zone data for the localized root/TLD/SLD nameservers."""

from __future__ import annotations

import ipaddress
import struct
from dataclasses import dataclass, field
from typing import Iterable, Optional

from ..traces import tokenize
from ..wire import (
    DnsMessage, DnsName, Flags, Question, ResourceRecord, RCODES, ROOT,
    class_code, decode_name, type_code,
)


class ZoneConfigError(ValueError):
    pass


ATTACKER_ADDRESS = "10.0.0.53"

DEFAULT_ZONE_TEXT = """\
$ORIGIN .
$TTL 518400
@                   IN SOA a.root-servers.net. nstld.verisign-grs.com. 1 1800 900 604800 86400
@                   IN NS  a.root-servers.net.
a.root-servers.net. IN A   10.0.0.1
com.         172800 IN NS  a.gtld-servers.net.
a.gtld-servers.net. 172800 IN A 10.0.0.2

$ORIGIN com.
$TTL 172800
@                   IN SOA a.gtld-servers.net. nstld.verisign-grs.com. 1 1800 900 604800 86400
@                   IN NS  a.gtld-servers.net.
a.gtld-servers.net. IN A   10.0.0.2
example             IN NS  ns1.example.com.
ns1.example.com.    IN A   10.0.0.3

$ORIGIN example.com.
$TTL 3600
@              IN SOA ns1 admin 1 7200 3600 1209600 3600
@              IN NS  ns1
ns1            IN A   10.0.0.3
www            IN A   10.0.0.80
test-recursive IN NS  ns
test-fwd       IN NS  ns
test-cdns      IN NS  ns
ns             IN A   10.0.0.53
"""


def _name_in(text: str, origin: DnsName) -> DnsName:
    if text == "@":
        return origin
    n = DnsName.from_text(text)
    return n if text.endswith(".") and not text.endswith("\\.") else DnsName(n.labels + origin.labels)


def _char_string(tok: str) -> bytes:
    s = tok[1:-1] if tok.startswith('"') and tok.endswith('"') else tok
    out = bytearray()
    i = 0
    while i < len(s):
        if s[i] == "\\" and i + 1 < len(s):
            if s[i + 1:i + 4].isdigit() and len(s[i + 1:i + 4]) == 3:
                out.append(int(s[i + 1:i + 4]))
                i += 4
                continue
            out += s[i + 1].encode("latin-1")
            i += 2
            continue
        out += s[i].encode("latin-1")
        i += 1
    if len(out) > 255:
        raise ZoneConfigError(f"character-string longer than 255 octets: {tok!r}")
    return bytes([len(out)]) + bytes(out)


def rdata_from_text(rtype: int, toks: list[str], origin: DnsName = ROOT) -> bytes:
    """Wire rdata for presentation tokens; supports the types the hierarchy needs."""
    if toks and toks[0] == "\\#":
        return bytes.fromhex("".join(toks[2:]))
    if rtype == 1:
        return ipaddress.IPv4Address(toks[0]).packed
    if rtype == 28:
        return ipaddress.IPv6Address(toks[0]).packed
    if rtype in (2, 5, 12):
        return _name_in(toks[0], origin).to_wire()
    if rtype == 15:
        return struct.pack("!H", int(toks[0])) + _name_in(toks[1], origin).to_wire()
    if rtype == 6:
        return (_name_in(toks[0], origin).to_wire() + _name_in(toks[1], origin).to_wire()
                + struct.pack("!IIIII", *(int(t) for t in toks[2:7])))
    if rtype in (16, 99):
        return b"".join(_char_string(t) for t in toks)
    raise ZoneConfigError(f"no presentation parser for type {rtype}; use \\# generic form")


def parse_zone_file(text: str) -> dict[DnsName, list[ResourceRecord]]:
    """Zone-file subset: $ORIGIN, $TTL, @, relative owners, blank-owner inheritance,
    parentheses and comments. Each $ORIGIN starts a new zone."""
    zones: dict[DnsName, list[ResourceRecord]] = {}
    origin: Optional[DnsName] = None
    ttl_default = 3600
    owner: Optional[DnsName] = None
    pending: Optional[tuple[int, bool, list[str]]] = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        if pending is None:
            toks = tokenize(raw)[0]
            if not toks:
                continue
            inherit = raw[0].isspace()
            start = lineno
        else:
            start, inherit = pending[0], pending[1]
            toks = pending[2] + tokenize(raw)[0]
        if toks.count("(") > toks.count(")"):
            pending = (start, inherit, toks)
            continue
        pending = None
        toks = [t for t in toks if t not in "()"]
        if toks[0].upper() == "$ORIGIN":
            origin = DnsName.from_text(toks[1])
            zones.setdefault(origin.lower(), [])
            owner = None
            continue
        if toks[0].upper() == "$TTL":
            ttl_default = int(toks[1])
            continue
        if origin is None:
            raise ZoneConfigError(f"line {start}: record before $ORIGIN")
        if not inherit:
            owner = _name_in(toks.pop(0), origin)
        if owner is None:
            raise ZoneConfigError(f"line {start}: record without owner")
        ttl, rclass = ttl_default, 1
        while toks and (toks[0].isdigit() or toks[0].upper() in ("IN", "CH", "HS")):
            t = toks.pop(0)
            if t.isdigit():
                ttl = int(t)
            else:
                rclass = class_code(t)
        if not toks:
            raise ZoneConfigError(f"line {start}: missing record type")
        try:
            rtype = type_code(toks.pop(0))
            rdata = rdata_from_text(rtype, toks, origin)
        except (KeyError, ValueError, IndexError) as exc:
            raise ZoneConfigError(f"line {start}: {exc}") from exc
        zones[origin.lower()].append(ResourceRecord(owner.lower(), rtype, rclass, ttl, len(rdata), rdata))
    if pending is not None:
        raise ZoneConfigError(f"line {pending[0]}: unterminated parentheses")
    return zones


def _target(rr: ResourceRecord) -> DnsName:
    off = 2 if rr.rtype == 15 else 0
    return decode_name(rr.rdata, off)[0].lower()


@dataclass
class ZoneConfig:
    """Zones keyed by apex; each holds its authoritative data plus delegations and glue."""

    zones: dict[DnsName, list[ResourceRecord]] = field(default_factory=dict)

    @classmethod
    def from_text(cls, text: str) -> "ZoneConfig":
        return cls(parse_zone_file(text))

    @classmethod
    def from_file(cls, path: str) -> "ZoneConfig":
        try:
            with open(path) as fh:
                return cls.from_text(fh.read())
        except OSError as exc:
            raise ZoneConfigError(f"cannot read zone file {path}: {exc}") from exc

    @classmethod
    def default(cls) -> "ZoneConfig":
        return cls.from_text(DEFAULT_ZONE_TEXT)

    def all_records(self) -> Iterable[ResourceRecord]:
        for rrs in self.zones.values():
            yield from rrs

    def addresses_of(self, host: DnsName) -> list[str]:
        host = host.lower()
        seen = []
        for rr in self.all_records():
            if rr.name == host and rr.rtype in (1, 28):
                a = str(ipaddress.ip_address(rr.rdata))
                if a not in seen:
                    seen.append(a)
        return seen

    def servers_for(self, zone: DnsName) -> list[str]:
        """Addresses of the apex NS hosts of ``zone``."""
        out: list[str] = []
        for rr in self.zones.get(zone.lower(), ()):
            if rr.rtype == 2 and rr.name == zone.lower():
                for a in self.addresses_of(_target(rr)):
                    if a not in out:
                        out.append(a)
        return out

    def zones_served_by(self, address: str) -> list[DnsName]:
        return [z for z in self.zones if address in self.servers_for(z)]

    def delegations(self, zone: DnsName) -> dict[DnsName, list[ResourceRecord]]:
        out: dict[DnsName, list[ResourceRecord]] = {}
        for rr in self.zones.get(zone, ()):
            if rr.rtype == 2 and rr.name != zone:
                out.setdefault(rr.name, []).append(rr)
        return out

    def validate(self, attacker_domains: Iterable[str | DnsName] = (),
                 attacker_address: str = ATTACKER_ADDRESS) -> list[str]:
        """Problems that would break resolution; empty means usable."""
        problems = []
        if ROOT not in self.zones:
            problems.append("no root zone")
        for z in self.zones:
            if not any(rr.rtype == 6 and rr.name == z for rr in self.zones[z]):
                problems.append(f"zone {z} has no SOA at its apex")
            if not self.servers_for(z):
                problems.append(f"zone {z} has no reachable apex NS")
            if z != ROOT:
                parent = self.enclosing_zone(z.parent())
                if parent is None or z not in self.delegations(parent):
                    problems.append(f"zone {z} is not delegated from its parent")
        for d in attacker_domains:
            d = (d if isinstance(d, DnsName) else DnsName.from_text(d)).lower()
            zone = self.enclosing_zone(d)
            cut = self.delegations(zone).get(d, []) if zone is not None else []
            if not cut:
                problems.append(f"attacker domain {d} is not delegated")
                continue
            if not any(attacker_address in self.addresses_of(_target(rr)) for rr in cut):
                problems.append(f"attacker domain {d} has no glue reaching {attacker_address}")
        return problems

    def enclosing_zone(self, qname: DnsName, among: Optional[Iterable[DnsName]] = None) -> Optional[DnsName]:
        best = None
        for z in (among if among is not None else self.zones):
            if qname.is_subdomain_of(z) and (best is None or len(z) > len(best)):
                best = z
        return best


def localized_ns_answer(query: DnsMessage, zones: ZoneConfig, server: Optional[str] = None) -> DnsMessage:
    """Authoritative answer, referral, NODATA or NXDOMAIN from the closest served zone."""
    base = Flags(qr=1, opcode=query.flags.opcode, rd=query.flags.rd)
    if not query.questions:
        return DnsMessage.build(query.txid, Flags(qr=1, rcode=RCODES["FORMERR"]))
    q = query.questions[0]
    qname = q.qname.lower()
    served = zones.zones_served_by(server) if server is not None else None
    zone = zones.enclosing_zone(qname, served)
    if zone is None:
        return DnsMessage.build(query.txid, Flags(qr=1, rd=query.flags.rd, rcode=RCODES["REFUSED"]), [q])
    data = zones.zones[zone]

    cut = None
    for owner in zones.delegations(zone):
        if qname.is_subdomain_of(owner) and (cut is None or len(owner) < len(cut)):
            cut = owner
    if cut is not None:
        ns = [rr for rr in data if rr.name == cut and rr.rtype == 2]
        glue = [rr for t in (_target(r) for r in ns) for rr in zones.all_records()
                if rr.name == t and rr.rtype in (1, 28)]
        seen: list[ResourceRecord] = []
        for g in glue:
            if g not in seen:
                seen.append(g)
        return DnsMessage.build(query.txid, base, [q], authorities=ns, additionals=seen)

    aa = Flags(qr=1, opcode=query.flags.opcode, aa=1, rd=query.flags.rd)
    at_name = [rr for rr in data if rr.name == qname]
    soa = [rr for rr in data if rr.name == zone and rr.rtype == 6]
    if at_name:
        ans = [rr for rr in at_name if rr.rtype == q.qtype or q.qtype == 255]
        if not ans:
            ans = [rr for rr in at_name if rr.rtype == 5]
        if ans:
            return DnsMessage.build(query.txid, aa, [q], answers=ans)
        return DnsMessage.build(query.txid, aa, [q], authorities=soa)
    if any(rr.name.is_subdomain_of(qname) for rr in data):
        return DnsMessage.build(query.txid, aa, [q], authorities=soa)  # empty non-terminal
    nx = Flags(qr=1, opcode=query.flags.opcode, aa=1, rd=query.flags.rd, rcode=RCODES["NXDOMAIN"])
    return DnsMessage.build(query.txid, nx, [q], authorities=soa)
