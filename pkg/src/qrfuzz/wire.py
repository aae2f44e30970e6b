"""DNS message model and RFC 1035 wire codec.

Encoding never compresses names so output bytes are deterministic.
Decoding follows compression pointers and tolerates malformed input:
truncated sections stop parsing and the remaining octets are kept on the
message instead of raising.
"""

from __future__ import annotations

import ipaddress
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

# --- code tables -----------------------------------------------------------

RTYPES = {
    "A": 1, "NS": 2, "CNAME": 5, "SOA": 6, "PTR": 12, "MX": 15, "TXT": 16,
    "AAAA": 28, "OPT": 41, "DS": 43, "RRSIG": 46, "NSEC": 47, "DNSKEY": 48,
    "NSEC3": 50, "NSEC3PARAM": 51, "SPF": 99, "ANY": 255,
}
RTYPE_NAMES = {v: k for k, v in RTYPES.items()}

RCLASSES = {"IN": 1, "CH": 3, "HS": 4, "NONE": 254, "ANY": 255}
RCLASS_NAMES = {v: k for k, v in RCLASSES.items()}

OPCODES = {"QUERY": 0, "IQUERY": 1, "STATUS": 2, "NOTIFY": 4, "UPDATE": 5, "DSO": 6}
OPCODE_NAMES = {v: k for k, v in OPCODES.items()}

# Codes above 15 need an OPT record to travel; the header keeps the low 4 bits.
RCODES = {
    "NOERROR": 0, "FORMERR": 1, "SERVFAIL": 2, "NXDOMAIN": 3, "NOTIMP": 4,
    "REFUSED": 5, "YXDOMAIN": 6, "YXRRSET": 7, "NXRRSET": 8, "NOTAUTH": 9,
    "NOTZONE": 10, "DSOTYPENI": 11, "BADVERS": 16, "BADSIG": 16, "BADKEY": 17,
    "BADTIME": 18, "BADMODE": 19, "BADNAME": 20, "BADALG": 21,
    "BADTRUNC": 22, "BADCOOKIE": 23,
}
RCODE_NAMES = {v: k for k, v in RCODES.items() if v < 16}


def type_code(name: str | int) -> int:
    if isinstance(name, int):
        return name
    name = name.upper()
    if name in RTYPES:
        return RTYPES[name]
    if name.startswith("TYPE") and name[4:].isdigit():
        return int(name[4:])
    raise KeyError(f"unknown record type {name!r}")


def type_text(code: int) -> str:
    return RTYPE_NAMES.get(code, f"TYPE{code}")


def class_code(name: str | int) -> int:
    if isinstance(name, int):
        return name
    name = name.upper()
    if name in RCLASSES:
        return RCLASSES[name]
    if name.startswith("CLASS") and name[5:].isdigit():
        return int(name[5:])
    raise KeyError(f"unknown record class {name!r}")


def class_text(code: int) -> str:
    return RCLASS_NAMES.get(code, f"CLASS{code}")


# --- errors ----------------------------------------------------------------

class WireError(ValueError):
    """Base class for codec failures; ``offset`` locates the fault."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class TruncatedHeaderError(WireError):
    pass


class PointerLoopError(WireError):
    pass


class PointerRangeError(WireError):
    pass


class BadLabelError(WireError):
    pass


class EncodeError(ValueError):
    pass


# --- names -----------------------------------------------------------------

_ESCAPED = set(b'.\\"();@$')


def _label_text(label: bytes) -> str:
    out = []
    for b in label:
        if b in _ESCAPED:
            out.append("\\" + chr(b))
        elif 0x21 <= b <= 0x7E:
            out.append(chr(b))
        else:
            out.append("\\%03d" % b)
    return "".join(out)


def _split_text(text: str) -> list[bytes]:
    labels: list[bytes] = []
    cur = bytearray()
    i = 0
    while i < len(text):
        c = text[i]
        if c == "\\":
            nxt = text[i + 1:i + 4]
            if len(nxt) == 3 and nxt.isdigit():
                cur.append(int(nxt))
                i += 4
                continue
            cur.extend(text[i + 1].encode("latin-1"))
            i += 2
            continue
        if c == ".":
            labels.append(bytes(cur))
            cur = bytearray()
        else:
            cur.extend(c.encode("latin-1"))
        i += 1
    if cur:
        labels.append(bytes(cur))
    return labels


@dataclass(frozen=True)
class DnsName:
    """Absolute domain name as a tuple of raw labels (root is empty)."""

    labels: tuple[bytes, ...] = ()

    @classmethod
    def from_text(cls, text: str) -> "DnsName":
        text = text.strip()
        if text in ("", "."):
            return cls(())
        return cls(tuple(_split_text(text)))

    def to_text(self) -> str:
        if not self.labels:
            return "."
        return ".".join(_label_text(l) for l in self.labels) + "."

    __str__ = to_text

    def __repr__(self) -> str:
        return f"DnsName({self.to_text()!r})"

    def lower(self) -> "DnsName":
        return DnsName(tuple(l.lower() for l in self.labels))

    def to_wire(self) -> bytes:
        out = bytearray()
        for label in self.labels:
            if len(label) > 63:
                raise EncodeError(f"label {_label_text(label)!r} is {len(label)} octets (max 63)")
            if not label:
                raise EncodeError(f"empty label inside {self.to_text()!r}")
            out.append(len(label))
            out += label
        out.append(0)
        return bytes(out)

    @property
    def wire_length(self) -> int:
        return sum(len(l) + 1 for l in self.labels) + 1

    def is_subdomain_of(self, other: "DnsName") -> bool:
        """True when self equals or lies beneath ``other`` (case-insensitive)."""
        n = len(other.labels)
        if n > len(self.labels):
            return False
        if n == 0:
            return True
        return [l.lower() for l in self.labels[-n:]] == [l.lower() for l in other.labels]

    def parent(self) -> "DnsName":
        return DnsName(self.labels[1:])

    def prepend(self, *labels: bytes) -> "DnsName":
        return DnsName(tuple(labels) + self.labels)

    def __len__(self) -> int:
        return len(self.labels)


ROOT = DnsName(())


def name(text: str | DnsName) -> DnsName:
    return text if isinstance(text, DnsName) else DnsName.from_text(text)


# --- header ----------------------------------------------------------------

@dataclass(frozen=True)
class Flags:
    qr: int = 0
    opcode: int = 0
    aa: int = 0
    tc: int = 0
    rd: int = 0
    ra: int = 0
    z: int = 0
    ad: int = 0
    cd: int = 0
    rcode: int = 0

    def to_word(self) -> int:
        return ((self.qr & 1) << 15 | (self.opcode & 0xF) << 11 | (self.aa & 1) << 10
                | (self.tc & 1) << 9 | (self.rd & 1) << 8 | (self.ra & 1) << 7
                | (self.z & 1) << 6 | (self.ad & 1) << 5 | (self.cd & 1) << 4
                | (self.rcode & 0xF))

    @classmethod
    def from_word(cls, w: int) -> "Flags":
        return cls(qr=w >> 15 & 1, opcode=w >> 11 & 0xF, aa=w >> 10 & 1, tc=w >> 9 & 1,
                   rd=w >> 8 & 1, ra=w >> 7 & 1, z=w >> 6 & 1, ad=w >> 5 & 1,
                   cd=w >> 4 & 1, rcode=w & 0xF)


@dataclass(frozen=True)
class Question:
    qname: DnsName
    qtype: int
    qclass: int = 1

    def to_wire(self) -> bytes:
        return self.qname.to_wire() + struct.pack("!HH", self.qtype, self.qclass)


@dataclass(frozen=True)
class ResourceRecord:
    """One resource record. ``rdlength`` is stored, never recomputed on encode."""

    name: DnsName
    rtype: int
    rclass: int
    ttl: int
    rdlength: int
    rdata: bytes
    # offset of rdata inside the decoded packet, for compressed names in rdata
    rdata_offset: Optional[int] = field(default=None, compare=False, repr=False)

    @classmethod
    def make(cls, owner: str | DnsName, rtype: str | int, rdata: bytes,
             ttl: int = 60, rclass: str | int = 1) -> "ResourceRecord":
        return cls(name(owner), type_code(rtype), class_code(rclass), ttl, len(rdata), rdata)

    def to_wire(self) -> bytes:
        return (self.name.to_wire()
                + struct.pack("!HHIH", self.rtype, self.rclass, self.ttl & 0xFFFFFFFF,
                              self.rdlength & 0xFFFF)
                + self.rdata)


@dataclass(frozen=True)
class DnsMessage:
    txid: int = 0
    flags: Flags = Flags()
    qdcount: int = 0
    ancount: int = 0
    nscount: int = 0
    arcount: int = 0
    questions: tuple[Question, ...] = ()
    answers: tuple[ResourceRecord, ...] = ()
    authorities: tuple[ResourceRecord, ...] = ()
    additionals: tuple[ResourceRecord, ...] = ()
    raw_override: Optional[bytes] = None
    trailing: bytes = b""
    # start offset of question/answer/authority/additional/trailing data
    section_offsets: tuple[int, ...] = field(default=(), compare=False, repr=False)
    wire: Optional[bytes] = field(default=None, compare=False, repr=False)

    @classmethod
    def build(cls, txid: int = 0, flags: Flags = Flags(),
              questions: Iterable[Question] = (), answers: Iterable[ResourceRecord] = (),
              authorities: Iterable[ResourceRecord] = (),
              additionals: Iterable[ResourceRecord] = ()) -> "DnsMessage":
        """Construct a message whose count fields match its sections."""
        q, an, ns, ar = tuple(questions), tuple(answers), tuple(authorities), tuple(additionals)
        return cls(txid, flags, len(q), len(an), len(ns), len(ar), q, an, ns, ar)

    @property
    def counts_consistent(self) -> bool:
        return (self.qdcount == len(self.questions) and self.ancount == len(self.answers)
                and self.nscount == len(self.authorities)
                and self.arcount == len(self.additionals))

    @property
    def well_formed(self) -> bool:
        """Fully parsed: counts match sections and nothing trails."""
        return self.raw_override is None and self.counts_consistent and not self.trailing

    def records(self) -> tuple[ResourceRecord, ...]:
        return self.answers + self.authorities + self.additionals

    def with_counts(self) -> "DnsMessage":
        return replace(self, qdcount=len(self.questions), ancount=len(self.answers),
                       nscount=len(self.authorities), arcount=len(self.additionals))


# --- encode ----------------------------------------------------------------

def encode_header(txid: int, flags: Flags | int, counts: Sequence[int]) -> bytes:
    word = flags if isinstance(flags, int) else flags.to_word()
    return struct.pack("!HHHHHH", txid & 0xFFFF, word & 0xFFFF, *(c & 0xFFFF for c in counts))


def encode_message(msg: DnsMessage) -> bytes:
    if msg.raw_override is not None:
        return msg.raw_override
    out = bytearray(encode_header(msg.txid, msg.flags,
                                  (msg.qdcount, msg.ancount, msg.nscount, msg.arcount)))
    for q in msg.questions:
        out += q.to_wire()
    for rr in msg.records():
        out += rr.to_wire()
    out += msg.trailing
    return bytes(out)


def tcp_frame(octets: bytes) -> bytes:
    return struct.pack("!H", len(octets)) + octets


# --- decode ----------------------------------------------------------------

class _Truncated(Exception):
    pass


def decode_name(data: bytes, offset: int) -> tuple[DnsName, int]:
    """Read a possibly compressed name; returns (name, offset after it)."""
    labels: list[bytes] = []
    seen: set[int] = set()
    end: Optional[int] = None
    pos = offset
    while True:
        if pos >= len(data):
            if end is None:
                raise _Truncated(pos)
            raise PointerRangeError("name runs past end of packet", pos)
        n = data[pos]
        kind = n & 0xC0
        if kind == 0xC0:
            if pos + 1 >= len(data):
                if end is None:
                    raise _Truncated(pos)
                raise PointerRangeError("pointer runs past end of packet", pos)
            target = ((n & 0x3F) << 8) | data[pos + 1]
            if target >= len(data):
                raise PointerRangeError(f"pointer to {target} beyond packet", pos)
            if target in seen:
                raise PointerLoopError(f"pointer loop via {target}", pos)
            seen.add(target)
            if end is None:
                end = pos + 2
            pos = target
            continue
        if kind:
            raise BadLabelError(f"reserved label type 0x{n:02x}", pos)
        if n == 0:
            return DnsName(tuple(labels)), (pos + 1 if end is None else end)
        if pos + 1 + n > len(data):
            if end is None:
                raise _Truncated(pos)
            raise PointerRangeError("label runs past end of packet", pos)
        labels.append(bytes(data[pos + 1:pos + 1 + n]))
        pos += 1 + n


def _decode_question(data: bytes, pos: int) -> tuple[Question, int]:
    qname, pos = decode_name(data, pos)
    if pos + 4 > len(data):
        raise _Truncated(pos)
    qtype, qclass = struct.unpack_from("!HH", data, pos)
    return Question(qname, qtype, qclass), pos + 4


def _decode_record(data: bytes, pos: int) -> tuple[ResourceRecord, int]:
    owner, pos = decode_name(data, pos)
    if pos + 10 > len(data):
        raise _Truncated(pos)
    rtype, rclass, ttl, rdlength = struct.unpack_from("!HHIH", data, pos)
    pos += 10
    if pos + rdlength > len(data):
        raise _Truncated(pos)
    rdata = bytes(data[pos:pos + rdlength])
    return ResourceRecord(owner, rtype, rclass, ttl, rdlength, rdata, rdata_offset=pos), pos + rdlength


def decode_message(data: bytes) -> DnsMessage:
    """Decode wire octets.

    Raises TruncatedHeaderError, PointerLoopError, PointerRangeError or
    BadLabelError. A section cut short by the end of the packet ends the
    parse; whatever was not consumed lands in ``trailing``.
    """
    data = bytes(data)
    if len(data) < 12:
        raise TruncatedHeaderError(f"need 12 header octets, got {len(data)}", len(data))
    txid, word, qd, an, ns, ar = struct.unpack_from("!HHHHHH", data, 0)
    pos = 12
    offsets = [pos]
    questions: list[Question] = []
    sections: list[list[ResourceRecord]] = [[], [], []]
    try:
        for _ in range(qd):
            q, pos = _decode_question(data, pos)
            questions.append(q)
        for idx, count in enumerate((an, ns, ar)):
            offsets.append(pos)
            for _ in range(count):
                rr, pos = _decode_record(data, pos)
                sections[idx].append(rr)
    except _Truncated:
        pass
    while len(offsets) < 4:
        offsets.append(pos)
    offsets.append(pos)
    return DnsMessage(txid, Flags.from_word(word), qd, an, ns, ar, tuple(questions),
                      tuple(sections[0]), tuple(sections[1]), tuple(sections[2]),
                      trailing=data[pos:], section_offsets=tuple(offsets), wire=data)


# --- rdata presentation ----------------------------------------------------

_NAME_TYPES = {2, 5, 12}  # NS, CNAME, PTR


def _rdata_name(rr: ResourceRecord, wire: Optional[bytes], rel: int) -> tuple[DnsName, int]:
    """Decode a name inside rdata, resolving pointers against ``wire`` if known."""
    if wire is not None and rr.rdata_offset is not None:
        n, end = decode_name(wire, rr.rdata_offset + rel)
        return n, end - rr.rdata_offset
    try:
        return decode_name(rr.rdata, rel)
    except _Truncated as exc:
        raise ValueError("truncated name in rdata") from exc


def _char_strings(data: bytes) -> list[bytes]:
    out, pos = [], 0
    while pos < len(data):
        n = data[pos]
        if pos + 1 + n > len(data):
            raise ValueError("character-string overruns rdata")
        out.append(data[pos + 1:pos + 1 + n])
        pos += 1 + n
    return out


def _quote(s: bytes) -> str:
    parts = []
    for b in s:
        if b in b'"\\;':
            parts.append("\\%03d" % b)
        elif 0x20 <= b <= 0x7E:
            parts.append(chr(b))
        else:
            parts.append("\\%03d" % b)
    return '"' + "".join(parts) + '"'


def generic_rdata_text(rdata: bytes) -> str:
    return f"\\# {len(rdata)} {rdata.hex()}" if rdata else "\\# 0"


def rdata_to_text(rr: ResourceRecord, wire: Optional[bytes] = None) -> str:
    """Presentation form of rdata; falls back to RFC 3597 generic text.

    Only well-formed rdata whose length agrees with ``rdlength`` gets a
    type-specific rendering.
    """
    t, d = rr.rtype, rr.rdata
    try:
        if rr.rdlength != len(d):
            raise ValueError("rdlength mismatch")
        if t == 1 and len(d) == 4:
            return str(ipaddress.IPv4Address(d))
        if t == 28 and len(d) == 16:
            return str(ipaddress.IPv6Address(d))
        if t in _NAME_TYPES:
            n, end = _rdata_name(rr, wire, 0)
            if end != len(d):
                raise ValueError("trailing rdata")
            return n.lower().to_text()
        if t == 15 and len(d) >= 3:
            pref = struct.unpack_from("!H", d)[0]
            n, end = _rdata_name(rr, wire, 2)
            if end != len(d):
                raise ValueError("trailing rdata")
            return f"{pref} {n.lower().to_text()}"
        if t == 6:
            mname, pos = _rdata_name(rr, wire, 0)
            rname, pos = _rdata_name(rr, wire, pos)
            if len(d) - pos != 20:
                raise ValueError("bad SOA tail")
            nums = struct.unpack_from("!IIIII", d, pos)
            return " ".join([mname.lower().to_text(), rname.lower().to_text(), *map(str, nums)])
        if t in (16, 99) and d:
            return " ".join(_quote(s) for s in _char_strings(d))
    except (ValueError, WireError, _Truncated):
        pass
    return generic_rdata_text(d)
