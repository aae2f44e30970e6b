"""Normalize resolver outputs (cache dumps, logs, packet journals) into trace records."""

from __future__ import annotations

import ipaddress
import json
import re
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence

from .wire import (
    RCLASSES, RTYPES, DnsMessage, DnsName, WireError, class_code, class_text,
    decode_message, type_code, type_text,
)

CLIENT_TO_RESOLVER = "client->resolver"
RESOLVER_TO_CLIENT = "resolver->client"
RESOLVER_TO_NS = "resolver->ns"
NS_TO_RESOLVER = "ns->resolver"
DIRECTIONS = (CLIENT_TO_RESOLVER, RESOLVER_TO_CLIENT, RESOLVER_TO_NS, NS_TO_RESOLVER)


class CacheParseError(ValueError):
    pass


# --- canonical forms -------------------------------------------------------

def canonical_name(text: str | DnsName) -> str:
    n = text if isinstance(text, DnsName) else DnsName.from_text(text)
    return n.lower().to_text()


def tokenize(line: str) -> tuple[list[str], str]:
    """Split presentation text into tokens, honouring quotes and escapes.

    Returns (tokens, comment). Parentheses come back as their own tokens.
    """
    tokens: list[str] = []
    cur: list[str] = []
    i, n = 0, len(line)
    while i < n:
        c = line[i]
        if c == "\\" and i + 1 < n:
            cur.append(line[i:i + 2])
            i += 2
            continue
        if c == '"':
            j = i + 1
            while j < n and line[j] != '"':
                j += 2 if line[j] == "\\" else 1
            cur.append(line[i:j + 1])
            i = j + 1
            continue
        if c == ";":
            if cur:
                tokens.append("".join(cur))
            return tokens, line[i + 1:].strip()
        if c in "()":
            if cur:
                tokens.append("".join(cur))
                cur = []
            tokens.append(c)
        elif c.isspace():
            if cur:
                tokens.append("".join(cur))
                cur = []
        else:
            cur.append(c)
        i += 1
    if cur:
        tokens.append("".join(cur))
    return tokens, ""


def _is_int(tok: str) -> bool:
    return tok.isdigit()


def canonical_rdata(rtype: int, text: str) -> str:
    """Per-type canonical presentation text; unknown shapes collapse whitespace only."""
    toks = [t for t in tokenize(text)[0] if t not in "()"]
    if not toks:
        return ""
    if toks[0] == "\\#":
        return " ".join(["\\#", *toks[1:2], "".join(toks[2:]).lower()]).strip()
    try:
        if rtype == 1 and len(toks) == 1:
            return str(ipaddress.IPv4Address(toks[0]))
        if rtype == 28 and len(toks) == 1:
            return str(ipaddress.IPv6Address(toks[0]))
        if rtype in (2, 5, 12, 39) and len(toks) == 1:
            return canonical_name(toks[0])
        if rtype == 15 and len(toks) == 2:
            return f"{int(toks[0])} {canonical_name(toks[1])}"
        if rtype == 6 and len(toks) == 7:
            return " ".join([canonical_name(toks[0]), canonical_name(toks[1]),
                             *(str(int(t)) for t in toks[2:])])
        if rtype == 33 and len(toks) == 4:
            return " ".join([*(str(int(t)) for t in toks[:3]), canonical_name(toks[3])])
        if rtype == 43 and len(toks) >= 4:
            return " ".join([*toks[:3], "".join(toks[3:]).upper()])
        if rtype == 48 and len(toks) >= 4:
            return " ".join([*toks[:3], "".join(toks[3:])])
        if rtype == 46 and len(toks) >= 9:
            return " ".join([toks[0].upper(), *toks[1:7], canonical_name(toks[7]), "".join(toks[8:])])
        if rtype == 50 and len(toks) >= 5:
            return " ".join([*toks[:4], toks[4].lower(), *(t.upper() for t in toks[5:])])
        if rtype == 47 and toks:
            return " ".join([canonical_name(toks[0]), *(t.upper() for t in toks[1:])])
    except ValueError:
        pass
    return " ".join(toks)


# --- unified cache ---------------------------------------------------------

@dataclass(frozen=True)
class CacheRecord:
    name: DnsName
    rclass: int
    rtype: int
    ttl: int
    rdata: str

    @classmethod
    def make(cls, owner: str | DnsName, rtype: str | int, rdata: str, ttl: int = 0,
             rclass: str | int = 1) -> "CacheRecord":
        t = type_code(rtype)
        n = owner if isinstance(owner, DnsName) else DnsName.from_text(owner)
        return cls(n.lower(), class_code(rclass), t, int(ttl), canonical_rdata(t, rdata))

    @property
    def key(self) -> tuple[str, int, str]:
        """Comparison identity: (NAME, TYPE, RDATA)."""
        return (self.name.to_text(), self.rtype, self.rdata)

    def to_document(self) -> dict:
        return {"name": self.name.to_text(), "class": class_text(self.rclass),
                "type": type_text(self.rtype), "ttl": str(self.ttl), "rdata": self.rdata}


class UnifiedCache:
    """Cache contents keyed by owner name. Exact duplicate records are folded."""

    def __init__(self, records: Iterable[CacheRecord] = (), diagnostics: Iterable[str] = (),
                 summary: Optional[Mapping[str, Any]] = None):
        entries: dict[str, list[CacheRecord]] = {}
        seen: set[CacheRecord] = set()
        for r in records:
            if r in seen:
                continue
            seen.add(r)
            entries.setdefault(r.name.to_text(), []).append(r)
        self.entries: dict[str, tuple[CacheRecord, ...]] = {k: tuple(v) for k, v in entries.items()}
        self.diagnostics: tuple[str, ...] = tuple(diagnostics)
        self.summary: dict[str, Any] = dict(summary or {})

    def records(self) -> list[CacheRecord]:
        return [r for rs in self.entries.values() for r in rs]

    def key_set(self) -> frozenset[tuple[str, int, str]]:
        return frozenset(r.key for r in self.records())

    def __len__(self) -> int:
        return sum(len(v) for v in self.entries.values())

    def __eq__(self, other: object) -> bool:
        return isinstance(other, UnifiedCache) and self.entries == other.entries

    def __repr__(self) -> str:
        return f"UnifiedCache({len(self)} records, {len(self.entries)} names)"

    def get(self, owner: str) -> tuple[CacheRecord, ...]:
        return self.entries.get(canonical_name(owner), ())

    def canonicalize(self) -> "UnifiedCache":
        return UnifiedCache((CacheRecord.make(r.name, r.rtype, r.rdata, r.ttl, r.rclass)
                             for r in self.records()), self.diagnostics, self.summary)

    def to_document(self) -> dict:
        return {k: [r.to_document() for r in v] for k, v in self.entries.items()}

    @classmethod
    def from_document(cls, doc: Mapping[str, Sequence[Mapping[str, str]]]) -> "UnifiedCache":
        return cls(CacheRecord.make(r["name"], r["type"], r["rdata"], int(r["ttl"]), r["class"])
                   for rs in doc.values() for r in rs)

    def dumps(self) -> str:
        return json.dumps(self.to_document(), indent=4) + "\n"


# --- BIND ------------------------------------------------------------------

_BIND_SECTIONS = {"authanswer", "answer", "glue", "additional", "authauthority",
                  "authority", "pending-additional", "pending-answer"}


def _is_class(tok: str) -> bool:
    u = tok.upper()
    return u in RCLASSES or (u.startswith("CLASS") and u[5:].isdigit())


def _is_type(tok: str) -> bool:
    try:
        type_code(tok)
        return True
    except KeyError:
        return False


def parse_bind_cache(text: str) -> UnifiedCache:
    """rndc dumpdb output. Owner-less lines inherit the previous owner."""
    records: list[CacheRecord] = []
    diags: list[str] = []
    summary: dict[str, Any] = {}
    owner: Optional[str] = None
    pending: Optional[tuple[int, bool, list[str]]] = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        if raw.startswith("; Address database dump"):
            summary["address_database"] = "dropped"
            break
        stripped = raw.strip()
        if pending is None:
            if not stripped:
                continue
            if stripped.startswith(";"):
                word = stripped[1:].strip()
                if word in _BIND_SECTIONS:
                    summary.setdefault("sections", []).append(word)
                continue
            if stripped.startswith("$DATE"):
                summary["date"] = stripped.split()[1] if len(stripped.split()) > 1 else ""
                continue
            if stripped.startswith("$"):
                continue
            start, inherit, toks = lineno, raw[0].isspace(), tokenize(raw)[0]
        else:
            start, inherit, toks = pending[0], pending[1], pending[2] + tokenize(raw)[0]
        depth = toks.count("(") - toks.count(")")
        if depth > 0:
            pending = (start, inherit, toks)
            continue
        pending = None
        toks = [t for t in toks if t not in "()"]
        rec_owner = owner
        if not inherit:
            if not toks:
                continue
            rec_owner = toks.pop(0)
        if rec_owner is None:
            diags.append(f"line {start}: record without owner skipped")
            continue
        if not toks or not _is_int(toks[0]):
            diags.append(f"line {start}: skipped unparseable line {stripped!r}")
            continue
        ttl = int(toks.pop(0))
        if toks and _is_class(toks[0]):
            rclass = class_code(toks.pop(0))
        else:
            rclass = 1
            diags.append(f"line {start}: class missing, inferred IN")
        if not toks or not _is_type(toks[0]):
            diags.append(f"line {start}: unknown record type in {stripped!r}")
            continue
        rtype = type_code(toks.pop(0))
        try:
            records.append(CacheRecord.make(rec_owner, rtype, " ".join(toks), ttl, rclass))
        except ValueError as exc:
            diags.append(f"line {start}: {exc}")
            continue
        owner = rec_owner
    if pending is not None:
        diags.append(f"line {pending[0]}: unterminated parentheses")
    return UnifiedCache(records, diags, summary)


# --- Unbound ---------------------------------------------------------------

def parse_unbound_cache(text: str) -> UnifiedCache:
    """unbound-control dump_cache output; only the RRset section becomes entries."""
    lines = text.splitlines()
    diags: list[str] = []
    summary: dict[str, Any] = {}
    try:
        start = next(i for i, l in enumerate(lines) if l.strip() == "START_RRSET_CACHE")
    except StopIteration:
        return UnifiedCache((), ["no START_RRSET_CACHE marker"], summary)
    rows: list[list] = []  # [lineno, owner, ttl, class, type, tokens]
    ended = False
    for i in range(start + 1, len(lines)):
        raw = lines[i]
        stripped = raw.strip()
        if stripped == "END_RRSET_CACHE":
            ended = True
            break
        if not stripped or stripped.startswith(";"):
            continue
        toks = tokenize(raw)[0]
        if raw[0].isspace():
            if rows:
                rows[-1][5].extend(toks)
            continue
        if len(toks) < 4 or not _is_int(toks[1]) or not _is_class(toks[2]) or not _is_type(toks[3]):
            diags.append(f"line {i + 1}: skipped unparseable line {stripped!r}")
            continue
        rows.append([i + 1, toks[0], int(toks[1]), class_code(toks[2]), type_code(toks[3]), toks[4:]])
    if not ended:
        diags.append("truncated dump: END_RRSET_CACHE missing")
    msgs = 0
    in_msg = False
    for l in lines:
        s = l.strip()
        if s == "START_MSG_CACHE":
            in_msg = True
        elif s == "END_MSG_CACHE":
            in_msg = False
        elif in_msg and s.startswith("msg "):
            msgs += 1
    summary["message_cache_entries"] = msgs
    records = []
    for lineno, owner, ttl, rclass, rtype, toks in rows:
        try:
            records.append(CacheRecord.make(owner, rtype, " ".join(toks), ttl, rclass))
        except ValueError as exc:
            diags.append(f"line {lineno}: {exc}")
    return UnifiedCache(records, diags, summary)


# --- PowerDNS --------------------------------------------------------------

def parse_powerdns_cache(text: str) -> UnifiedCache:
    """rec_control dump-cache output; negative and packet caches are only counted."""
    records: list[CacheRecord] = []
    diags: list[str] = []
    counts = {"negcache_entries": 0, "packet_cache_entries": 0}
    section = "main"
    for lineno, raw in enumerate(text.splitlines(), 1):
        stripped = raw.strip()
        if not stripped:
            continue
        if stripped.startswith(";"):
            low = stripped.lower()
            if "negcache" in low:
                section = "neg"
            elif "packet cache" in low:
                section = "packet"
            elif "record cache" in low:
                section = "main"
            continue
        if section == "neg":
            counts["negcache_entries"] += 1
            continue
        if section == "packet":
            counts["packet_cache_entries"] += 1
            continue
        toks = tokenize(raw)[0]
        if len(toks) < 3:
            diags.append(f"line {lineno}: skipped unparseable line {stripped!r}")
            continue
        owner, rest = toks[0], toks[1:]
        ttls = []
        while rest and _is_int(rest[0]):
            ttls.append(int(rest.pop(0)))
        rclass = class_code(rest.pop(0)) if rest and _is_class(rest[0]) else 1
        if not ttls or not rest or not _is_type(rest[0]):
            diags.append(f"line {lineno}: skipped unparseable line {stripped!r}")
            continue
        rtype = type_code(rest.pop(0))
        try:
            records.append(CacheRecord.make(owner, rtype, " ".join(rest), ttls[0], rclass))
        except ValueError as exc:
            diags.append(f"line {lineno}: {exc}")
    return UnifiedCache(records, diags, counts)


# --- Technitium ------------------------------------------------------------

_TRAILING_COMMA = re.compile(r",(\s*[}\]])")
_LEADING_INT = re.compile(r"\s*(\d+)")

_TECHNITIUM_FIELDS: dict[int, tuple[str, ...]] = {
    1: ("ipAddress",), 28: ("ipAddress",), 2: ("nameServer",), 5: ("cname",),
    12: ("ptrName",), 39: ("dname",), 15: ("preference", "exchange"),
    6: ("primaryNameServer", "responsiblePerson", "serial", "refresh", "retry", "expire", "minimum"),
    33: ("priority", "weight", "port", "target"),
}


def _technitium_rdata(rtype: int, rdata: Mapping[str, Any]) -> str:
    fields = _TECHNITIUM_FIELDS.get(rtype)
    if fields and all(f in rdata for f in fields):
        return " ".join(str(rdata[f]) for f in fields)
    if rtype in (16, 99) and "text" in rdata:
        t = str(rdata["text"])
        return t if t.startswith('"') else '"' + t.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if "value" in rdata:
        return str(rdata["value"])
    vals = [str(v) for k, v in rdata.items() if k not in ("parentSideTtl",)]
    return " ".join(vals)


def parse_technitium_cache(text: str) -> UnifiedCache:
    """HTTP API cache listing (JSON, trailing commas tolerated)."""
    if not text.strip():
        return UnifiedCache((), ["empty document"])
    try:
        doc = json.loads(_TRAILING_COMMA.sub(r"\1", text))
    except json.JSONDecodeError as exc:
        raise CacheParseError(f"malformed Technitium dump: {exc}") from exc
    if not isinstance(doc, dict):
        raise CacheParseError("Technitium dump must be a JSON object")
    records: list[CacheRecord] = []
    diags: list[str] = []
    for key, items in doc.items():
        if not isinstance(items, list):
            raise CacheParseError(f"entry {key!r} is not a list")
        for item in items:
            try:
                rtype = type_code(item["type"])
                ttl_m = _LEADING_INT.match(str(item.get("ttl", "0")))
                ttl = int(ttl_m.group(1)) if ttl_m else 0
                rdata = item.get("rData", {})
                text_rdata = _technitium_rdata(rtype, rdata if isinstance(rdata, dict) else {"value": rdata})
                records.append(CacheRecord.make(item.get("name", key), rtype, text_rdata, ttl,
                                                item.get("class", "IN")))
            except (KeyError, ValueError, TypeError) as exc:
                diags.append(f"entry {key!r}: skipped ({exc})")
    return UnifiedCache(records, diags)


def parse_unified_cache(text: str) -> UnifiedCache:
    return UnifiedCache.from_document(json.loads(text)) if text.strip() else UnifiedCache()


CACHE_PARSERS: dict[str, Callable[[str], UnifiedCache]] = {
    "bind": parse_bind_cache,
    "unbound": parse_unbound_cache,
    "powerdns": parse_powerdns_cache,
    "technitium": parse_technitium_cache,
    "unified": parse_unified_cache,
}


# --- dump writers (used by the reference resolver) --------------------------

def _grouped(records: Iterable[CacheRecord]) -> list[tuple[str, list[CacheRecord]]]:
    out: dict[str, list[CacheRecord]] = {}
    for r in records:
        out.setdefault(r.name.to_text(), []).append(r)
    return list(out.items())


def write_bind_dump(records: Iterable[CacheRecord], date: str = "20260101000000") -> str:
    lines = ["; Start view _default", ";", "; Cache dump of view '_default' (cache _default)",
             ";", f"$DATE {date}", "; authanswer"]
    for owner, rs in _grouped(records):
        for i, r in enumerate(rs):
            head = owner if i == 0 else " " * 8
            lines.append(f"{head}\t{r.ttl}\t{class_text(r.rclass)} {type_text(r.rtype)}\t{r.rdata}")
    lines += ["; Address database dump", ";"]
    return "\n".join(lines) + "\n"


def write_unbound_dump(records: Iterable[CacheRecord]) -> str:
    lines = ["START_RRSET_CACHE"]
    for owner, rs in _grouped(records):
        lines.append(f";rrset {rs[0].ttl} {len(rs)} 0 0 0")
        lines += [f"{owner}\t{r.ttl}\t{class_text(r.rclass)}\t{type_text(r.rtype)}\t{r.rdata}" for r in rs]
    lines += ["END_RRSET_CACHE", "START_MSG_CACHE", "END_MSG_CACHE", "EOF"]
    return "\n".join(lines) + "\n"


def write_powerdns_dump(records: Iterable[CacheRecord]) -> str:
    lines = ["; main record cache dump follows", ";"]
    lines += [f"{r.name.to_text()} {r.ttl} {r.ttl} {class_text(r.rclass)} {type_text(r.rtype)} {r.rdata}"
              " ; (Indeterminate) auth=0" for r in records]
    lines += ["; negcache dump follows", ";"]
    return "\n".join(lines) + "\n"


def _technitium_fields(r: CacheRecord) -> dict:
    fields = _TECHNITIUM_FIELDS.get(r.rtype)
    toks = r.rdata.split(" ")
    if fields and len(toks) == len(fields):
        return dict(zip(fields, toks))
    if r.rtype in (16, 99):
        return {"text": r.rdata}
    return {"value": r.rdata}


def write_technitium_dump(records: Iterable[CacheRecord]) -> str:
    doc = {}
    for owner, rs in _grouped(records):
        key = owner.rstrip(".") or "."
        doc[key] = [{"name": key, "type": type_text(r.rtype), "ttl": f"{r.ttl} ({r.ttl} sec)",
                     "rData": _technitium_fields(r), "dnssecStatus": "Disabled"} for r in rs]
    return json.dumps(doc, indent=4) + "\n"


def write_unified_dump(records: Iterable[CacheRecord]) -> str:
    return UnifiedCache(records).dumps()


DUMP_WRITERS: dict[str, Callable[[Iterable[CacheRecord]], str]] = {
    "bind": write_bind_dump,
    "unbound": write_unbound_dump,
    "powerdns": write_powerdns_dump,
    "technitium": write_technitium_dump,
    "unified": write_unified_dump,
}


# --- logs ------------------------------------------------------------------

@dataclass(frozen=True)
class LogEvent:
    key: str
    line: str
    timestamp: Optional[str] = None


DEFAULT_LOG_PATTERNS: tuple[tuple[str, str], ...] = (
    ("CACHE_LOOKUP", r"cache lookup"),
    ("QUERY", r"\bquery\b|sending packet"),
    ("SANITIZE_RECORD", r"sanitize|scrub|discard"),
)


def compile_patterns(patterns: Iterable[tuple[str, str | re.Pattern]]) -> list[tuple[str, re.Pattern]]:
    return [(k, p if isinstance(p, re.Pattern) else re.compile(p)) for k, p in patterns]


def match_log_events(text: str, patterns: Iterable[tuple[str, str | re.Pattern]] = DEFAULT_LOG_PATTERNS
                     ) -> list[LogEvent]:
    """First matching pattern names the event; a ``ts`` group, if any, supplies the timestamp."""
    compiled = compile_patterns(patterns)
    out = []
    for line in text.splitlines():
        for key, pat in compiled:
            m = pat.search(line)
            if m:
                ts = m.groupdict().get("ts")
                out.append(LogEvent(key, line, ts))
                break
    return out


def load_log_patterns(path: str) -> Any:
    """Read ``{resolver: [[KEY, regex], ...]}`` or a bare ``[[KEY, regex], ...]`` list."""
    import yaml

    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if isinstance(doc, dict):
        return {name: [tuple(p) for p in pats] for name, pats in doc.items()}
    return [tuple(p) for p in doc]


# --- traffic ---------------------------------------------------------------

@dataclass(frozen=True)
class Packet:
    direction: str
    timestamp: float
    octets: bytes


@dataclass(frozen=True)
class TrafficSummary:
    resolver_query_count: int = 0
    bytes_resolver_to_client: int = 0
    bytes_ns_to_resolver: int = 0
    max_response_size: int = 0
    timed_out: bool = False
    resolution_time: Optional[float] = None


def summarize_traffic(packets: Iterable[Packet], timed_out: bool = False,
                      timeout: Optional[float] = None) -> TrafficSummary:
    """Counts and sizes for one case; a timed-out case resolves in ``timeout``."""
    count = to_client = from_ns = biggest = 0
    first_query: Optional[float] = None
    last_reply: Optional[float] = None
    for p in packets:
        size = len(p.octets)
        if p.direction == RESOLVER_TO_NS:
            count += 1
        elif p.direction == NS_TO_RESOLVER:
            from_ns += size
            biggest = max(biggest, size)
        elif p.direction == RESOLVER_TO_CLIENT:
            to_client += size
            last_reply = p.timestamp
        elif p.direction == CLIENT_TO_RESOLVER and first_query is None:
            first_query = p.timestamp
    if timed_out and timeout is not None:
        elapsed: Optional[float] = timeout
    elif first_query is not None and last_reply is not None:
        elapsed = max(0.0, last_reply - first_query)
    else:
        elapsed = None
    return TrafficSummary(count, to_client, from_ns, biggest, timed_out, elapsed)


# --- trace records ---------------------------------------------------------

@dataclass(frozen=True)
class TraceRecord:
    case_id: int
    resolver: str
    seed: int = 0
    mode: str = ""
    response: Optional[bytes] = None
    cache: Optional[UnifiedCache] = field(default=None, compare=False)
    log_events: tuple[LogEvent, ...] = ()
    traffic: TrafficSummary = TrafficSummary()
    alive: bool = True
    diagnostics: tuple[str, ...] = ()

    __test__ = False

    @property
    def timed_out(self) -> bool:
        return self.traffic.timed_out

    @property
    def resolver_response(self) -> Optional[DnsMessage]:
        if self.response is None:
            return None
        try:
            return decode_message(self.response)
        except WireError:
            return None

    def log_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for e in self.log_events:
            out[e.key] = out.get(e.key, 0) + 1
        return out

    def to_record(self) -> dict:
        return {
            "case_id": self.case_id,
            "resolver": self.resolver,
            "seed": self.seed,
            "mode": self.mode,
            "response": None if self.response is None else self.response.hex(),
            "cache": None if self.cache is None else self.cache.to_document(),
            "cache_diagnostics": [] if self.cache is None else list(self.cache.diagnostics),
            "cache_summary": {} if self.cache is None else self.cache.summary,
            "log_events": [[e.key, e.line, e.timestamp] for e in self.log_events],
            "traffic": asdict(self.traffic),
            "alive": self.alive,
            "diagnostics": list(self.diagnostics),
        }

    @classmethod
    def from_record(cls, r: Mapping[str, Any]) -> "TraceRecord":
        cache = None
        if r.get("cache") is not None:
            cache = UnifiedCache.from_document(r["cache"])
            cache = UnifiedCache(cache.records(), r.get("cache_diagnostics", ()), r.get("cache_summary"))
        return cls(
            r["case_id"], r["resolver"], r.get("seed", 0), r.get("mode", ""),
            None if r.get("response") is None else bytes.fromhex(r["response"]),
            cache,
            tuple(LogEvent(*e) for e in r.get("log_events", ())),
            TrafficSummary(**r["traffic"]) if "traffic" in r else TrafficSummary(),
            r.get("alive", True),
            tuple(r.get("diagnostics", ())),
        )
