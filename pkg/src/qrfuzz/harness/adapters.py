"""Resolver adapters: the control surface the campaign runner drives for each resolver."""

from __future__ import annotations

import shlex
import subprocess
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

from ..traces import (
    CACHE_PARSERS, CLIENT_TO_RESOLVER, DEFAULT_LOG_PATTERNS, DUMP_WRITERS, RESOLVER_TO_CLIENT,
    CacheParseError, CacheRecord, Packet, UnifiedCache,
)
from ..wire import DnsName, Flags, WireError, decode_message, encode_message
from .resolver import Quirks, ReferenceResolver
from .servers import AttackerServer, DnsSocketServer, InProcessNetwork, LocalizedHierarchy, build_fabric, udp_exchange
from .zones import ATTACKER_ADDRESS, ZoneConfig


class AdapterError(RuntimeError):
    pass


@dataclass(frozen=True)
class Capabilities:
    cache_dump: bool = True
    log_access: bool = True


@dataclass
class QueryOutcome:
    response: Optional[bytes]
    packets: list[Packet] = field(default_factory=list)
    timed_out: bool = False


@dataclass
class UnitEnvironment:
    """Per-unit network fabric: attacker server plus the localized hierarchy."""

    unit_id: int
    mode: str
    base_domain: DnsName
    zones: ZoneConfig
    network: InProcessNetwork
    attacker: AttackerServer
    hierarchy: LocalizedHierarchy
    listen_host: str = "127.0.0.1"
    listen_port: int = 0
    _socket_server: Optional[DnsSocketServer] = None

    @classmethod
    def create(cls, unit_id: int, mode: str, base_domain: DnsName, zones: Optional[ZoneConfig] = None,
               attacker_address: str = ATTACKER_ADDRESS) -> "UnitEnvironment":
        zones = zones or ZoneConfig.default()
        net, attacker, hierarchy = build_fabric(zones, base_domain, attacker_address)
        return cls(unit_id, mode, base_domain, zones, net, attacker, hierarchy)

    def socket_server(self) -> DnsSocketServer:
        """Real UDP/TCP listener answering as attacker server and localized hierarchy."""
        if self._socket_server is None:
            def handle(octets: bytes, tcp: bool):
                if self.attacker.owns(octets):
                    return self.attacker.handle(octets, tcp)
                return self.hierarchy.answer(octets)
            self._socket_server = DnsSocketServer(handle, self.listen_host, self.listen_port).start()
        return self._socket_server

    def close(self) -> None:
        if self._socket_server is not None:
            self._socket_server.stop()
            self._socket_server = None


class ResolverAdapter:
    name: str = "resolver"
    capabilities: Capabilities = Capabilities()
    log_patterns: Sequence = DEFAULT_LOG_PATTERNS

    def start(self) -> None:
        pass

    def stop(self) -> None:
        pass

    def reset(self) -> None:
        raise NotImplementedError

    def query(self, octets: bytes, timeout: float) -> QueryOutcome:
        raise NotImplementedError

    def dump_cache(self) -> Optional[UnifiedCache]:
        return None

    def fetch_logs(self) -> str:
        return ""

    def liveness(self) -> bool:
        return True


def check_liveness(adapter: ResolverAdapter) -> bool:
    try:
        return bool(adapter.liveness())
    except Exception:
        return False


class ReferenceAdapter(ResolverAdapter):
    """Drives a ReferenceResolver; dumps are rendered in a product format and parsed back."""

    def __init__(self, name: str, env: UnitEnvironment, quirks: Quirks = Quirks(),
                 dump_format: str = "unified", dump: bool = True):
        if dump_format not in DUMP_WRITERS:
            raise AdapterError(f"unknown dump format {dump_format!r}")
        self.name = name
        self.env = env
        self.quirks = quirks
        self.dump_format = dump_format
        self.capabilities = Capabilities(cache_dump=dump, log_access=True)
        self.resolver = ReferenceResolver(env.network, env.mode, env.base_domain, quirks, name)

    def start(self) -> None:
        self.resolver.restart()

    def reset(self) -> None:
        self.resolver.reset()

    def query(self, octets: bytes, timeout: float) -> QueryOutcome:
        journal = [Packet(CLIENT_TO_RESOLVER, time.monotonic(), octets)]
        resp = self.resolver.handle(octets, journal)
        if resp is not None:
            journal.append(Packet(RESOLVER_TO_CLIENT, time.monotonic(), resp))
        return QueryOutcome(resp, journal, resp is None)

    def dump_text(self) -> str:
        return DUMP_WRITERS[self.dump_format](self.resolver.cache_records())

    def dump_cache(self) -> Optional[UnifiedCache]:
        if not self.capabilities.cache_dump:
            return None
        return CACHE_PARSERS[self.dump_format](self.dump_text())

    def fetch_logs(self) -> str:
        return "\n".join(self.resolver.log)

    def liveness(self) -> bool:
        return self.resolver.alive


class MockAdapter(ResolverAdapter):
    """Scriptable stand-in: fixed latency, silence, or exit on the next query."""

    def __init__(self, name: str = "mock", latency: float = 0.0, never_answer: bool = False,
                 exit_on_next: bool = False, cache_dump: bool = True):
        self.name = name
        self.latency = latency
        self.never_answer = never_answer
        self.exit_on_next = exit_on_next
        self.capabilities = Capabilities(cache_dump=cache_dump, log_access=True)
        self.alive = False
        self.cache: list[CacheRecord] = []
        self.log: list[str] = []
        self.queries = 0

    def start(self) -> None:
        self.alive = True
        self.cache, self.log = [], []

    def reset(self) -> None:
        self.cache, self.log = [], []

    def query(self, octets: bytes, timeout: float) -> QueryOutcome:
        journal = [Packet(CLIENT_TO_RESOLVER, time.monotonic(), octets)]
        self.queries += 1
        if not self.alive:
            return QueryOutcome(None, journal, True)
        if self.exit_on_next:
            self.alive = False
            return QueryOutcome(None, journal, True)
        if self.never_answer:
            time.sleep(timeout)
            return QueryOutcome(None, journal, True)
        if self.latency:
            time.sleep(self.latency)
        try:
            msg = decode_message(octets)
        except WireError:
            return QueryOutcome(None, journal, True)
        self.log.append("cache lookup")
        if msg.questions:
            q = msg.questions[0]
            self.cache.append(CacheRecord.make(q.qname, "A", "192.0.2.1", 60))
        resp = encode_message(msg.__class__.build(msg.txid, Flags(qr=1, rd=msg.flags.rd, ra=1),
                                                  msg.questions))
        journal.append(Packet(RESOLVER_TO_CLIENT, time.monotonic(), resp))
        return QueryOutcome(resp, journal, False)

    def dump_cache(self) -> Optional[UnifiedCache]:
        return UnifiedCache(self.cache) if self.capabilities.cache_dump else None

    def fetch_logs(self) -> str:
        return "\n".join(self.log)

    def liveness(self) -> bool:
        return self.alive


class ExternalAdapter(ResolverAdapter):
    """Out-of-process resolver controlled through shell command templates.

    ``commands`` may hold ``start``, ``stop``, ``reset``, ``dump_cache``,
    ``fetch_logs``, ``liveness`` and ``process_list``; ``{name}`` and
    ``{unit}`` are substituted. Liveness prefers a process-list check for
    ``process_name`` when configured.
    """

    def __init__(self, name: str, query_address: tuple[str, int], env: Optional[UnitEnvironment] = None,
                 commands: Optional[Mapping[str, str]] = None, capabilities: Capabilities = Capabilities(),
                 dump_format: str = "bind", log_patterns: Sequence = DEFAULT_LOG_PATTERNS,
                 process_name: Optional[str] = None, command_timeout: float = 30.0):
        self.name = name
        self.query_address = query_address
        self.env = env
        self.commands = dict(commands or {})
        self.capabilities = capabilities
        self.dump_format = dump_format
        self.log_patterns = log_patterns
        self.process_name = process_name
        self.command_timeout = command_timeout
        self.last_dump_error: Optional[str] = None

    @classmethod
    def from_config(cls, cfg: Mapping, env: Optional[UnitEnvironment] = None) -> "ExternalAdapter":
        host, _, port = str(cfg["query_address"]).rpartition(":")
        caps = cfg.get("capabilities", {})
        return cls(cfg["name"], (host or "127.0.0.1", int(port)), env, cfg.get("commands", {}),
                   Capabilities(caps.get("cache_dump", True), caps.get("log_access", True)),
                   cfg.get("dump_format", "bind"),
                   [tuple(p) for p in cfg.get("log_patterns", DEFAULT_LOG_PATTERNS)],
                   cfg.get("process_name"))

    def _run(self, key: str, check: bool = True) -> subprocess.CompletedProcess:
        template = self.commands.get(key)
        if template is None:
            raise AdapterError(f"{self.name}: no {key!r} command configured")
        unit = self.env.unit_id if self.env is not None else 0
        cmd = template.format(name=shlex.quote(self.name), unit=unit)
        try:
            proc = subprocess.run(cmd, shell=True, capture_output=True, text=True, timeout=self.command_timeout)
        except subprocess.TimeoutExpired as exc:
            raise AdapterError(f"{self.name}: {key} timed out") from exc
        if check and proc.returncode != 0:
            raise AdapterError(f"{self.name}: {key} exited {proc.returncode}: {proc.stderr.strip()}")
        return proc

    def start(self) -> None:
        if "start" in self.commands:
            self._run("start")

    def stop(self) -> None:
        if "stop" in self.commands:
            self._run("stop", check=False)

    def reset(self) -> None:
        if "reset" in self.commands:
            self._run("reset")
        else:
            self.stop()
            self.start()

    def query(self, octets: bytes, timeout: float) -> QueryOutcome:
        journal = [Packet(CLIENT_TO_RESOLVER, time.monotonic(), octets)]
        resp = udp_exchange(self.query_address, octets, timeout)
        if self.env is not None and self.env._socket_server is not None:
            journal += self.env._socket_server.drain()
        if resp is not None:
            journal.append(Packet(RESOLVER_TO_CLIENT, time.monotonic(), resp))
        return QueryOutcome(resp, journal, resp is None)

    def dump_cache(self) -> Optional[UnifiedCache]:
        if not self.capabilities.cache_dump or "dump_cache" not in self.commands:
            return None
        try:
            return CACHE_PARSERS[self.dump_format](self._run("dump_cache").stdout)
        except (AdapterError, CacheParseError) as exc:
            self.last_dump_error = str(exc)
            return None

    def fetch_logs(self) -> str:
        if not self.capabilities.log_access or "fetch_logs" not in self.commands:
            return ""
        try:
            return self._run("fetch_logs").stdout
        except AdapterError:
            return ""

    def liveness(self) -> bool:
        if self.process_name:
            if "process_list" not in self.commands:
                self.commands["process_list"] = "ps -eo comm"
            out = self._run("process_list", check=False).stdout.split()
            return self.process_name in out
        if "liveness" in self.commands:
            return self._run("liveness", check=False).returncode == 0
        return True


# --- adapter specs ----------------------------------------------------------

AdapterFactory = Callable[[UnitEnvironment], ResolverAdapter]


def _options(text: str) -> dict[str, str]:
    out = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        k, _, v = item.partition("=")
        out[k] = v
    return out


def parse_adapter_spec(spec: str, index: int = 0) -> AdapterFactory:
    """``reference[:quirk,...,dump=bind,nodump,name=x]``, ``mock[:latency=0.01,never-answer,
    exit-on-next,nodump,name=x]`` or ``external:<config.yaml>``."""
    kind, _, rest = spec.partition(":")
    kind = kind.strip()
    if kind == "reference":
        opts = _options(rest)
        name = opts.pop("name", None) or f"reference{index}"
        dump_format = opts.pop("dump", None) or "unified"
        dump = "nodump" not in opts
        opts.pop("nodump", None)
        quirks = Quirks.parse(f"{k}={v}" if v else k for k, v in opts.items())
        return lambda env: ReferenceAdapter(name, env, quirks, dump_format, dump)
    if kind == "mock":
        opts = _options(rest)
        name = opts.get("name") or f"mock{index}"
        unknown = set(opts) - {"name", "latency", "never-answer", "exit-on-next", "nodump"}
        if unknown:
            raise AdapterError(f"unknown mock options {sorted(unknown)}")
        return lambda env: MockAdapter(name, float(opts.get("latency") or 0.0), "never-answer" in opts,
                                       "exit-on-next" in opts, "nodump" not in opts)
    if kind == "external":
        import yaml

        try:
            with open(rest) as fh:
                cfg = yaml.safe_load(fh)
        except OSError as exc:
            raise AdapterError(f"cannot read adapter config {rest}: {exc}") from exc
        return lambda env: ExternalAdapter.from_config(cfg, env)
    raise AdapterError(f"unknown adapter kind {kind!r} in {spec!r}")
