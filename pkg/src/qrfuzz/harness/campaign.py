"""Campaign runner: parallel units, each driving its resolvers one test case at a time."""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

from ..generator import (
    MODE_DOMAINS, MODES, ConfigurationError, MutationConfig, TestCase, derive_seed, generate_sequence,
)
from ..traces import TraceRecord, match_log_events, summarize_traffic
from ..wire import DnsName, name
from .adapters import AdapterFactory, ResolverAdapter, UnitEnvironment, check_liveness, parse_adapter_spec
from .zones import ZoneConfig


class CampaignIncomplete(RuntimeError):
    def __init__(self, message: str, completed: int):
        super().__init__(message)
        self.completed = completed


class UnitFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class CampaignConfig:
    mode: str = "forward-only"
    unit_count: int = 25
    case_count: int = 100
    timeout: float = 5.0
    base_domain: Optional[str] = None
    adapters: tuple[str, ...] = ("reference",)
    sequence_length: int = 1
    seed: int = 0
    mutation_probability: float = 0.1
    zone_file: Optional[str] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if self.unit_count < 1:
            raise ConfigurationError("unit_count must be at least 1")
        if self.case_count < 0:
            raise ConfigurationError("case_count must be non-negative")
        if not self.timeout > 0:
            raise ConfigurationError("timeout must be positive")
        if self.sequence_length < 1:
            raise ConfigurationError("sequence_length must be at least 1")
        MutationConfig(self.mutation_probability)

    @property
    def base(self) -> DnsName:
        return name(self.base_domain or MODE_DOMAINS[self.mode])

    def case_seed(self, case_id: int) -> int:
        return derive_seed(self.seed, "case", case_id)

    def generate(self, case_id: int) -> list[TestCase]:
        return generate_sequence(self.mode, self.base, self.case_seed(case_id), self.sequence_length,
                                 case_id, MutationConfig(self.mutation_probability))


@dataclass
class CaseOutcome:
    case_id: int
    cases: list[TestCase]
    traces: list[TraceRecord]
    unit: int
    elapsed: float


@dataclass
class UnitState:
    unit_id: int
    env: UnitEnvironment
    adapters: list[ResolverAdapter]
    current_case: Optional[int] = None
    status: dict = field(default_factory=dict)
    failed: Optional[str] = None


def run_case(unit: UnitState, cfg: CampaignConfig, case_id: int,
             generate: Callable[[int], list[TestCase]]) -> CaseOutcome:
    """Arm, query every resolver, collect traces, then reset all resolvers together."""
    started = time.monotonic()
    unit.current_case = case_id
    cases = generate(case_id)
    journals: dict[str, list] = {a.name: [] for a in unit.adapters}
    responses: dict[str, Optional[bytes]] = {a.name: None for a in unit.adapters}
    timed_out: dict[str, bool] = {a.name: False for a in unit.adapters}
    for case in cases:
        unit.env.attacker.arm(case.response_template)
        for a in unit.adapters:
            out = a.query(case.query_octets, cfg.timeout)
            journals[a.name] += out.packets
            responses[a.name] = out.response
            timed_out[a.name] |= out.timed_out
    unit.env.attacker.disarm()

    traces = []
    alive_by = {}
    for a in unit.adapters:
        alive = check_liveness(a)
        alive_by[a.name] = alive
        diags = []
        cache = None
        if a.capabilities.cache_dump:
            if alive:
                cache = a.dump_cache()
                if cache is None:
                    diags.append("cache dump failed")
            else:
                diags.append("cache unavailable: resolver not running")
        logs = a.fetch_logs() if a.capabilities.log_access else ""
        traces.append(TraceRecord(
            case_id, a.name, cases[0].seed, cfg.mode, responses[a.name], cache,
            tuple(match_log_events(logs, a.log_patterns)),
            summarize_traffic(journals[a.name], timed_out[a.name], cfg.timeout),
            alive, tuple(diags)))

    for a in unit.adapters:
        if alive_by[a.name]:
            a.reset()
            continue
        try:
            a.start()
        except Exception as exc:
            raise UnitFailure(f"unit {unit.unit_id}: restarting {a.name} failed: {exc}") from exc
        if not check_liveness(a):
            raise UnitFailure(f"unit {unit.unit_id}: {a.name} unreachable after restart")
        unit.status[a.name] = "restarted"
    unit.current_case = None
    return CaseOutcome(case_id, cases, traces, unit.unit_id, time.monotonic() - started)


def _factories(cfg: CampaignConfig, adapters: Optional[Sequence]) -> list[AdapterFactory]:
    if adapters is None:
        return [parse_adapter_spec(s, i) for i, s in enumerate(cfg.adapters)]
    return [parse_adapter_spec(a, i) if isinstance(a, str) else a for i, a in enumerate(adapters)]


def iter_outcomes(cfg: CampaignConfig, adapters: Optional[Sequence] = None,
                  zones: Optional[ZoneConfig] = None,
                  generate: Optional[Callable[[int], list[TestCase]]] = None,
                  case_ids: Optional[Sequence[int]] = None) -> Iterator[CaseOutcome]:
    """Yield case outcomes in case order while units work through a shared queue.

    Raises CampaignIncomplete at the end if every unit failed before the
    queue drained.
    """
    factories = _factories(cfg, adapters)
    zones = zones or (ZoneConfig.from_file(cfg.zone_file) if cfg.zone_file else ZoneConfig.default())
    problems = zones.validate([cfg.base])
    if problems:
        raise ConfigurationError("zone configuration: " + "; ".join(problems))
    generate = generate or cfg.generate
    ids = list(case_ids) if case_ids is not None else list(range(cfg.case_count))
    todo: "queue.Queue[int]" = queue.Queue()
    for cid in ids:
        todo.put(cid)
    results: "queue.Queue" = queue.Queue()
    n_units = min(cfg.unit_count, max(1, len(ids)))

    def worker(unit_id: int) -> None:
        env = UnitEnvironment.create(unit_id, cfg.mode, cfg.base, zones)
        unit = UnitState(unit_id, env, [])
        try:
            unit.adapters = [f(env) for f in factories]
            for a in unit.adapters:
                a.start()
                if not check_liveness(a):
                    raise UnitFailure(f"unit {unit_id}: {a.name} not live after start")
            while True:
                try:
                    cid = todo.get_nowait()
                except queue.Empty:
                    break
                try:
                    results.put(run_case(unit, cfg, cid, generate))
                except Exception:
                    todo.put(cid)
                    raise
        except Exception as exc:
            unit.failed = str(exc)
            results.put(("failed", unit_id, str(exc)))
        finally:
            for a in unit.adapters:
                try:
                    a.stop()
                except Exception:
                    pass
            env.close()
            results.put(("done", unit_id))

    threads = [threading.Thread(target=worker, args=(u,), daemon=True, name=f"unit-{u}")
               for u in range(n_units)]
    for t in threads:
        t.start()
    order = {cid: i for i, cid in enumerate(ids)}
    pending: dict[int, CaseOutcome] = {}
    nxt, done, failures = 0, 0, []
    while done < n_units:
        item = results.get()
        if isinstance(item, tuple):
            if item[0] == "done":
                done += 1
            else:
                failures.append(item[2])
            continue
        pending[order[item.case_id]] = item
        while nxt in pending:
            yield pending.pop(nxt)
            nxt += 1
    for idx in sorted(pending):
        yield pending.pop(idx)
    for t in threads:
        t.join()
    if nxt < len(ids):
        raise CampaignIncomplete(f"{len(ids) - nxt} case(s) not run; unit failures: {'; '.join(failures)}",
                                 nxt)


def run_campaign(cfg: CampaignConfig, gen: Optional[Callable[[int], list[TestCase]]] = None,
                 adapters: Optional[Sequence] = None, zones: Optional[ZoneConfig] = None
                 ) -> Iterator[TraceRecord]:
    """One TraceRecord per (case, resolver), in case order."""
    for outcome in iter_outcomes(cfg, adapters, zones, gen):
        yield from outcome.traces
