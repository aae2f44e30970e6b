"""Bug oracles: differential cache comparison with clustering, resource thresholds, crashes."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .traces import TraceRecord
from .wire import DnsName, type_code

CACHE_POISONING = "cache-poisoning"
RESOURCE_CONSUMPTION = "resource-consumption"
CRASH = "crash"


class NotComparableError(ValueError):
    pass


class DegenerateKError(ValueError):
    pass


@dataclass(frozen=True)
class OracleFinding:
    family: str
    case_id: int
    resolver: str
    evidence: dict = field(default_factory=dict, compare=False)
    cluster: Optional[int] = None
    seed: Optional[int] = None

    def to_record(self) -> dict:
        return {"family": self.family, "case_id": self.case_id, "resolver": self.resolver,
                "evidence": self.evidence, "cluster": self.cluster, "seed": self.seed}

    @classmethod
    def from_record(cls, r: Mapping[str, Any]) -> "OracleFinding":
        return cls(r["family"], r["case_id"], r["resolver"], r.get("evidence", {}),
                   r.get("cluster"), r.get("seed"))


# --- differential cache vectors --------------------------------------------

@dataclass(frozen=True)
class DiffVector:
    case_id: int
    resolvers: tuple[str, ...]
    values: tuple[int, ...]
    excluded: tuple[str, ...] = ()

    @property
    def is_zero(self) -> bool:
        return not any(self.values)


def diff_values(record_sets: Sequence[frozenset]) -> tuple[int, ...]:
    """values[i] = max over j != i of |R_i minus R_j|."""
    out = []
    for i, ri in enumerate(record_sets):
        out.append(max((len(ri - rj) for j, rj in enumerate(record_sets) if j != i), default=0))
    return tuple(out)


def cache_diff_vector(traces: Sequence[TraceRecord], roster: Optional[Sequence[str]] = None) -> DiffVector:
    """Diff vector over the traces of one case; resolvers without a cache are left out."""
    if not traces:
        raise NotComparableError("no traces")
    by_name = {t.resolver: t for t in traces}
    order = list(roster) if roster is not None else [t.resolver for t in traces]
    present = [r for r in order if r in by_name and by_name[r].cache is not None]
    excluded = tuple(r for r in order if r not in present)
    if len(present) < 2:
        raise NotComparableError(f"case {traces[0].case_id}: {len(present)} cache(s) present, need 2")
    sets = [by_name[r].cache.key_set() for r in present]
    return DiffVector(traces[0].case_id, tuple(present), diff_values(sets), excluded)


# --- bisecting k-means ------------------------------------------------------

@dataclass(frozen=True)
class ClusterConfig:
    k: int = 1
    bisect_trials: int = 10
    seed: int = 0
    max_iter: int = 100

    def __post_init__(self):
        if self.k < 1 or self.bisect_trials < 1:
            raise ValueError("k and bisect_trials must be positive")


@dataclass
class ClusterResult:
    labels: np.ndarray
    centroids: np.ndarray
    sse: np.ndarray
    ids: tuple = ()
    history: tuple[float, ...] = ()  # total SSE after each split, starting at k=1

    @property
    def k(self) -> int:
        return len(self.sse)

    @property
    def total_sse(self) -> float:
        return float(self.sse.sum())

    @property
    def assignments(self) -> dict:
        return {i: int(l) for i, l in zip(self.ids, self.labels)}

    def members(self, cluster: int) -> list:
        return [i for i, l in zip(self.ids, self.labels) if l == cluster]


def _sse(points: np.ndarray) -> float:
    if len(points) == 0:
        return 0.0
    return float(((points - points.mean(axis=0)) ** 2).sum())


def _two_means(points: np.ndarray, rng: np.random.Generator, trials: int,
               max_iter: int) -> Optional[np.ndarray]:
    """Best boolean split (True = second half) over seeded restarts; None if unsplittable."""
    distinct = np.unique(points, axis=0)
    if len(distinct) < 2:
        return None
    best, best_sse = None, math.inf
    for _ in range(trials):
        c = distinct[rng.choice(len(distinct), size=2, replace=False)].astype(float)
        side = None
        for _ in range(max_iter):
            d0 = ((points - c[0]) ** 2).sum(axis=1)
            d1 = ((points - c[1]) ** 2).sum(axis=1)
            new = d1 < d0
            if side is not None and np.array_equal(new, side):
                break
            side = new
            if side.all() or not side.any():
                break
            c = np.stack([points[~side].mean(axis=0), points[side].mean(axis=0)])
        if side is None or side.all() or not side.any():
            continue
        s = _sse(points[~side]) + _sse(points[side])
        if s < best_sse - 1e-12:
            best, best_sse = side, s
    return best


def bisecting_kmeans(vectors: Any, cfg: ClusterConfig, ids: Optional[Sequence] = None) -> ClusterResult:
    """Split the highest-SSE cluster with 2-means until ``cfg.k`` clusters exist.

    Clusters that hold a single distinct point cannot split and are passed
    over. Deterministic for a fixed ``cfg.seed``.
    """
    X = np.asarray(vectors, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = len(X)
    if n == 0:
        raise ValueError("no vectors to cluster")
    if cfg.k > n:
        raise DegenerateKError(f"k={cfg.k} exceeds {n} vectors")
    ids = tuple(ids) if ids is not None else tuple(range(n))
    labels = np.zeros(n, dtype=int)
    sse = [_sse(X)]
    history = [sse[0]]
    rng = np.random.default_rng(cfg.seed)
    unsplittable: set[int] = set()
    while len(sse) < cfg.k:
        candidates = [c for c in np.argsort(-np.asarray(sse), kind="stable") if c not in unsplittable]
        split = None
        for c in candidates:
            idx = np.flatnonzero(labels == c)
            side = _two_means(X[idx], rng, cfg.bisect_trials, cfg.max_iter)
            if side is not None:
                split = (c, idx, side)
                break
            unsplittable.add(int(c))
        if split is None:
            raise DegenerateKError(f"k={cfg.k} exceeds the {len(sse)} distinct points")
        c, idx, side = split
        new = len(sse)
        labels[idx[side]] = new
        sse[c] = _sse(X[labels == c])
        sse.append(_sse(X[labels == new]))
        history.append(float(sum(sse)))
    centroids = np.stack([X[labels == c].mean(axis=0) for c in range(len(sse))])
    return ClusterResult(labels, centroids, np.asarray(sse), ids, tuple(history))


def sse_curve(vectors: Any, k_max: int, cfg: ClusterConfig = ClusterConfig()) -> list[tuple[int, float]]:
    """Total SSE for k = 1..k_max from one split sequence (bisecting splits nest).

    Once no cluster can split further the curve stays flat.
    """
    X = np.asarray(vectors, dtype=float)
    distinct = len(np.unique(X.reshape(len(X), -1), axis=0)) if len(X) else 0
    reachable = max(1, min(k_max, distinct))
    res = bisecting_kmeans(X, ClusterConfig(reachable, cfg.bisect_trials, cfg.seed, cfg.max_iter))
    history = list(res.history) + [res.history[-1]] * (k_max - reachable)
    return [(k + 1, s) for k, s in enumerate(history)]


def relative_drops(curve: Sequence[tuple[int, float]]) -> list[tuple[int, float]]:
    """(k, fractional SSE drop going from k-1 to k) for k >= 2."""
    out = []
    for (_, prev), (k, cur) in zip(curve, curve[1:]):
        out.append((k, (prev - cur) / prev if prev > 0 else 0.0))
    return out


def elbow(curve: Sequence[tuple[int, float]]) -> int:
    drops = relative_drops(curve)
    if not drops:
        return curve[0][0] if curve else 1
    return max(drops, key=lambda kd: kd[1])[0]


# --- sub-clustering by rules -----------------------------------------------

CaseTraces = Sequence[TraceRecord]


@dataclass(frozen=True)
class MatchRule:
    label: str
    predicate: Callable[[CaseTraces], bool]

    def __call__(self, traces: CaseTraces) -> bool:
        return bool(self.predicate(traces))


def cached_record_rule(label: str, rtype: Optional[str | int] = None, zone: Optional[str] = None,
                       name_pattern: Optional[str] = None, rdata_pattern: Optional[str] = None,
                       differing_only: bool = True) -> MatchRule:
    """Match cases where some cache holds a record of this shape.

    With ``differing_only`` the record must be missing from at least one
    other cache, i.e. it contributes to the diff vector.
    """
    t = type_code(rtype) if rtype is not None else None
    z = DnsName.from_text(zone) if zone is not None else None
    npat = re.compile(name_pattern) if name_pattern else None
    rpat = re.compile(rdata_pattern) if rdata_pattern else None

    def matches(r) -> bool:
        return ((t is None or r.rtype == t) and (z is None or r.name.is_subdomain_of(z))
                and (npat is None or npat.search(r.name.to_text()) is not None)
                and (rpat is None or rpat.search(r.rdata) is not None))

    def pred(traces: CaseTraces) -> bool:
        caches = [tr.cache for tr in traces if tr.cache is not None]
        if differing_only:
            common = frozenset.intersection(*(c.key_set() for c in caches)) if caches else frozenset()
        for c in caches:
            for r in c.records():
                if matches(r) and (not differing_only or r.key not in common):
                    return True
        return False

    return MatchRule(label, pred)


def subcluster_by_rules(members: Mapping[Any, CaseTraces], rules: Sequence[MatchRule]
                        ) -> tuple[dict[str, list], list]:
    """First matching rule claims a member; the rest form the residue."""
    parts: dict[str, list] = {r.label: [] for r in rules}
    residue = []
    for cid, traces in members.items():
        for rule in rules:
            if rule(traces):
                parts[rule.label].append(cid)
                break
        else:
            residue.append(cid)
    return parts, residue


@dataclass
class CacheOracleResult:
    roster: tuple[str, ...]
    vectors: list[DiffVector]
    skipped: dict = field(default_factory=dict)  # case id -> reason
    clusters: Optional[ClusterResult] = None
    curve: list = field(default_factory=list)
    findings: list[OracleFinding] = field(default_factory=list)


def cache_oracle(traces_by_case: Mapping[int, CaseTraces], roster: Sequence[str],
                 cfg: ClusterConfig = ClusterConfig(7), k_max: int = 10,
                 seeds: Optional[Mapping[int, int]] = None) -> CacheOracleResult:
    """Diff vectors for every comparable case, then bisecting k-means over them."""
    roster = tuple(roster)
    vectors, skipped = [], {}
    for cid, traces in traces_by_case.items():
        try:
            v = cache_diff_vector(traces, roster)
        except NotComparableError as exc:
            skipped[cid] = str(exc)
            continue
        if v.resolvers != roster:
            skipped[cid] = f"missing cache from {', '.join(v.excluded)}"
            continue
        vectors.append(v)
    result = CacheOracleResult(roster, vectors, skipped)
    if not vectors:
        return result
    X = np.array([v.values for v in vectors], dtype=float)
    distinct = len(np.unique(X, axis=0))
    k = min(cfg.k, distinct)
    result.clusters = bisecting_kmeans(X, ClusterConfig(k, cfg.bisect_trials, cfg.seed, cfg.max_iter),
                                       ids=[v.case_id for v in vectors])
    result.curve = sse_curve(X, k_max, cfg)
    for v, label in zip(vectors, result.clusters.labels):
        for name, val in zip(v.resolvers, v.values):
            if val > 0:
                result.findings.append(OracleFinding(
                    CACHE_POISONING, v.case_id, name,
                    {"diff_vector": list(v.values), "roster": list(v.resolvers), "difference": val},
                    int(label), (seeds or {}).get(v.case_id)))
    return result


# --- resource consumption ---------------------------------------------------

def nearest_rank(values: Sequence[float], theta: float) -> float:
    """Value at rank ceil(theta * N) of the sorted sample."""
    if not values:
        raise ValueError("empty sample")
    n = len(values)
    rank = math.ceil(Fraction(theta).limit_denominator(10 ** 9) * n)
    return sorted(values)[max(rank, 1) - 1]


Extractor = Callable[[TraceRecord], Optional[float]]

DEFAULT_METRICS: dict[str, Extractor] = {
    "resolver_query_count": lambda t: t.traffic.resolver_query_count,
    "max_response_size": lambda t: t.traffic.max_response_size,
    "bytes_resolver_to_client": lambda t: t.traffic.bytes_resolver_to_client,
    "resolution_time": lambda t: t.traffic.resolution_time,
}


def log_metric(key: str) -> Extractor:
    return lambda t: sum(1 for e in t.log_events if e.key == key)


@dataclass(frozen=True)
class ResourceOracleConfig:
    theta: float = 0.9
    metrics: Mapping[str, Extractor] = field(default_factory=lambda: dict(DEFAULT_METRICS))
    min_cases: int = 10
    log_keys: tuple[str, ...] = ("CACHE_LOOKUP", "QUERY")

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"theta {self.theta} outside (0, 1)")

    def all_metrics(self) -> dict[str, Extractor]:
        out = dict(self.metrics)
        for k in self.log_keys:
            out.setdefault(f"log:{k}", log_metric(k))
        return out


@dataclass
class ResourceResult:
    findings: list[OracleFinding]
    thresholds: dict = field(default_factory=dict)  # (resolver, metric) -> quantile
    insufficient: dict = field(default_factory=dict)  # (resolver, metric) -> sample size


def resource_flags(traces: Iterable[TraceRecord], cfg: ResourceOracleConfig = ResourceOracleConfig()
                   ) -> ResourceResult:
    """Flag values strictly above the nearest-rank theta-quantile, per resolver and metric."""
    by_resolver: dict[str, list[TraceRecord]] = {}
    for t in traces:
        by_resolver.setdefault(t.resolver, []).append(t)
    result = ResourceResult([])
    for resolver, ts in by_resolver.items():
        for metric, fn in cfg.all_metrics().items():
            pairs = [(t, v) for t in ts if (v := fn(t)) is not None]
            if len(pairs) < cfg.min_cases:
                result.insufficient[(resolver, metric)] = len(pairs)
                continue
            q = nearest_rank([v for _, v in pairs], cfg.theta)
            result.thresholds[(resolver, metric)] = q
            for t, v in pairs:
                if v > q:
                    result.findings.append(OracleFinding(
                        RESOURCE_CONSUMPTION, t.case_id, resolver,
                        {"metric": metric, "value": v, "quantile": q, "theta": cfg.theta},
                        seed=t.seed))
    return result


# --- crashes ---------------------------------------------------------------

def crash_findings(traces: Iterable[TraceRecord]) -> list[OracleFinding]:
    return [OracleFinding(CRASH, t.case_id, t.resolver, {"alive": False}, seed=t.seed)
            for t in traces if not t.alive]
