"""Command-line front end: run, analyze, replay, report."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from collections import Counter
from dataclasses import asdict
from datetime import datetime, timezone
from typing import Any, Iterable, Optional, Sequence

from . import __version__
from .builtin_grammars import QUERY_GRAMMAR_TEXT, RESPONSE_GRAMMAR_TEXT
from .generator import MODES, ConfigurationError, case_to_record
from .harness import (
    AdapterError, CampaignConfig, CampaignIncomplete, UnitEnvironment, ZoneConfig, ZoneConfigError,
    iter_outcomes, parse_adapter_spec,
)
from .oracles import (
    CACHE_POISONING, CRASH, RESOURCE_CONSUMPTION, ClusterConfig, OracleFinding, ResourceOracleConfig,
    cache_oracle, cached_record_rule, crash_findings, resource_flags, subcluster_by_rules,
)
from .traces import TraceRecord
from .wire import DnsName

EXIT_OK, EXIT_USAGE, EXIT_ENV, EXIT_INCOMPLETE = 0, 1, 2, 3

LAYOUT = {
    "manifest": "manifest.json",
    "cases": "cases/cases.jsonl",
    "traces": "traces/traces.jsonl",
    "findings": "findings",
    "report": "report",
}


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise CliError(f"{self.prog}: error: {message}", EXIT_USAGE)


# --- helpers ---------------------------------------------------------------

def _write_jsonl(path: str, rows: Iterable[dict]) -> int:
    os.makedirs(os.path.dirname(path), exist_ok=True)
    n = 0
    with open(path, "w") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
            n += 1
    return n


def _read_jsonl(path: str) -> list[dict]:
    if not os.path.exists(path):
        return []
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _write_json(path: str, obj: Any) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_manifest(out: str) -> dict:
    path = os.path.join(out, LAYOUT["manifest"])
    if not os.path.exists(path):
        raise CliError(f"no campaign at {out} (missing {LAYOUT['manifest']})", EXIT_ENV)
    with open(path) as fh:
        return json.load(fh)


def _load_config_file(path: str) -> dict:
    import yaml

    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_ENV) from exc
    if not isinstance(doc, dict):
        raise CliError(f"config {path} must be a mapping", EXIT_USAGE)
    return {k.replace("-", "_"): v for k, v in doc.items()}


def grammar_versions() -> dict:
    return {"query": hashlib.sha256(QUERY_GRAMMAR_TEXT.encode()).hexdigest()[:16],
            "response": hashlib.sha256(RESPONSE_GRAMMAR_TEXT.encode()).hexdigest()[:16]}


def _config_from_manifest(m: dict) -> CampaignConfig:
    c = dict(m["config"])
    c["adapters"] = tuple(c["adapters"])
    return CampaignConfig(**c)


# --- run -------------------------------------------------------------------

def _campaign_config(args: argparse.Namespace) -> tuple[CampaignConfig, str]:
    conf = _load_config_file(args.config) if args.config else {}
    for key in ("mode", "units", "cases", "seed", "timeout", "zone_file", "out", "sequence_length",
                "base_domain", "mutation_probability"):
        val = getattr(args, key, None)
        if val is not None:
            conf[key] = val
    if args.adapter:
        conf["adapters"] = args.adapter
    out = conf.pop("out", None) or "campaign"
    adapters = conf.pop("adapters", None) or ["reference"]
    if isinstance(adapters, str):
        adapters = [adapters]
    try:
        cfg = CampaignConfig(
            mode=conf.pop("mode", "forward-only"), unit_count=int(conf.pop("units", 25)),
            case_count=int(conf.pop("cases", 100)), timeout=float(conf.pop("timeout", 5.0)),
            base_domain=conf.pop("base_domain", None), adapters=tuple(adapters),
            sequence_length=int(conf.pop("sequence_length", 1)), seed=int(conf.pop("seed", 0)),
            mutation_probability=float(conf.pop("mutation_probability", 0.1)),
            zone_file=conf.pop("zone_file", None))
    except (ConfigurationError, ValueError, TypeError) as exc:
        raise CliError(f"invalid configuration: {exc}", EXIT_USAGE) from exc
    if conf:
        raise CliError(f"unknown configuration keys: {', '.join(sorted(conf))}", EXIT_USAGE)
    return cfg, out


def _roster(cfg: CampaignConfig, zones: ZoneConfig) -> list[dict]:
    env = UnitEnvironment.create(0, cfg.mode, cfg.base, zones)
    out = []
    for i, spec in enumerate(cfg.adapters):
        a = parse_adapter_spec(spec, i)(env)
        out.append({"name": a.name, "spec": spec, "capabilities": asdict(a.capabilities)})
    names = [r["name"] for r in out]
    if len(set(names)) != len(names):
        raise CliError(f"adapter names must be unique: {names}", EXIT_USAGE)
    return out


def cmd_run(args: argparse.Namespace) -> int:
    cfg, out = _campaign_config(args)
    try:
        zones = ZoneConfig.from_file(cfg.zone_file) if cfg.zone_file else ZoneConfig.default()
        problems = zones.validate([cfg.base])
        if problems:
            raise ZoneConfigError("; ".join(problems))
    except ZoneConfigError as exc:
        raise CliError(f"zone configuration error: {exc}", EXIT_ENV) from exc
    try:
        roster = _roster(cfg, zones)
    except (AdapterError, ValueError) as exc:
        raise CliError(f"adapter configuration error: {exc}", EXIT_ENV) from exc

    os.makedirs(out, exist_ok=True)
    manifest = {
        "tool_version": __version__,
        "config": {**asdict(cfg), "adapters": list(cfg.adapters)},
        "grammar_versions": grammar_versions(),
        "roster": roster,
        "started": datetime.now(timezone.utc).isoformat(),
        "layout": LAYOUT,
        "complete": False,
    }
    _write_json(os.path.join(out, LAYOUT["manifest"]), manifest)
    t0 = time.monotonic()
    n_cases = n_traces = 0
    incomplete = None
    os.makedirs(os.path.join(out, "cases"), exist_ok=True)
    os.makedirs(os.path.join(out, "traces"), exist_ok=True)
    with open(os.path.join(out, LAYOUT["cases"]), "w") as cf, open(os.path.join(out, LAYOUT["traces"]), "w") as tf:
        try:
            for outcome in iter_outcomes(cfg, zones=zones):
                for step, case in enumerate(outcome.cases):
                    rec = case_to_record(case)
                    rec["step"] = step
                    cf.write(json.dumps(rec, sort_keys=True) + "\n")
                for tr in outcome.traces:
                    tf.write(json.dumps(tr.to_record(), sort_keys=True) + "\n")
                    n_traces += 1
                n_cases += 1
        except CampaignIncomplete as exc:
            incomplete = str(exc)
        except (AdapterError, ConfigurationError) as exc:
            raise CliError(f"campaign aborted: {exc}", EXIT_ENV) from exc
    wall = time.monotonic() - t0
    manifest.update({
        "finished": datetime.now(timezone.utc).isoformat(),
        "wall_time": wall,
        "cases_per_mode": {cfg.mode: n_cases},
        "case_count": n_cases,
        "trace_count": n_traces,
        "complete": incomplete is None,
    })
    if incomplete:
        manifest["incomplete_reason"] = incomplete
    _write_json(os.path.join(out, LAYOUT["manifest"]), manifest)
    print(f"{n_cases} cases, {n_traces} traces in {wall:.2f}s -> {out}")
    if incomplete:
        print(f"campaign incomplete: {incomplete}", file=sys.stderr)
        return EXIT_INCOMPLETE
    return EXIT_OK


# --- analyze ---------------------------------------------------------------

def load_traces(out: str) -> list[TraceRecord]:
    return [TraceRecord.from_record(r) for r in _read_jsonl(os.path.join(out, LAYOUT["traces"]))]


def default_rules(base: DnsName) -> list:
    b = base.to_text()
    return [
        cached_record_rule("forward-zone NS record", rtype="NS", zone=b),
        cached_record_rule("out-of-bailiwick NS record", rtype="NS",
                           name_pattern=r"^(?!.*" + b.replace(".", r"\.") + r"$)"),
        cached_record_rule("out-of-bailiwick record", name_pattern=r"^(?!.*" + b.replace(".", r"\.") + r"$)"),
        cached_record_rule("in-bailiwick non-answer record", zone=b),
    ]


def _analyze_cache(out: str, m: dict, traces: list[TraceRecord], k: int, seed: int) -> dict:
    capable = [r["name"] for r in m["roster"] if r["capabilities"]["cache_dump"]]
    fdir = os.path.join(out, LAYOUT["findings"])
    if len(capable) < 2:
        reason = f"cache oracle needs 2 dump-capable resolvers, campaign has {len(capable)}"
        _write_jsonl(os.path.join(fdir, "cache.jsonl"), [])
        return {"status": "skipped", "reason": reason}
    by_case: dict[int, list[TraceRecord]] = {}
    for t in traces:
        by_case.setdefault(t.case_id, []).append(t)
    seeds = {cid: ts[0].seed for cid, ts in by_case.items()}
    res = cache_oracle(by_case, capable, ClusterConfig(k, seed=seed), seeds=seeds)
    _write_jsonl(os.path.join(fdir, "cache_vectors.jsonl"),
                 ({"case_id": v.case_id, "roster": list(v.resolvers), "values": list(v.values)}
                  for v in res.vectors))
    _write_jsonl(os.path.join(fdir, "cache.jsonl"), (f.to_record() for f in res.findings))
    clusters = []
    base = _config_from_manifest(m).base
    if res.clusters is not None:
        rules = default_rules(base)
        for c in range(res.clusters.k):
            members = res.clusters.members(c)
            parts, residue = subcluster_by_rules({cid: by_case[cid] for cid in members}, rules)
            clusters.append({
                "cluster": c,
                "size": len(members),
                "sse": float(res.clusters.sse[c]),
                "centroid": [float(x) for x in res.clusters.centroids[c]],
                "subclusters": {label: {"size": len(ids), "exemplar": ids[0] if ids else None}
                                for label, ids in parts.items()},
                "residue": {"size": len(residue), "exemplar": residue[0] if residue else None},
                "exemplar": members[0] if members else None,
            })
    _write_json(os.path.join(fdir, "cache_clusters.json"), {
        "k": res.clusters.k if res.clusters else 0,
        "requested_k": k,
        "assignments": {str(cid): c for cid, c in (res.clusters.assignments.items() if res.clusters else [])},
        "total_sse": res.clusters.total_sse if res.clusters else 0.0,
        "sse_curve": res.curve,
        "clusters": clusters,
        "skipped": {str(k_): v for k_, v in res.skipped.items()},
    })
    return {"status": "ok", "roster": capable, "vectors": len(res.vectors), "skipped": len(res.skipped),
            "findings": len(res.findings), "k": res.clusters.k if res.clusters else 0}


def cmd_analyze(args: argparse.Namespace) -> int:
    m = _load_manifest(args.out)
    if not m.get("complete"):
        raise CliError(f"campaign at {args.out} is incomplete", EXIT_INCOMPLETE)
    traces = load_traces(args.out)
    fdir = os.path.join(args.out, LAYOUT["findings"])
    selected = MODES_ORACLES if args.oracle in (None, "all") else (args.oracle,)
    summary_path = os.path.join(fdir, "analysis.json")
    summary = {}
    if os.path.exists(summary_path):
        with open(summary_path) as fh:
            summary = json.load(fh)
    if "cache" in selected:
        summary["cache"] = _analyze_cache(args.out, m, traces, args.k, args.seed)
    if "resource" in selected:
        try:
            rcfg = ResourceOracleConfig(theta=args.theta)
        except ValueError as exc:
            raise CliError(str(exc), EXIT_USAGE) from exc
        res = resource_flags(traces, rcfg)
        _write_jsonl(os.path.join(fdir, "resource.jsonl"), (f.to_record() for f in res.findings))
        summary["resource"] = {
            "status": "ok", "theta": args.theta, "findings": len(res.findings),
            "thresholds": {f"{r}/{mt}": q for (r, mt), q in res.thresholds.items()},
            "insufficient_data": {f"{r}/{mt}": n for (r, mt), n in res.insufficient.items()},
        }
    if "crash" in selected:
        found = crash_findings(traces)
        _write_jsonl(os.path.join(fdir, "crash.jsonl"), (f.to_record() for f in found))
        summary["crash"] = {"status": "ok", "findings": len(found)}
    _write_json(summary_path, summary)
    for name, s in summary.items():
        detail = s.get("reason") or f"{s.get('findings', 0)} finding(s)"
        print(f"{name}: {s['status']} ({detail})")
    return EXIT_OK


MODES_ORACLES = ("cache", "resource", "crash")


# --- replay ----------------------------------------------------------------

def cmd_replay(args: argparse.Namespace) -> int:
    m = _load_manifest(args.out)
    cfg = _config_from_manifest(m)
    cases = [r for r in _read_jsonl(os.path.join(args.out, LAYOUT["cases"])) if r["id"] == args.case]
    if not cases:
        raise CliError(f"case {args.case} not found in {args.out}", EXIT_USAGE)
    roster = {r["name"]: r["spec"] for r in m["roster"]}
    spec = args.adapter or next(iter(roster.values()))
    spec = roster.get(spec, spec)
    try:
        outcome = next(iter_outcomes(CampaignConfig(**{**asdict(cfg), "unit_count": 1, "adapters": (spec,)}),
                                     case_ids=[args.case]))
    except (AdapterError, ValueError) as exc:
        raise CliError(f"replay failed: {exc}", EXIT_ENV) from exc
    regenerated = [case_to_record(c) for c in outcome.cases]
    identical = all(a["query_octets"] == b["query_octets"] and a["template"] == b["template"]
                    for a, b in zip(cases, regenerated)) and len(cases) == len(regenerated)
    trace = outcome.traces[0]
    rec = trace.to_record()
    rec["replay"] = {"adapter": spec, "case_identical": identical}
    path = os.path.join(args.out, "replays", f"case-{args.case}-{trace.resolver}.json")
    _write_json(path, rec)
    print(json.dumps({"case_id": args.case, "resolver": trace.resolver, "alive": trace.alive,
                      "timed_out": trace.timed_out, "cache_records": None if trace.cache is None else len(trace.cache),
                      "case_identical": identical, "trace": path}))
    return EXIT_OK


# --- report ----------------------------------------------------------------

def coverage_tables(case_rows: Sequence[dict]) -> dict:
    tables: dict[str, Counter] = {}
    mutated = 0
    for r in case_rows:
        p = r.get("provenance", {})
        for side in ("query", "response"):
            for k, v in p.get(side, {}).items():
                tables.setdefault(f"{side}.{k}", Counter())[v] += 1
        for rec in p.get("records", []):
            for k in ("NAME", "TYPE", "RDLENGTH"):
                tables.setdefault(f"record.{k}", Counter())[rec[k]] += 1
        mutated += bool(r.get("mutated"))
    out = {}
    for key, c in sorted(tables.items()):
        total = sum(c.values())
        out[key] = {v: {"count": n, "share": n / total} for v, n in c.most_common()}
    out["mutated"] = {"count": mutated, "share": mutated / len(case_rows) if case_rows else 0.0}
    return out


def build_report(out: str) -> dict:
    m = _load_manifest(out)
    fdir = os.path.join(out, LAYOUT["findings"])
    counts = {}
    for fam, fname in ((CACHE_POISONING, "cache.jsonl"), (RESOURCE_CONSUMPTION, "resource.jsonl"),
                       (CRASH, "crash.jsonl")):
        rows = _read_jsonl(os.path.join(fdir, fname))
        counts[fam] = {"findings": len(rows), "cases": len({r["case_id"] for r in rows}),
                       "by_resolver": dict(Counter(r["resolver"] for r in rows))}
    clusters_path = os.path.join(fdir, "cache_clusters.json")
    clusters = {}
    if os.path.exists(clusters_path):
        with open(clusters_path) as fh:
            clusters = json.load(fh)
    analysis_path = os.path.join(fdir, "analysis.json")
    analysis = {}
    if os.path.exists(analysis_path):
        with open(analysis_path) as fh:
            analysis = json.load(fh)
    wall = m.get("wall_time") or 0.0
    n = m.get("case_count", 0)
    return {
        "campaign": {"mode": m["config"]["mode"], "cases": n, "wall_time": wall,
                     "throughput": {m["config"]["mode"]: (n / wall) if wall > 0 else 0.0},
                     "roster": [r["name"] for r in m["roster"]], "complete": m.get("complete", False)},
        "findings": counts,
        "analysis": analysis,
        "clusters": clusters.get("clusters", []),
        "sse_curve": clusters.get("sse_curve", []),
        "coverage": coverage_tables(_read_jsonl(os.path.join(out, LAYOUT["cases"]))),
    }


def render_markdown(rep: dict) -> str:
    c = rep["campaign"]
    lines = [f"# Campaign report ({c['mode']})", "",
             f"- cases: {c['cases']}", f"- wall time: {c['wall_time']:.2f} s",
             f"- throughput: {next(iter(c['throughput'].values())):.2f} cases/s",
             f"- resolvers: {', '.join(c['roster'])}", "", "## Findings", "",
             "| family | findings | cases |", "|---|---|---|"]
    for fam, v in rep["findings"].items():
        lines.append(f"| {fam} | {v['findings']} | {v['cases']} |")
    for name, s in rep["analysis"].items():
        if s.get("status") == "skipped":
            lines.append(f"\n{name} oracle skipped: {s['reason']}")
    if rep["clusters"]:
        lines += ["", "## Cache clusters", "", "| cluster | size | centroid | sub-clusters | residue | exemplar |",
                  "|---|---|---|---|---|---|"]
        for cl in rep["clusters"]:
            subs = ", ".join(f"{k}: {v['size']} (e.g. {v['exemplar']})" for k, v in cl["subclusters"].items()
                             if v["size"])
            cen = "<" + ",".join(f"{x:g}" for x in cl["centroid"]) + ">"
            lines.append(f"| {cl['cluster']} | {cl['size']} | {cen} | {subs or '-'} | "
                         f"{cl['residue']['size']} | {cl['exemplar']} |")
        lines += ["", "SSE by k: " + ", ".join(f"{k}: {s:.3g}" for k, s in rep["sse_curve"])]
    lines += ["", "## Generated field coverage", ""]
    for key, dist in rep["coverage"].items():
        if key == "mutated":
            lines.append(f"- mutated cases: {dist['count']} ({dist['share']:.3f})")
            continue
        lines.append(f"- {key}: " + ", ".join(f"{v} {d['share']:.3f}" for v, d in dist.items()))
    return "\n".join(lines) + "\n"


def cmd_report(args: argparse.Namespace) -> int:
    rep = build_report(args.out)
    rdir = os.path.join(args.out, LAYOUT["report"])
    _write_json(os.path.join(rdir, "report.json"), rep)
    with open(os.path.join(rdir, "report.md"), "w") as fh:
        fh.write(render_markdown(rep))
    print(os.path.join(rdir, "report.md"))
    return EXIT_OK


# --- entry -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qrfuzz", description="Query-response fuzzing for DNS resolvers.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="verb", parser_class=_Parser)

    r = sub.add_parser("run", help="generate cases and drive them against resolvers")
    r.add_argument("--config", help="YAML or JSON file with the same keys as the flags")
    r.add_argument("--mode", choices=MODES)
    r.add_argument("--units", type=int)
    r.add_argument("--cases", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--timeout", type=float)
    r.add_argument("--adapter", "--adapters", action="append", dest="adapter",
                   help="adapter spec, repeatable (reference[:quirks], mock[:opts], external:cfg.yaml)")
    r.add_argument("--zone-file", dest="zone_file")
    r.add_argument("--base-domain", dest="base_domain")
    r.add_argument("--sequence-length", dest="sequence_length", type=int)
    r.add_argument("--mutation-probability", dest="mutation_probability", type=float)
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("analyze", help="run oracles over a finished campaign")
    a.add_argument("--out", required=True)
    a.add_argument("--oracle", choices=("cache", "resource", "crash", "all"), default="all")
    a.add_argument("--k", type=int, default=7)
    a.add_argument("--theta", type=float, default=0.9)
    a.add_argument("--seed", type=int, default=0, help="clustering seed")
    a.set_defaults(func=cmd_analyze)

    rp = sub.add_parser("replay", help="regenerate one case from its seed and run it again")
    rp.add_argument("--out", required=True)
    rp.add_argument("--case", type=int, required=True)
    rp.add_argument("--adapter", help="roster name or adapter spec")
    rp.set_defaults(func=cmd_replay)

    rep = sub.add_parser("report", help="render the campaign report")
    rep.add_argument("--out", required=True)
    rep.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "verb", None):
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        return args.func(args)
    except CliError as exc:
        print(str(exc), file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
