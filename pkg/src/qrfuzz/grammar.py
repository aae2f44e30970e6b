"""Probabilistic context-free grammars: representation, parsing, validation, sampling.

Grammar text uses the BNF-with-weights notation::

    <OPCODE> ::= QUERY[.80] | IQUERY[.04] | STATUS[.04]
    <Answer> ::= "" | <Record> | <Record>*2
    <TXID>   ::= (randomly generated 2-byte hex value)

Alternatives without a ``[p]`` annotation share the rule's residual mass
equally. Parenthesised terminals name a value generator registered on the
grammar; bare words and ``""`` are literal terminals.
"""

from __future__ import annotations

import random
import re
from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import accumulate
from typing import Any, Callable, Iterable, Mapping, Optional

from .wire import DnsName

MAX_DEPTH = 64


class GrammarError(ValueError):
    pass


class RunawayDerivationError(GrammarError):
    pass


@dataclass(frozen=True)
class Symbol:
    kind: str  # "terminal" | "nonterminal"
    name: str
    literal: Optional[str] = None
    repeat: int = 1

    @property
    def is_generator(self) -> bool:
        return self.kind == "terminal" and self.name.startswith("(")


@dataclass(frozen=True)
class Alternative:
    sequence: tuple[Symbol, ...]
    probability: Fraction
    annotated: bool = True

    @property
    def label(self) -> str:
        return " ".join(s.name if s.repeat == 1 else f"{s.name}*{s.repeat}" for s in self.sequence)


@dataclass(frozen=True)
class Rule:
    lhs: str
    alternatives: tuple[Alternative, ...]

    def __post_init__(self):
        cum = list(accumulate(float(a.probability) for a in self.alternatives))
        object.__setattr__(self, "_cum", cum)
        object.__setattr__(self, "_is_list", any(
            not a.sequence or any(s.repeat != 1 or s.literal == "" for s in a.sequence)
            for a in self.alternatives))

    @property
    def total(self) -> Fraction:
        return sum((a.probability for a in self.alternatives), Fraction(0))

    @property
    def is_list(self) -> bool:
        """Rules with repeated or empty alternatives expand to lists of sub-derivations."""
        return self._is_list

    def choose(self, rng: random.Random) -> int:
        cum = self._cum
        i = bisect_right(cum, rng.random() * cum[-1])
        return min(i, len(cum) - 1)

    def probabilities(self) -> dict[str, Fraction]:
        return {a.label: a.probability for a in self.alternatives}


@dataclass(frozen=True)
class TerminalGenerator:
    fn: Callable[[random.Random, "SampleContext", "Derivation"], Any]
    after: tuple[str, ...] = ()


@dataclass
class SampleContext:
    seed: int
    base_domain: DnsName = DnsName(())
    queried_name: Optional[DnsName] = None
    queried_type: Optional[int] = None


@dataclass
class Derivation:
    values: dict[str, Any] = field(default_factory=dict)
    choices: dict[str, int] = field(default_factory=dict)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def get(self, key: str, default: Any = None) -> Any:
        return self.values.get(key, default)

    def __contains__(self, key: str) -> bool:
        return key in self.values


@dataclass(frozen=True)
class Violation:
    kind: str  # "probability-sum" | "probability-range" | "dangling" | "unreachable" | "generator"
    rule: str
    message: str


@dataclass
class Grammar:
    start: str
    rules: dict[str, Rule]
    generators: dict[str, TerminalGenerator] = field(default_factory=dict)
    name: str = "grammar"

    def register(self, terminal: str, fn: Callable, after: Iterable[str] = ()) -> None:
        self.generators[terminal] = TerminalGenerator(fn, tuple(after))

    def __getitem__(self, lhs: str) -> Rule:
        return self.rules[lhs]


# --- parsing ---------------------------------------------------------------

_RULE_RE = re.compile(r"^\s*<([^<>]+)>\s*::=(.*)$")
_PROB_RE = re.compile(r"\[\s*([0-9]*\.?[0-9]+)\s*\]\s*$")
_TOKEN_RE = re.compile(r'<([^<>]+)>(?:\*(\d+))?|"([^"]*)"|(\([^()]*(?:\([^()]*\)[^()]*)*\))|([^\s<>"()|]+)')


def _split_alternatives(body: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in body:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "|" and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p.strip() for p in parts]


def _parse_sequence(text: str, lhs: str) -> tuple[Symbol, ...]:
    symbols = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise GrammarError(f"<{lhs}>: cannot parse {text[pos:]!r}")
        nt, rep, quoted, gen, word = m.groups()
        if nt is not None:
            symbols.append(Symbol("nonterminal", nt, repeat=int(rep) if rep else 1))
        elif quoted is not None:
            symbols.append(Symbol("terminal", f'"{quoted}"', literal=quoted))
        elif gen is not None:
            symbols.append(Symbol("terminal", gen))
        else:
            symbols.append(Symbol("terminal", word, literal=word))
        pos = m.end()
    return tuple(symbols)


def _build_rule(lhs: str, body: str) -> Rule:
    raw = [p for p in _split_alternatives(body) if p]
    parsed: list[tuple[tuple[Symbol, ...], Optional[Fraction]]] = []
    for alt in raw:
        m = _PROB_RE.search(alt)
        prob = None
        if m:
            prob = Fraction(m.group(1))
            alt = alt[:m.start()]
        parsed.append((_parse_sequence(alt, lhs), prob))
    annotated = sum((p for _, p in parsed if p is not None), Fraction(0))
    free = [i for i, (_, p) in enumerate(parsed) if p is None]
    share = (Fraction(1) - annotated) / len(free) if free else Fraction(0)
    alts = tuple(
        Alternative(seq, p if p is not None else share, annotated=p is not None)
        for seq, p in parsed
    )
    return Rule(lhs, alts)


def parse_grammar(text: str, name: str = "grammar", start: Optional[str] = None) -> Grammar:
    """Parse grammar text; continuation lines extend the previous rule."""
    bodies: dict[str, list[str]] = {}
    order: list[str] = []
    current: Optional[str] = None
    for line in text.splitlines():
        line = line.split("//", 1)[0].rstrip()
        if not line.strip():
            continue
        m = _RULE_RE.match(line)
        if m:
            current = m.group(1).strip()
            if current in bodies:
                raise GrammarError(f"duplicate rule <{current}>")
            bodies[current] = [m.group(2)]
            order.append(current)
        elif current is None:
            raise GrammarError(f"text before first rule: {line!r}")
        else:
            bodies[current].append(line)
    if not order:
        raise GrammarError("empty grammar")
    rules = {lhs: _build_rule(lhs, " ".join(bodies[lhs])) for lhs in order}
    return Grammar(start=start or order[0], rules=rules, name=name)


# --- validation ------------------------------------------------------------

def validate(g: Grammar, tolerance: float = 1e-9) -> list[Violation]:
    """Return all violations; an empty list means the grammar is usable."""
    out: list[Violation] = []
    if g.start not in g.rules:
        out.append(Violation("dangling", g.start, f"start symbol <{g.start}> has no rule"))
    for lhs, rule in g.rules.items():
        total = rule.total
        if abs(float(total) - 1.0) > tolerance:
            out.append(Violation("probability-sum", lhs,
                                 f"<{lhs}> alternatives sum to {float(total):.6g}"))
        for alt in rule.alternatives:
            if alt.probability <= 0:
                out.append(Violation("probability-range", lhs,
                                     f"<{lhs}> alternative {alt.label!r} has probability {alt.probability}"))
            for sym in alt.sequence:
                if sym.kind == "nonterminal" and sym.name not in g.rules:
                    out.append(Violation("dangling", lhs, f"<{lhs}> references undefined <{sym.name}>"))
                if sym.is_generator and sym.name not in g.generators:
                    out.append(Violation("generator", lhs, f"<{lhs}> terminal {sym.name} has no generator"))
    seen: set[str] = set()
    stack = [g.start] if g.start in g.rules else []
    while stack:
        lhs = stack.pop()
        if lhs in seen:
            continue
        seen.add(lhs)
        for alt in g.rules[lhs].alternatives:
            stack.extend(s.name for s in alt.sequence
                         if s.kind == "nonterminal" and s.name in g.rules)
    for lhs in g.rules:
        if lhs not in seen:
            out.append(Violation("unreachable", lhs, f"<{lhs}> is unreachable from <{g.start}>"))
    return out


# --- sampling --------------------------------------------------------------

_PENDING = object()


def sample(g: Grammar, ctx: SampleContext, symbol: Optional[str] = None,
           rng: Optional[random.Random] = None) -> Derivation:
    """Expand ``symbol`` (default: start) into a derivation.

    All alternative choices are drawn first, then generator terminals are
    evaluated in order, postponing any whose ``after`` dependencies are not
    yet resolved. ``rng`` lets callers share one stream across calls;
    otherwise a stream is seeded from ``ctx.seed``.
    """
    rng = rng if rng is not None else random.Random(ctx.seed)
    root = Derivation()
    pending: list[tuple[Derivation, str, TerminalGenerator]] = []
    _expand(g, symbol or g.start, rng, root, pending, 0)
    while pending:
        for i, (d, key, gen) in enumerate(pending):
            if all(d.values.get(dep, None) is not _PENDING for dep in gen.after):
                break
        else:
            raise GrammarError("cyclic generator dependencies: "
                               + ", ".join(k for _, k, _ in pending))
        d, key, gen = pending.pop(i)
        d.values[key] = gen.fn(rng, ctx, d)
    return root


def _terminal_value(g: Grammar, sym: Symbol, d: Derivation, key: str,
                    pending: list) -> Any:
    if sym.is_generator:
        gen = g.generators.get(sym.name)
        if gen is None:
            return sym.name
        pending.append((d, key, gen))
        return _PENDING
    return sym.literal


def _expand(g: Grammar, lhs: str, rng: random.Random, d: Derivation,
            pending: list, depth: int) -> None:
    if depth > MAX_DEPTH:
        raise RunawayDerivationError(f"derivation deeper than {MAX_DEPTH} at <{lhs}>")
    try:
        rule = g.rules[lhs]
    except KeyError:
        raise GrammarError(f"no rule for <{lhs}>") from None
    idx = rule.choose(rng) if len(rule.alternatives) > 1 else 0
    d.choices[lhs] = idx
    alt = rule.alternatives[idx]
    if rule.is_list:
        items: list[Derivation] = []
        for sym in alt.sequence:
            if sym.kind != "nonterminal":
                continue
            for _ in range(sym.repeat):
                sub = Derivation()
                _expand(g, sym.name, rng, sub, pending, depth + 1)
                items.append(sub)
        d.values[lhs] = items
        return
    terminals = [s for s in alt.sequence if s.kind == "terminal"]
    if len(alt.sequence) == 1 and terminals:
        d.values[lhs] = _terminal_value(g, terminals[0], d, lhs, pending)
        return
    for sym in alt.sequence:
        if sym.kind == "nonterminal":
            for _ in range(sym.repeat):
                _expand(g, sym.name, rng, d, pending, depth + 1)
    if terminals:
        d.values[lhs] = tuple(s.literal for s in terminals)


def alternative_frequencies(g: Grammar, lhs: str, derivations: Iterable[Derivation]) -> dict[str, int]:
    """Count how often each alternative of ``lhs`` was chosen."""
    rule = g.rules[lhs]
    counts = {a.label: 0 for a in rule.alternatives}
    for d in derivations:
        idx = d.choices.get(lhs)
        if idx is not None:
            counts[rule.alternatives[idx].label] += 1
    return counts


def rule_table(g: Grammar) -> Mapping[str, Mapping[str, Fraction]]:
    return {lhs: r.probabilities() for lhs, r in g.rules.items()}
