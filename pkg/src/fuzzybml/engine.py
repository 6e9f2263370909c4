"""Cellular-automaton inference engine over a production-rule base.

Facts and rules are two layers of cells (CELFACT, CELRULE), each cell
carrying three channels: E (established), I (degree) and S (output). Two
incidence matrices link them: ``R_E[i][j] = 1`` when fact ``i`` is a premise
of rule ``j`` and ``R_S[i][j] = 1`` when it is rule ``j``'s conclusion.

Bit vectors and matrix rows/columns are stored as Python ints used as
bitsets; bit ``i`` of a fact vector is fact ``i``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence, TextIO

from .errors import CycleError, RuleBaseError

CONJUNCTIVE = "conjunctive"
DISJUNCTIVE = "disjunctive"


@dataclass(frozen=True)
class Rule:
    id: str
    premises: tuple[str, ...]
    conclusion: str

    def __post_init__(self):
        object.__setattr__(self, "premises", tuple(dict.fromkeys(self.premises)))
        if self.conclusion in self.premises:
            raise RuleBaseError(f"rule {self.id!r}: conclusion {self.conclusion!r} is also a premise")


@dataclass(frozen=True)
class RuleBase:
    facts: tuple[str, ...]
    rules: tuple[Rule, ...]

    def __post_init__(self):
        object.__setattr__(self, "facts", tuple(self.facts))
        object.__setattr__(self, "rules", tuple(self.rules))
        known = set(self.facts)
        ids = set()
        for rule in self.rules:
            if rule.id in ids:
                raise RuleBaseError(f"duplicate rule id {rule.id!r}")
            ids.add(rule.id)
            for label in (*rule.premises, rule.conclusion):
                if label not in known:
                    raise RuleBaseError(f"rule {rule.id!r} uses undeclared fact {label!r}")

    def to_dict(self) -> dict:
        return {
            "facts": list(self.facts),
            "rules": [{"id": r.id, "if": list(r.premises), "then": r.conclusion} for r in self.rules],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "RuleBase":
        try:
            rules = tuple(Rule(r["id"], tuple(r["if"]), r["then"]) for r in data["rules"])
            facts = data.get("facts")
            if facts is None:
                facts = list(dict.fromkeys(f for r in rules for f in (*r.premises, r.conclusion)))
            return cls(tuple(facts), rules)
        except (KeyError, TypeError) as exc:
            raise RuleBaseError(f"malformed rule-base document: {exc}") from exc

    def equivalent(self, other: "RuleBase") -> bool:
        """Same facts and same rules, ignoring order."""
        def norm(rb):
            return (
                frozenset(rb.facts),
                frozenset((r.id, frozenset(r.premises), r.conclusion) for r in rb.rules),
            )
        return norm(self) == norm(other)


def load_rule_base(source: TextIO | str) -> RuleBase:
    if isinstance(source, str):
        with open(source, encoding="utf-8") as fh:
            return RuleBase.from_dict(json.load(fh))
    return RuleBase.from_dict(json.load(source))


# "Si (A) et (B) Alors C" listings

def format_rules(rb: RuleBase) -> str:
    lines = ["Faits : " + " | ".join(rb.facts)]
    for r in rb.rules:
        if r.premises:
            cond = " et ".join(f"({p})" for p in r.premises)
            lines.append(f"{r.id} : Si {cond} Alors {r.conclusion}")
        else:
            lines.append(f"{r.id} : Alors {r.conclusion}")
    return "\n".join(lines) + "\n"


_RULE_LINE = re.compile(r"^(?P<id>\S+)\s*:\s*(?:Si\s+\((?P<cond>.*)\)\s+)?Alors\s+(?P<then>.+?)\s*$")


def parse_rules(text: str) -> RuleBase:
    facts = None
    rules = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("Faits"):
            body = line.split(":", 1)[1].strip()
            facts = tuple(f.strip() for f in body.split(" | ")) if body else ()
            continue
        m = _RULE_LINE.match(line)
        if not m:
            raise RuleBaseError(f"line {lineno}: cannot parse rule {line!r}")
        cond = m.group("cond")
        premises = tuple(p.strip() for p in cond.split(") et (")) if cond is not None else ()
        rules.append(Rule(m.group("id"), premises, m.group("then")))
    if facts is None:
        facts = tuple(dict.fromkeys(f for r in rules for f in (*r.premises, r.conclusion)))
    return RuleBase(facts, tuple(rules))


def _bits(mask: int) -> Iterable[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def _mask(indices: Iterable[int]) -> int:
    m = 0
    for i in indices:
        m |= 1 << i
    return m


@dataclass(frozen=True)
class AutomatonConfig:
    """One configuration G_i of the automaton.

    ``ef``/``sf``/``er``/``sr`` are bitsets, ``if_``/``ir`` per-cell degrees.
    """

    ef: int
    if_: tuple[float, ...]
    sf: int
    er: int
    ir: tuple[float, ...]
    sr: int


@dataclass(frozen=True)
class CellularKnowledgeBase:
    facts: tuple[str, ...]
    rule_ids: tuple[str, ...]
    premise_masks: tuple[int, ...]  # column j of R_E
    conclusions: tuple[int, ...]  # row index of the single 1 in column j of R_S
    activation: str = CONJUNCTIVE

    @property
    def n_facts(self) -> int:
        return len(self.facts)

    @property
    def n_rules(self) -> int:
        return len(self.rule_ids)

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise RuleBaseError(f"unknown fact {label!r}") from None

    @property
    def _index(self) -> dict[str, int]:
        cache = self.__dict__.get("_index_cache")
        if cache is None:
            cache = {f: i for i, f in enumerate(self.facts)}
            object.__setattr__(self, "_index_cache", cache)
        return cache

    @property
    def R_E(self) -> list[list[int]]:
        return [[(self.premise_masks[j] >> i) & 1 for j in range(self.n_rules)] for i in range(self.n_facts)]

    @property
    def R_S(self) -> list[list[int]]:
        return [[int(self.conclusions[j] == i) for j in range(self.n_rules)] for i in range(self.n_facts)]

    def initial_config(self) -> AutomatonConfig:
        return AutomatonConfig(0, (1.0,) * self.n_facts, 0, 0, (1.0,) * self.n_rules, 0)

    def labels(self, mask: int) -> set[str]:
        return {self.facts[i] for i in _bits(mask)}

    def fact_mask(self, labels: Iterable[str]) -> int:
        return _mask(self.index(lab) for lab in labels)

    def decompile(self) -> RuleBase:
        rules = tuple(
            Rule(rid, tuple(self.facts[i] for i in sorted(_bits(pm))), self.facts[c])
            for rid, pm, c in zip(self.rule_ids, self.premise_masks, self.conclusions)
        )
        return RuleBase(self.facts, rules)


def compile_rule_base(rb: RuleBase, activation: str = CONJUNCTIVE) -> CellularKnowledgeBase:
    """Build the CELFACT/CELRULE layers and incidence matrices.

    ``activation="disjunctive"`` reproduces the literal Boolean product
    ``R_E^T . EF`` (a rule is selected as soon as any premise holds); the
    default selects a rule only when all its premises hold.
    """
    if len(set(rb.facts)) != len(rb.facts):
        dup = next(f for f in rb.facts if rb.facts.count(f) > 1)
        raise RuleBaseError(f"duplicate fact label {dup!r}")
    if activation not in (CONJUNCTIVE, DISJUNCTIVE):
        raise RuleBaseError(f"unknown activation mode {activation!r}")
    index = {f: i for i, f in enumerate(rb.facts)}
    return CellularKnowledgeBase(
        facts=rb.facts,
        rule_ids=tuple(r.id for r in rb.rules),
        premise_masks=tuple(_mask(index[p] for p in r.premises) for r in rb.rules),
        conclusions=tuple(index[r.conclusion] for r in rb.rules),
        activation=activation,
    )


def assert_facts(kb: CellularKnowledgeBase, facts: Iterable[str]) -> AutomatonConfig:
    """G_0 with E=1 on exactly ``facts``."""
    g = kb.initial_config()
    return replace(g, ef=kb.fact_mask(facts))


def _selected(kb: CellularKnowledgeBase, ef: int) -> int:
    er = 0
    if kb.activation == CONJUNCTIVE:
        for j, pm in enumerate(kb.premise_masks):
            if pm & ef == pm:
                er |= 1 << j
    else:
        for j, pm in enumerate(kb.premise_masks):
            if pm & ef:
                er |= 1 << j
    return er


def delta_fact(kb: CellularKnowledgeBase, g: AutomatonConfig) -> AutomatonConfig:
    """Evaluation/selection: SF <- EF, ER <- ER or (rules whose premises hold)."""
    return replace(g, sf=g.ef, er=g.er | _selected(kb, g.ef))


def delta_rule(kb: CellularKnowledgeBase, g: AutomatonConfig) -> AutomatonConfig:
    """Execution: EF <- EF or R_S . ER, SR <- not ER."""
    ef = g.ef
    for j in _bits(g.er):
        ef |= 1 << kb.conclusions[j]
    all_rules = (1 << kb.n_rules) - 1
    return replace(g, ef=ef, sr=all_rules & ~g.er)


def step(kb: CellularKnowledgeBase, g: AutomatonConfig) -> AutomatonConfig:
    """The global transition: delta_rule after delta_fact."""
    return delta_rule(kb, delta_fact(kb, g))


def run_to_fixpoint(kb: CellularKnowledgeBase, g0: AutomatonConfig) -> list[AutomatonConfig]:
    trace = [g0]
    g = g0
    while True:
        nxt = step(kb, g)
        if nxt != g:
            trace.append(nxt)
        if nxt.ef == g.ef:
            return trace
        g = nxt


def forward_chain(kb: CellularKnowledgeBase, initial: Iterable[str]) -> tuple[set[str], list[AutomatonConfig]]:
    """Iterate the global transition from the asserted facts until EF stops
    growing. Returns the established facts and the configuration trace."""
    trace = run_to_fixpoint(kb, assert_facts(kb, initial))
    return kb.labels(trace[-1].ef), trace


def backward_chain(kb: CellularKnowledgeBase, goal: str) -> list[frozenset[str]]:
    """Sets of leaf facts (facts no rule concludes) that establish ``goal``.

    Reads R_S as the input relation and R_E as the output relation: the
    rules concluding a fact are alternatives, a rule's premises are all
    required.
    """
    gi = kb.index(goal)
    concluding: dict[int, list[int]] = {}
    for j, c in enumerate(kb.conclusions):
        concluding.setdefault(c, []).append(j)
    memo: dict[int, list[frozenset[int]]] = {}
    on_path: list[int] = []

    def solve(i: int) -> list[frozenset[int]]:
        if i in memo:
            return memo[i]
        if i in on_path:
            cycle = on_path[on_path.index(i):] + [i]
            raise CycleError("cyclic rule dependencies", [kb.facts[k] for k in cycle])
        if i not in concluding:
            return [frozenset((i,))]
        on_path.append(i)
        out: list[frozenset[int]] = []
        for j in concluding[i]:
            partial = [frozenset()]
            for p in sorted(_bits(kb.premise_masks[j])):
                partial = [acc | alt for acc in partial for alt in solve(p)]
            for s in partial:
                if s not in out:
                    out.append(s)
        on_path.pop()
        memo[i] = out
        return out

    return [frozenset(kb.facts[k] for k in s) for s in solve(gi)]


def format_config(kb: CellularKnowledgeBase, g: AutomatonConfig) -> str:
    """One tab-separated line per cell: layer, label, E, I, S."""
    lines = []
    for i, label in enumerate(kb.facts):
        lines.append(f"CELFACT\t{label}\t{(g.ef >> i) & 1}\t{g.if_[i]:g}\t{(g.sf >> i) & 1}")
    for j, rid in enumerate(kb.rule_ids):
        lines.append(f"CELRULE\t{rid}\t{(g.er >> j) & 1}\t{g.ir[j]:g}\t{(g.sr >> j) & 1}")
    return "\n".join(lines)


def format_trace(kb: CellularKnowledgeBase, trace: Sequence[AutomatonConfig]) -> str:
    blocks = [f"G_{k}\n{format_config(kb, g)}" for k, g in enumerate(trace)]
    return "\n".join(blocks) + "\n"
