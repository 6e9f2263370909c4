"""Trapezoidal linguistic variables and graded inference on the cell engine.

Crisp inputs are fuzzified into term degrees, asserted as established facts
whose I channel carries the degree, and propagated with ``min`` over a
rule's premises and ``max`` over the rules concluding the same fact. The
decision is the established class fact of highest degree.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence, TextIO

from .engine import (
    CONJUNCTIVE,
    AutomatonConfig,
    CellularKnowledgeBase,
    _bits,
    _selected,
)
from .errors import FuzzyConfigError, RuleBaseError

log = logging.getLogger(__name__)

MAX_TERMS = 7
INVALID_CODE = "111"


@dataclass(frozen=True)
class Trapezoid:
    """Support ``[a, d]``, core ``[b, c]``. Infinite ends are allowed."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if not (self.a <= self.b <= self.c <= self.d):
            raise FuzzyConfigError(f"trapezoid needs a <= b <= c <= d, got {self.as_tuple()}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)

    def __call__(self, x: float) -> float:
        return membership(self, x)


def membership(mf: Trapezoid, x: float) -> float:
    if x < mf.a or x > mf.d:
        return 0.0
    if mf.b <= x <= mf.c:
        return 1.0
    if x < mf.b:
        return (x - mf.a) / (mf.b - mf.a)
    return (mf.d - x) / (mf.d - mf.c)


@dataclass(frozen=True)
class Term:
    label: str
    mf: Trapezoid
    code: str


def code_for(index: int) -> str:
    return format(index, "03b")


@dataclass(frozen=True)
class LinguisticVariable:
    name: str
    universe: tuple[float, float]
    terms: tuple[Term, ...]

    def __post_init__(self):
        object.__setattr__(self, "universe", (float(self.universe[0]), float(self.universe[1])))
        object.__setattr__(self, "terms", tuple(self.terms))
        lo, hi = self.universe
        if not lo <= hi:
            raise FuzzyConfigError(f"{self.name}: empty universe {self.universe}")
        if not self.terms:
            raise FuzzyConfigError(f"{self.name}: no terms")
        if len(self.terms) > MAX_TERMS:
            raise FuzzyConfigError(f"{self.name}: at most {MAX_TERMS} terms fit in 3-bit codes")
        labels = [t.label for t in self.terms]
        if len(set(labels)) != len(labels):
            raise FuzzyConfigError(f"{self.name}: duplicate term labels")
        codes = [t.code for t in self.terms]
        if len(set(codes)) != len(codes):
            raise FuzzyConfigError(f"{self.name}: duplicate term codes")
        for code in codes:
            if len(code) != 3 or set(code) - {"0", "1"} or code == INVALID_CODE:
                raise FuzzyConfigError(f"{self.name}: invalid code {code!r} (000..110)")
        gap = self.uncovered_point()
        if gap is not None:
            raise FuzzyConfigError(f"{self.name}: universe point {gap} belongs to no term")

    @property
    def labels(self) -> list[str]:
        return [t.label for t in self.terms]

    def term(self, label: str) -> Term:
        for t in self.terms:
            if t.label == label:
                return t
        raise KeyError(label)

    def uncovered_point(self) -> float | None:
        # Memberships are linear between breakpoints, so checking breakpoints
        # and the midpoints between them is exhaustive.
        lo, hi = self.universe
        pts = {lo, hi}
        for t in self.terms:
            pts.update(v for v in t.mf.as_tuple() if lo <= v <= hi)
        pts = sorted(pts)
        probes = pts + [(u + v) / 2 for u, v in zip(pts, pts[1:])]
        for x in sorted(probes):
            if sum(membership(t.mf, x) for t in self.terms) <= 0.0:
                return x
        return None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "universe": list(self.universe),
            "terms": [
                {"label": t.label, "trapezoid": [_num_out(v) for v in t.mf.as_tuple()], "code": t.code}
                for t in self.terms
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "LinguisticVariable":
        try:
            raw_terms = list(data["terms"])
            mfs = [Trapezoid(*(float(v) for v in t["trapezoid"])) for t in raw_terms]
            order = sorted(range(len(mfs)), key=lambda i: mfs[i].as_tuple())
            default_codes = {i: code_for(rank) for rank, i in enumerate(order)}
            terms = tuple(
                Term(t["label"], mf, t.get("code") or default_codes[i])
                for i, (t, mf) in enumerate(zip(raw_terms, mfs))
            )
            return cls(data["name"], tuple(data["universe"]), terms)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, FuzzyConfigError):
                raise
            raise FuzzyConfigError(f"malformed fuzzy variable: {exc}") from exc


def _num_out(v: float):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def make_variable(name: str, universe: tuple[float, float], terms: Sequence[tuple[str, Sequence[float]]]) -> LinguisticVariable:
    """Build a variable from ``(label, (a, b, c, d))`` pairs; codes follow
    universe order."""
    mfs = [Trapezoid(*map(float, abcd)) for _, abcd in terms]
    order = sorted(range(len(mfs)), key=lambda i: mfs[i].as_tuple())
    codes = {i: code_for(rank) for rank, i in enumerate(order)}
    return LinguisticVariable(
        name, universe, tuple(Term(label, mf, codes[i]) for i, ((label, _), mf) in enumerate(zip(terms, mfs)))
    )


def load_fuzzy_config(source: TextIO | str) -> dict[str, LinguisticVariable]:
    if isinstance(source, str):
        with open(source, encoding="utf-8") as fh:
            return load_fuzzy_config(fh)
    data = json.load(source)
    if isinstance(data, Mapping):
        data = data.get("variables", [data] if "terms" in data else [])
    variables = [LinguisticVariable.from_dict(v) for v in data]
    return {v.name: v for v in variables}


def fuzzy_config_to_dict(variables: Iterable[LinguisticVariable]) -> dict:
    return {"variables": [v.to_dict() for v in variables]}


def save_fuzzy_config(variables: Iterable[LinguisticVariable], dest: TextIO) -> None:
    json.dump(fuzzy_config_to_dict(variables), dest, indent=2, ensure_ascii=False)
    dest.write("\n")


@dataclass(frozen=True)
class FuzzyAssignment:
    variable: str
    degrees: Mapping[str, float]

    def __post_init__(self):
        for label, mu in self.degrees.items():
            if not 0.0 <= mu <= 1.0:
                raise FuzzyConfigError(f"{self.variable}={label}: degree {mu} outside [0, 1]")


def fuzzify(v: LinguisticVariable, x: float) -> FuzzyAssignment:
    lo, hi = v.universe
    if x < lo or x > hi:
        clamped = min(max(x, lo), hi)
        log.warning("%s: value %g outside universe [%g, %g], clamped to %g", v.name, x, lo, hi, clamped)
        x = clamped
    return FuzzyAssignment(v.name, {t.label: membership(t.mf, x) for t in v.terms})


def crisp_assignment(variable: str, modality: str) -> FuzzyAssignment:
    return FuzzyAssignment(variable, {modality: 1.0})


def fact_label(variable: str, term: str) -> str:
    return f"{variable}={term}"


def assert_fuzzy(
    kb: CellularKnowledgeBase,
    assignments: Iterable[FuzzyAssignment],
    cutoff: float = 0.0,
) -> AutomatonConfig:
    """G_0 with every term of nonzero degree at or above ``cutoff``
    established, its degree on the I channel."""
    g = kb.initial_config()
    ef = 0
    degrees = list(g.if_)
    for a in assignments:
        for term, mu in a.degrees.items():
            label = fact_label(a.variable, term)
            i = kb.index(label)
            if mu > 0.0 and mu >= cutoff:
                if (ef >> i) & 1:
                    degrees[i] = max(degrees[i], mu)
                else:
                    degrees[i] = mu
                ef |= 1 << i
    return replace(g, ef=ef, if_=tuple(degrees))


def _fuzzy_step(kb: CellularKnowledgeBase, g: AutomatonConfig, asserted: int, base_if: Sequence[float]) -> AutomatonConfig:
    # delta_fact with graded rule cells
    er = g.er | _selected(kb, g.ef)
    ir = list(g.ir)
    for j in _bits(er):
        prem = kb.premise_masks[j]
        if kb.activation != CONJUNCTIVE:
            prem &= g.ef
        ir[j] = min((g.if_[i] for i in _bits(prem)), default=1.0)
    # delta_rule with max over concluding rules
    ef = g.ef
    derived: dict[int, float] = {}
    for j in _bits(er):
        c = kb.conclusions[j]
        ef |= 1 << c
        derived[c] = max(derived.get(c, 0.0), ir[j])
    if_ = list(g.if_)
    for i, mu in derived.items():
        if (asserted >> i) & 1:
            if_[i] = max(base_if[i], mu)
        else:
            if_[i] = mu
    all_rules = (1 << kb.n_rules) - 1
    return AutomatonConfig(ef, tuple(if_), g.ef, er, tuple(ir), all_rules & ~er)


def fuzzy_chain(kb: CellularKnowledgeBase, g0: AutomatonConfig) -> list[AutomatonConfig]:
    """Graded run to the fixpoint; returns the whole trace G_0..G_q."""
    asserted = g0.ef
    base_if = g0.if_
    trace = [g0]
    g = g0
    while True:
        nxt = _fuzzy_step(kb, g, asserted, base_if)
        if nxt != g:
            trace.append(nxt)
        if (nxt.ef, nxt.if_, nxt.ir) == (g.ef, g.if_, g.ir):
            return trace
        g = nxt


def fuzzy_infer(kb: CellularKnowledgeBase, g: AutomatonConfig) -> AutomatonConfig:
    return fuzzy_chain(kb, g)[-1]


def defuzzify(kb: CellularKnowledgeBase, g: AutomatonConfig, classes: Iterable[str]) -> tuple[str | None, float]:
    """Established class of highest degree (ties: smallest label), or
    ``(None, 0.0)`` when no class is established."""
    best = None
    for label in sorted(classes):
        try:
            i = kb.index(label)
        except RuleBaseError:
            continue
        if not (g.ef >> i) & 1:
            continue
        mu = g.if_[i]
        if best is None or mu > best[1]:
            best = (label, mu)
    return best if best is not None else (None, 0.0)


def ruspini_variable(
    name: str,
    cuts: Sequence[float],
    labels: Sequence[str],
    universe: tuple[float, float],
    width: float,
    open_ends: bool = False,
) -> LinguisticVariable:
    """Trapezoids crossing at 0.5 on each cut point, with ramps ``width``
    wide (narrowed where cuts are closer than that). Neighbouring degrees
    sum to one. ``width=0`` yields crisp steps. With ``open_ends`` the
    outer terms extend to infinity instead of stopping at the universe."""
    lo, hi = float(universe[0]), float(universe[1])
    cuts = [float(c) for c in cuts]
    if len(labels) != len(cuts) + 1:
        raise FuzzyConfigError(f"{name}: {len(cuts)} cuts need {len(cuts) + 1} labels")
    lo = min(lo, *cuts) if cuts else lo
    hi = max(hi, *cuts) if cuts else hi
    gaps = [b - a for a, b in zip(cuts, cuts[1:])]
    w = min([width, *gaps]) if gaps else width
    half = max(w, 0.0) / 2.0
    terms = []
    for i, label in enumerate(labels):
        if i == 0:
            a = b = -math.inf if open_ends else lo
        else:
            a, b = max(lo, cuts[i - 1] - half), min(hi, cuts[i - 1] + half)
        if i == len(cuts):
            c = d = math.inf if open_ends else hi
        else:
            c, d = max(lo, cuts[i] - half), min(hi, cuts[i] + half)
        b = max(a, b)
        c = max(b, c)
        d = max(c, d)
        terms.append((label, (a, b, c, d)))
    return make_variable(name, (lo, hi), terms)
