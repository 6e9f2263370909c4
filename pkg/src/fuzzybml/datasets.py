"""Reference data: the 14-case learning sample, the five-rule base and its
cost variable, the tuberculosis descriptor schema, and a synthetic case
generator driven by the five rules."""

from __future__ import annotations

import math
import random
from importlib import resources

from .cases import CATEGORICAL, NUMERIC, Attribute, AttributeSchema, Case, CaseBase, loads_case_base
from .engine import Rule, RuleBase
from .fuzzy import LinguisticVariable, make_variable, ruspini_variable
from .induction import DiscretizationSpec

TABLE1_ROWS = [
    ("w1", "Plan1", 75, 0.70, 70),
    ("w2", "Plan2", 80, 0.80, 90),
    ("w3", "Plan2", 85, 0.85, 85),
    ("w4", "Plan2", 72, 0.20, 95),
    ("w5", "Plan1", 79, 0.69, 70),
    ("w6", "Plan1", 71, 0.70, 90),
    ("w7", "Plan1", 63, 0.30, 78),
    ("w8", "Plan1", 64, 0.40, 65),
    ("w9", "Plan1", 65, 0.80, 75),
    ("w10", "Plan2", 51, 0.10, 80),
    ("w11", "Plan2", 55, 0.50, 70),
    ("w12", "Plan1", 49, 0.52, 80),
    ("w13", "Plan1", 58, 0.81, 80),
    ("w14", "Plan1", 40, 0.90, 96),
]

DURATION, PROBABILITY, COST = "X_1", "X_2", "X_3"
PLAN1, PLAN2 = "Plan1", "Plan2"

DURATION_TERMS = ("Courte", "Normale", "Longue")
PROBABILITY_TERMS = ("Incertain", "Douteux", "Certain")
COST_TERMS = ("Faible", "Raisonnable", "Elevé")


def table1_schema() -> AttributeSchema:
    # Duration terms are listed long-first, as the rule base lists them.
    return AttributeSchema(
        (
            Attribute(DURATION, NUMERIC, tuple(reversed(DURATION_TERMS)), order="descending"),
            Attribute(PROBABILITY, NUMERIC, PROBABILITY_TERMS),
            Attribute(COST, NUMERIC, COST_TERMS),
        ),
        (PLAN1, PLAN2),
    )


def table1_csv() -> str:
    lines = [f"id,{DURATION},{PROBABILITY},{COST},plan"]
    lines += [f"{cid},{x1},{x2:.2f},{x3},{label}" for cid, label, x1, x2, x3 in TABLE1_ROWS]
    return "\n".join(lines) + "\n"


def table1() -> CaseBase:
    return loads_case_base(table1_csv(), table1_schema())


DURATION_SPEC = DiscretizationSpec(DURATION, (60.0, 72.0), DURATION_TERMS)
PROBABILITY_SPEC = DiscretizationSpec(PROBABILITY, (0.5, 0.85), PROBABILITY_TERMS)
COST_SPEC = DiscretizationSpec(COST, (40.0, 65.0), COST_TERMS)


def table2_schema() -> AttributeSchema:
    """Descriptors of the tuberculosis treatment cases (the cases themselves
    are not public)."""
    return AttributeSchema(
        (
            Attribute("Age", CATEGORICAL, ("< 20", "20-30", "30-40", "40-50", "> 50")),
            Attribute("Weight", CATEGORICAL, ("30-39", "39-54", "54-70", "> 70")),
            Attribute("Antecedent", CATEGORICAL, ("NT", "T")),
        ),
        ("T1", "T2", "T3", "T4"),
    )


def _f(attr, term):
    return f"{attr}={term}"


def fig6_rule_base() -> RuleBase:
    facts = (
        [_f(DURATION, t) for t in ("Longue", "Normale", "Courte")]
        + [_f(PROBABILITY, t) for t in PROBABILITY_TERMS]
        + [_f(COST, t) for t in COST_TERMS]
        + [PLAN1, PLAN2]
    )
    rules = (
        Rule("R_1", (_f(DURATION, "Longue"), _f(COST, "Faible")), PLAN1),
        Rule("R_2", (_f(DURATION, "Longue"), _f(COST, "Elevé")), PLAN2),
        Rule("R_3", (_f(DURATION, "Normale"),), PLAN1),
        Rule("R_4", (_f(DURATION, "Courte"), _f(PROBABILITY, "Incertain")), PLAN2),
        Rule("R_5", (_f(DURATION, "Courte"), _f(PROBABILITY, "Douteux")), PLAN1),
    )
    return RuleBase(tuple(facts), rules)


def fig4_rule_base() -> RuleBase:
    facts = ("s_0", "X_1=longue", "s_1", "X_1=normale", "s_2", "X_1=courte", "s_3")
    rules = (
        Rule("ARC_1", ("s_0", "X_1=longue"), "s_1"),
        Rule("ARC_2", ("s_0", "X_1=normale"), "s_2"),
        Rule("ARC_3", ("s_0", "X_1=courte"), "s_3"),
    )
    return RuleBase(facts, rules)


def cost_variable(name: str = COST) -> LinguisticVariable:
    """Three cost terms: 35 is Faible to 0.75 and Raisonnable to 0.25, the
    two cross at 40, and Elevé is full from 70."""
    inf = math.inf
    return make_variable(
        name,
        (0.0, 100.0),
        [
            ("Faible", (-inf, -inf, 30.0, 50.0)),
            ("Raisonnable", (30.0, 50.0, 60.0, 70.0)),
            ("Elevé", (60.0, 70.0, inf, inf)),
        ],
    )


def duration_variable(name: str = DURATION) -> LinguisticVariable:
    return ruspini_variable(name, DURATION_SPEC.cut_points, DURATION_TERMS, (30.0, 100.0), 6.0, open_ends=True)


def probability_variable(name: str = PROBABILITY) -> LinguisticVariable:
    return ruspini_variable(
        name, PROBABILITY_SPEC.cut_points, PROBABILITY_TERMS, (0.0, 1.0), 0.1, open_ends=True
    )


def fig6_variables() -> dict[str, LinguisticVariable]:
    return {v.name: v for v in (duration_variable(), probability_variable(), cost_variable())}


# Regions of the three descriptors, by term, used to generate cases that
# follow the five rules.
SYNTHETIC_RANGES = {
    DURATION: {"Courte": (40.0, 60.0), "Normale": (60.0, 72.0), "Longue": (72.0, 90.0)},
    PROBABILITY: {"Incertain": (0.0, 0.5), "Douteux": (0.5, 0.85), "Certain": (0.85, 1.0)},
    COST: {"Faible": (0.0, 40.0), "Raisonnable": (40.0, 65.0), "Elevé": (65.0, 100.0)},
}
SYNTHETIC_SPECS = (DURATION_SPEC, PROBABILITY_SPEC, COST_SPEC)


def _span(attr):
    lows, highs = zip(*SYNTHETIC_RANGES[attr].values())
    return min(lows), max(highs)


def rule_base_cases(
    n: int = 200,
    noise: float = 0.1,
    jitter: float = 0.04,
    seed: int = 0,
    rules: RuleBase | None = None,
) -> CaseBase:
    """Cases drawn from the five-rule base.

    Each case picks a rule uniformly, draws the premise attributes inside
    their term's region and the other attributes anywhere, and takes the
    rule's plan. Descriptors are then perturbed by Gaussian noise with
    standard deviation ``jitter`` times the attribute's span (so values near
    a boundary can cross it) and a ``noise`` fraction of labels is flipped.
    """
    rules = rules or fig6_rule_base()
    rng = random.Random(seed)
    schema = table1_schema()
    labels = list(schema.class_labels)
    cases = []
    for i in range(n):
        rule = rng.choice(rules.rules)
        fixed = dict(p.split("=", 1) for p in rule.premises)
        values = {}
        for attr in (DURATION, PROBABILITY, COST):
            lo, hi = SYNTHETIC_RANGES[attr][fixed[attr]] if attr in fixed else _span(attr)
            x = rng.uniform(lo, hi)
            if jitter > 0:
                s_lo, s_hi = _span(attr)
                x = min(max(x + rng.gauss(0.0, jitter * (s_hi - s_lo)), s_lo), s_hi)
            values[attr] = x
        label = rule.conclusion
        if rng.random() < noise:
            label = rng.choice([lab for lab in labels if lab != label])
        cases.append(Case(f"c{i + 1}", values, label))
    return CaseBase(schema, tuple(cases))


def data_path(name: str):
    """Path to one of the bundled data files."""
    return resources.files("fuzzybml") / "data" / name
