import io
import logging
import math
import random
from dataclasses import replace

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from fuzzybml import datasets
from fuzzybml.engine import Rule, RuleBase, compile_rule_base, forward_chain
from fuzzybml.errors import FuzzyConfigError, RuleBaseError
from fuzzybml.fuzzy import (
    FuzzyAssignment,
    LinguisticVariable,
    Term,
    Trapezoid,
    assert_fuzzy,
    defuzzify,
    fuzzify,
    fuzzy_chain,
    fuzzy_infer,
    load_fuzzy_config,
    make_variable,
    membership,
    ruspini_variable,
    save_fuzzy_config,
)

from test_engine import random_acyclic_base


def degree(kb, g, label):
    return g.if_[kb.index(label)]


def test_membership_anchors():
    assert membership(Trapezoid(0, 0, 30, 50), 35) == pytest.approx(0.75)
    assert membership(Trapezoid(30, 50, 60, 70), 35) == pytest.approx(0.25)
    assert membership(Trapezoid(30, 50, 60, 70), 55) == 1.0
    assert membership(Trapezoid(30, 50, 60, 70), 80) == 0.0


def test_degenerate_ramps_are_steps():
    step = Trapezoid(10, 10, 20, 20)
    assert [step(x) for x in (9.99, 10, 15, 20, 20.01)] == [0, 1, 1, 1, 0]


def test_trapezoid_order_enforced():
    with pytest.raises(FuzzyConfigError):
        Trapezoid(1, 0, 2, 3)


trap_points = st.lists(st.floats(-100, 100, allow_nan=False), min_size=4, max_size=4).map(sorted)


@settings(max_examples=300, deadline=None)
@given(trap_points, st.floats(-150, 150, allow_nan=False), st.floats(0, 5))
def test_membership_shape(pts, x, h):
    mf = Trapezoid(*pts)
    a, b, c, d = pts
    mu = membership(mf, x)
    assert 0.0 <= mu <= 1.0
    if b <= x <= c:
        assert mu == 1.0
    if x < a or x > d:
        assert mu == 0.0
    y = x + h
    if a <= x <= y <= b:
        assert membership(mf, y) >= mu - 1e-12
    if c <= x <= y <= d:
        assert membership(mf, y) <= mu + 1e-12
    # Lipschitz with the steepest ramp's slope, so continuous where ramps are non-degenerate
    widths = [w for w in (b - a, d - c) if w > 0]
    if len(widths) == 2 and h > 0:
        assert abs(membership(mf, y) - mu) <= h / min(widths) + 1e-9


def test_cost_variable():
    v = datasets.cost_variable()
    assert fuzzify(v, 35).degrees == pytest.approx({"Faible": 0.75, "Raisonnable": 0.25, "Elevé": 0.0}, abs=1e-9)
    assert fuzzify(v, 40).degrees == pytest.approx({"Faible": 0.5, "Raisonnable": 0.5, "Elevé": 0.0})
    assert fuzzify(v, 70).degrees["Elevé"] == 1.0
    assert [t.code for t in v.terms] == ["000", "001", "010"]
    for x in [30 + 0.5 * k for k in range(41)]:
        d = fuzzify(v, x).degrees
        assert d["Faible"] + d["Raisonnable"] == pytest.approx(1.0)


def test_core_point_is_single_term():
    d = fuzzify(datasets.cost_variable(), 55).degrees
    assert d == {"Faible": 0.0, "Raisonnable": 1.0, "Elevé": 0.0}


def test_fuzzify_clamps_with_warning(caplog):
    v = datasets.cost_variable()
    with caplog.at_level(logging.WARNING):
        assert fuzzify(v, 150).degrees["Elevé"] == 1.0
    assert "clamped" in caplog.text


def test_variable_invariants():
    t = Trapezoid(0, 0, 10, 10)
    with pytest.raises(FuzzyConfigError, match="at most 7"):
        LinguisticVariable("v", (0, 10), tuple(Term(f"t{i}", t, format(i, "03b")) for i in range(8)))
    with pytest.raises(FuzzyConfigError, match="invalid code"):
        LinguisticVariable("v", (0, 10), (Term("a", t, "111"),))
    with pytest.raises(FuzzyConfigError, match="duplicate term codes"):
        LinguisticVariable("v", (0, 10), (Term("a", t, "000"), Term("b", t, "000")))
    with pytest.raises(FuzzyConfigError, match="duplicate term labels"):
        LinguisticVariable("v", (0, 10), (Term("a", t, "000"), Term("a", t, "001")))
    with pytest.raises(FuzzyConfigError, match="belongs to no term"):
        make_variable("v", (0, 10), [("a", (0, 0, 3, 4)), ("b", (6, 7, 10, 10))])


def test_seven_terms_fit():
    terms = [(f"t{i}", (i, i, i + 1, i + 1)) for i in range(7)]
    v = make_variable("v", (0, 7), terms)
    assert [t.code for t in v.terms] == [format(i, "03b") for i in range(7)]


def test_fuzzy_config_round_trip():
    variables = list(datasets.fig6_variables().values())
    buf = io.StringIO()
    save_fuzzy_config(variables, buf)
    assert '"-inf"' in buf.getvalue()
    loaded = load_fuzzy_config(io.StringIO(buf.getvalue()))
    assert list(loaded.values()) == variables
    bundled = load_fuzzy_config(str(datasets.data_path("fig6_fuzzy.json")))
    assert list(bundled.values()) == variables
    single = load_fuzzy_config(io.StringIO(
        '{"name": "c", "universe": [0, 10], "terms": [{"label": "lo", "trapezoid": [0, 0, 4, 6]},'
        ' {"label": "hi", "trapezoid": [4, 6, 10, 10]}]}'
    ))
    assert [t.code for t in single["c"].terms] == ["000", "001"]


@pytest.fixture
def fig6():
    return compile_rule_base(datasets.fig6_rule_base())


def test_assert_fuzzy_cost_35(fig6):
    g = assert_fuzzy(fig6, [fuzzify(datasets.cost_variable(), 35)], cutoff=0.1)
    assert fig6.labels(g.ef) == {"X_3=Faible", "X_3=Raisonnable"}
    assert degree(fig6, g, "X_3=Faible") == pytest.approx(0.75)
    assert degree(fig6, g, "X_3=Raisonnable") == pytest.approx(0.25)
    assert assert_fuzzy(fig6, [fuzzify(datasets.cost_variable(), 35)], cutoff=1.0).ef == 0
    at = assert_fuzzy(fig6, [FuzzyAssignment("X_3", {"Faible": 0.3})], cutoff=0.3)
    assert fig6.labels(at.ef) == {"X_3=Faible"}
    with pytest.raises(RuleBaseError):
        assert_fuzzy(fig6, [FuzzyAssignment("X_9", {"Faible": 0.3})])


def test_graded_min_then_max(fig6):
    inputs = [FuzzyAssignment("X_1", {"Longue": 0.70}), FuzzyAssignment("X_3", {"Faible": 0.75})]
    g = fuzzy_infer(fig6, assert_fuzzy(fig6, inputs))
    assert degree(fig6, g, "Plan1") == pytest.approx(0.70, abs=1e-9)
    assert defuzzify(fig6, g, ["Plan1", "Plan2"]) == ("Plan1", pytest.approx(0.70))

    rb = datasets.fig6_rule_base()
    extra = RuleBase(rb.facts + ("Y=y",), rb.rules + (Rule("R_6", ("Y=y",), "Plan1"),))
    kb = compile_rule_base(extra)
    g = fuzzy_infer(kb, assert_fuzzy(kb, inputs + [FuzzyAssignment("Y", {"y": 0.6})]))
    assert degree(kb, g, "Plan1") == pytest.approx(0.70, abs=1e-9)


def test_max_of_two_rules():
    kb = compile_rule_base(RuleBase(("a", "b", "P"), (Rule("r1", ("a",), "P"), Rule("r2", ("b",), "P"))))
    g = fuzzy_infer(kb, _assert(kb, {"a": 0.4, "b": 0.6}))
    assert degree(kb, g, "P") == pytest.approx(0.6)


def _assert(kb, degrees):
    """G_0 with bare fact labels established at the given degrees."""
    g = kb.initial_config()
    ef, if_ = 0, list(g.if_)
    for label, mu in degrees.items():
        i = kb.index(label)
        ef |= 1 << i
        if_[i] = mu
    return replace(g, ef=ef, if_=tuple(if_))


def test_defuzzify_cases(fig6):
    g = _assert(fig6, {"Plan1": 0.70, "Plan2": 0.25})
    assert defuzzify(fig6, g, ["Plan1", "Plan2"]) == ("Plan1", 0.70)
    g = _assert(fig6, {"Plan2": 0.1})
    assert defuzzify(fig6, g, ["Plan1", "Plan2"]) == ("Plan2", 0.1)
    g = _assert(fig6, {"Plan1": 0.5, "Plan2": 0.5})
    assert defuzzify(fig6, g, ["Plan2", "Plan1"]) == ("Plan1", 0.5)
    assert defuzzify(fig6, fig6.initial_config(), ["Plan1", "Plan2"]) == (None, 0.0)


def test_ruspini_variable_crosses_on_cuts():
    v = ruspini_variable("X", (60, 72), ("Courte", "Normale", "Longue"), (30, 100), 6)
    for cut, (left, right) in zip((60, 72), (("Courte", "Normale"), ("Normale", "Longue"))):
        d = fuzzify(v, cut).degrees
        assert d[left] == pytest.approx(0.5) and d[right] == pytest.approx(0.5)
    for x in range(30, 101):
        assert sum(fuzzify(v, x).degrees.values()) == pytest.approx(1.0)


def naive_graded(rules, asserted):
    """Fixpoint of deg(c) = max(asserted(c), max over rules c <- P of min deg(P))."""
    deg = dict(asserted)
    changed = True
    while changed:
        changed = False
        for premises, conclusion in rules:
            if all(p in deg for p in premises):
                value = min((deg[p] for p in premises), default=1.0)
                new = max(value, asserted.get(conclusion, 0.0))
                if conclusion not in deg or new > deg[conclusion] + 1e-15:
                    deg[conclusion] = max(new, deg.get(conclusion, 0.0))
                    changed = True
    return deg


degrees = st.floats(0.01, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**9), st.lists(degrees, min_size=12, max_size=12))
def test_graded_matches_naive_fixpoint(seed, mus):
    rng = random.Random(seed)
    rb = random_acyclic_base(rng)
    kb = compile_rule_base(rb)
    chosen = rng.sample(rb.facts, rng.randint(0, len(rb.facts)))
    asserted = {f: mus[i] for i, f in enumerate(chosen)}
    g = fuzzy_infer(kb, _assert(kb, asserted))
    oracle = naive_graded([(r.premises, r.conclusion) for r in rb.rules], asserted)
    assert kb.labels(g.ef) == set(oracle)
    for f, mu in oracle.items():
        assert degree(kb, g, f) == pytest.approx(mu)
    # min/max cannot amplify
    if asserted:
        assert max(degree(kb, g, f) for f in oracle) <= max(asserted.values()) + 1e-12


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**9), st.lists(degrees, min_size=12, max_size=12), st.floats(0, 1))
def test_raising_an_input_never_lowers_outputs(seed, mus, bump):
    rng = random.Random(seed)
    rb = random_acyclic_base(rng)
    kb = compile_rule_base(rb)
    chosen = rng.sample(rb.facts, rng.randint(1, len(rb.facts)))
    asserted = {f: mus[i] for i, f in enumerate(chosen)}
    low = fuzzy_infer(kb, _assert(kb, asserted))
    target = rng.choice(chosen)
    raised = dict(asserted, **{target: min(1.0, asserted[target] + bump)})
    high = fuzzy_infer(kb, _assert(kb, raised))
    for i in range(kb.n_facts):
        if (low.ef >> i) & 1:
            assert high.if_[i] >= low.if_[i] - 1e-12


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**9))
def test_all_ones_agrees_with_boolean_chain(seed):
    rng = random.Random(seed)
    rb = random_acyclic_base(rng)
    kb = compile_rule_base(rb)
    initial = set(rng.sample(rb.facts, rng.randint(0, len(rb.facts))))
    classes = [f for f in rb.facts if f not in {p for r in rb.rules for p in r.premises}]
    assume(classes)
    g = fuzzy_infer(kb, _assert(kb, {f: 1.0 for f in initial}))
    boolean, _ = forward_chain(kb, initial)
    assert kb.labels(g.ef) == boolean
    assert all(degree(kb, g, f) == 1.0 for f in boolean)
    established = sorted(c for c in classes if c in boolean)
    expected = (established[0], 1.0) if established else (None, 0.0)
    assert defuzzify(kb, g, classes) == expected


def test_trace_is_monotone(fig6):
    inputs = [FuzzyAssignment("X_1", {"Longue": 0.70}), FuzzyAssignment("X_3", {"Faible": 0.75})]
    trace = fuzzy_chain(fig6, assert_fuzzy(fig6, inputs))
    for a, b in zip(trace, trace[1:]):
        assert a.ef & b.ef == a.ef
    assert math.isclose(degree(fig6, trace[-1], "Plan1"), 0.70)
