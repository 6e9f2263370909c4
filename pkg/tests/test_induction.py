import itertools
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fuzzybml import datasets
from fuzzybml.cases import CATEGORICAL, Attribute, AttributeSchema, Case, CaseBase
from fuzzybml.errors import FuzzyBMLError
from fuzzybml.induction import (
    Arc,
    DiscretizationSpec,
    InductionGraph,
    LearnerParams,
    Node,
    Partition,
    bins_uncertainty,
    build_graph,
    discretize,
    extract_rules,
    partition_uncertainty,
    refine_partition,
    root_partition,
    uncertainty,
)

RAW = LearnerParams(lam=0.0)
RAW_Q = LearnerParams(measure="quadratic", lam=0.0)


def shannon_oracle(counts, lam=0.0):
    n, m = sum(counts), len(counts)
    if n == 0:
        return 0.0
    fs = [(c + lam) / (n + m * lam) for c in counts]
    return -sum(f * math.log2(f) for f in fs if f > 0)


def quadratic_oracle(counts, lam=0.0):
    n, m = sum(counts), len(counts)
    if n == 0:
        return 0.0
    fs = [(c + lam) / (n + m * lam) for c in counts]
    return sum(f * (1 - f) for f in fs)


def test_uncertainty_examples():
    assert uncertainty({"Plan1": 9, "Plan2": 5}, RAW) == pytest.approx(0.9403, abs=1e-4)
    assert uncertainty({"Plan1": 9, "Plan2": 5}, RAW_Q) == pytest.approx(0.4592, abs=1e-4)
    assert uncertainty({"Plan1": 4, "Plan2": 0}, RAW) == 0.0
    assert uncertainty({"Plan1": 4, "Plan2": 0}, RAW_Q) == 0.0
    assert uncertainty({}, RAW) == 0.0


def test_laplace_smoothing_matches_oracle():
    p = LearnerParams(lam=1.0)
    assert uncertainty([4, 0], p) == pytest.approx(shannon_oracle([4, 0], 1.0))
    assert uncertainty([4, 0], p) > 0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=1, max_size=5), st.sampled_from([0.0, 0.5, 1.0, 2.0]))
def test_uncertainty_matches_oracle(counts, lam):
    assert uncertainty(counts, LearnerParams(lam=lam)) == pytest.approx(shannon_oracle(counts, lam), abs=1e-12)
    q = LearnerParams(measure="quadratic", lam=lam)
    assert uncertainty(counts, q) == pytest.approx(quadratic_oracle(counts, lam), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=1, max_size=5))
def test_zero_iff_single_nonzero(counts):
    if sum(counts) == 0:
        return
    pure = sum(1 for c in counts if c) == 1
    assert (uncertainty(counts, RAW) == 0.0) == pure
    assert (uncertainty(counts, RAW_Q) == 0.0) == pure


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=2, max_size=5))
def test_uniform_is_maximal(counts):
    if sum(counts) == 0:
        return
    m = len(counts)
    assert uncertainty(counts, RAW) <= math.log2(m) + 1e-12
    assert uncertainty(counts, RAW_Q) <= 1 - 1 / m + 1e-12
    assert uncertainty([7] * m, RAW) == pytest.approx(math.log2(m))
    assert uncertainty([7] * m, RAW_Q) == pytest.approx(1 - 1 / m)


def test_explicit_discretization():
    base = datasets.table1()
    spec = discretize(base, "X_1", "explicit", cuts=[60, 72], names=["Courte", "Normale", "Longue"])
    assert spec.cut_points == (60.0, 72.0)
    assert [spec.modality_of(x) for x in (59.9, 60, 71.9, 72, 90)] == [
        "Courte",
        "Normale",
        "Normale",
        "Longue",
        "Longue",
    ]


def test_degenerate_discretization():
    schema = datasets.table1_schema()
    cases = tuple(Case(f"c{i}", {"X_1": 5.0, "X_2": 0.5, "X_3": 1.0}, "Plan1") for i in range(4))
    spec = discretize(CaseBase(schema, cases), "X_1", "supervised", n_cuts=2)
    assert spec.cut_points == ()
    assert len(spec.modality_names) == 1


def test_categorical_discretization_rejected():
    base = CaseBase(datasets.table2_schema(), ())
    with pytest.raises(FuzzyBMLError):
        discretize(base, "Age", "supervised")


def test_spec_invariants():
    with pytest.raises(FuzzyBMLError):
        DiscretizationSpec("X", (2.0, 1.0), ("a", "b", "c"))
    with pytest.raises(FuzzyBMLError):
        DiscretizationSpec("X", (1.0,), ("a",))


def _brute_force_cuts(base, attr, n_cuts, params):
    xs = sorted({float(c.values[attr]) for c in base})
    mids = [(a + b) / 2 for a, b in zip(xs, xs[1:])]
    best = None
    for cuts in itertools.combinations(mids, n_cuts):
        bins = [[0] * len(base.schema.class_labels) for _ in range(n_cuts + 1)]
        for c in base:
            k = sum(1 for t in cuts if float(c.values[attr]) >= t)
            bins[k][base.schema.class_labels.index(c.label)] += 1
        n = len(base)
        u = sum(sum(b) / n * shannon_oracle(b, params.lam) for b in bins)
        if best is None or u < best[0] - 1e-12:
            best = (u, cuts)
    return best


@pytest.mark.parametrize("lam", [0.0, 1.0])
def test_supervised_cuts_are_optimal_on_table1(lam):
    base = datasets.table1()
    params = LearnerParams(lam=lam)
    spec = discretize(base, "X_1", "supervised", n_cuts=2, params=params)
    best_u, best_cuts = _brute_force_cuts(base, "X_1", 2, params)
    assert bins_uncertainty(base, spec, params) == pytest.approx(best_u, abs=1e-12)
    assert spec.cut_points == pytest.approx(best_cuts)
    given = DiscretizationSpec("X_1", (60.0, 72.0), ("a", "b", "c"))
    assert bins_uncertainty(base, spec, params) <= bins_uncertainty(base, given, params) + 1e-12


def test_fig2_first_partition():
    base = datasets.table1()
    s0 = root_partition(base)
    assert s0.nodes[0].class_counts == {"Plan1": 9, "Plan2": 5}
    step = refine_partition(s0, base, [datasets.DURATION_SPEC], LearnerParams())
    assert step.kind == "split" and step.attribute == "X_1"
    counts = {n.id: (n.class_counts["Plan1"], n.class_counts["Plan2"]) for n in step.partition.nodes}
    assert counts == {"s_1": (2, 3), "s_2": (4, 0), "s_3": (3, 2)}
    # s_1 holds the long durations, as in the figure
    arcs = {a.modality: a.child for a in step.arcs}
    assert arcs == {"Longue": "s_1", "Normale": "s_2", "Courte": "s_3"}


def test_partition_uncertainty_of_fig2():
    nodes = [
        Node("s_1", frozenset(), {"Plan1": 2, "Plan2": 3}, 1),
        Node("s_2", frozenset(), {"Plan1": 4, "Plan2": 0}, 1),
        Node("s_3", frozenset(), {"Plan1": 3, "Plan2": 2}, 1),
    ]
    expected = 5 / 14 * shannon_oracle([2, 3]) * 2
    assert partition_uncertainty(nodes, RAW) == pytest.approx(expected)
    assert partition_uncertainty(nodes, RAW) == pytest.approx(0.6936, abs=1e-3)
    assert partition_uncertainty([Node("s", frozenset(), {"a": 3, "b": 0}, 0)], RAW) == 0.0


def test_first_split_has_maximal_gain():
    base = datasets.table1()
    specs = [
        DiscretizationSpec("X_1", (60, 72), datasets.DURATION_TERMS),
        DiscretizationSpec("X_2", (0.5, 0.85), datasets.PROBABILITY_TERMS),
        DiscretizationSpec("X_3", (70, 85), datasets.COST_TERMS),
    ]
    params = LearnerParams(lam=0.0, mu=1, max_depth=2)
    graph = build_graph(base, specs, params)
    assert graph.root.class_counts == {"Plan1": 9, "Plan2": 5}
    scores = {}
    for spec in specs:
        bins = {}
        for c in base:
            bins.setdefault(spec.bin_of(c.values[spec.attribute]), [0, 0])[c.label == "Plan2"] += 1
        scores[spec.attribute] = sum(sum(b) / 14 * shannon_oracle(b) for b in bins.values())
    chosen = graph.arcs[0].attribute
    assert scores[chosen] == pytest.approx(min(scores.values()))


def test_no_improvement_cases():
    base = datasets.table1()
    assert refine_partition(root_partition(base), base, [datasets.DURATION_SPEC], LearnerParams(mu=15)) is None
    schema = datasets.table1_schema()
    pure = CaseBase(schema, tuple(Case(f"c{i}", {"X_1": i, "X_2": 0.5, "X_3": 1}, "Plan1") for i in range(6)))
    assert refine_partition(root_partition(pure), pure, [datasets.DURATION_SPEC], LearnerParams()) is None
    graph = build_graph(pure, [datasets.DURATION_SPEC])
    assert len(graph.partitions) == 1
    assert graph.leaf_class == {"s_0": "Plan1"}
    rules = extract_rules(graph).rules
    assert len(rules) == 1 and rules[0].premises == () and rules[0].conclusion == "Plan1"


def test_separable_binary_attribute():
    schema = AttributeSchema((Attribute("flag", CATEGORICAL, ("no", "yes")),), ("A", "B"))
    cases = tuple(Case(f"c{i}", {"flag": "yes" if i % 2 else "no"}, "B" if i % 2 else "A") for i in range(10))
    base = CaseBase(schema, cases)
    graph = build_graph(base, [])
    assert len(graph.terminals) == 2
    assert all(graph.predict(c) == c.label for c in base)


def test_empty_training_set_rejected():
    with pytest.raises(FuzzyBMLError):
        build_graph(CaseBase(datasets.table1_schema(), ()), [])


def test_normale_rule_on_table1():
    rules = extract_rules(build_graph(datasets.table1(), [datasets.DURATION_SPEC])).rules
    assert any(r.premises == ("X_1=Normale",) and r.conclusion == "Plan1" for r in rules)


def test_hand_built_graph_yields_five_rules():
    def node(i, depth):
        return Node(f"s_{i}", frozenset(), {"Plan1": 1, "Plan2": 0}, depth)

    s = {i: node(i, 0 if i == 0 else 1 if i <= 3 else 2) for i in range(8)}
    partitions = [
        Partition(0, (s[0],)),
        Partition(1, (s[1], s[2], s[3])),
        Partition(2, (s[4], s[5], s[2], s[3])),
        Partition(3, (s[4], s[5], s[2], s[6], s[7])),
    ]
    arcs = [
        Arc("s_0", "X_1", "Longue", "s_1"),
        Arc("s_0", "X_1", "Normale", "s_2"),
        Arc("s_0", "X_1", "Courte", "s_3"),
        Arc("s_1", "X_3", "Faible", "s_4"),
        Arc("s_1", "X_3", "Elevé", "s_5"),
        Arc("s_3", "X_2", "Incertain", "s_6"),
        Arc("s_3", "X_2", "Douteux", "s_7"),
    ]
    leaf = {"s_4": "Plan1", "s_5": "Plan2", "s_2": "Plan1", "s_6": "Plan2", "s_7": "Plan1"}
    schema = datasets.table1_schema()
    graph = InductionGraph(partitions, arcs, leaf, tuple((a.name, a.modalities) for a in schema.attributes), ("Plan1", "Plan2"))
    got = {(frozenset(r.premises), r.conclusion) for r in extract_rules(graph).rules}
    want = {(frozenset(r.premises), r.conclusion) for r in datasets.fig6_rule_base().rules}
    assert got == want


def test_graph_json_round_trip():
    graph = build_graph(datasets.table1(), list(datasets.SYNTHETIC_SPECS))
    again = InductionGraph.from_dict(graph.to_dict())
    assert again.to_dict() == graph.to_dict()
    assert all(again.predict(c) == graph.predict(c) for c in datasets.table1())


def test_merges_give_a_graph_not_a_tree():
    graph = build_graph(datasets.table1(), list(datasets.SYNTHETIC_SPECS), LearnerParams())
    parents = {}
    for a in graph.arcs:
        parents.setdefault(a.child, set()).add(a.parent)
    assert any(len(p) > 1 for p in parents.values())
    tree = build_graph(datasets.table1(), list(datasets.SYNTHETIC_SPECS), LearnerParams().tree_mode)
    assert all(a.attribute is not None for a in tree.arcs)


def _check_graph(graph, base, params):
    ids = {c.id for c in base}
    previous = math.inf
    for p in graph.partitions:
        members = [m for n in p.nodes for m in n.member_case_ids]
        assert len(members) == len(set(members))
        assert set(members) == ids
        for n in p.nodes:
            assert n.size == len(n.member_case_ids)
        u = partition_uncertainty(p, params)
        assert u <= previous + 1e-12
        previous = u
    step_of = {}
    for p in graph.partitions:
        for n in p.nodes:
            step_of.setdefault(n.id, p.step)
    for a in graph.arcs:
        assert step_of[a.child] == step_of[a.parent] + 1 or a.child in {
            n.id for p in graph.partitions if p.step > step_of[a.parent] for n in p.nodes
        }
    children = {a.child for a in graph.arcs}
    assert children == set(graph.nodes()) - {graph.root.id}


def _random_base(rng, n, n_attrs):
    attrs = tuple(Attribute(f"A{i}") for i in range(n_attrs)) + (Attribute("C", CATEGORICAL, ("u", "v", "w")),)
    schema = AttributeSchema(attrs, ("P", "Q", "R"))
    cases = []
    for i in range(n):
        values = {f"A{j}": round(rng.uniform(0, 10), 1) for j in range(n_attrs)}
        values["C"] = rng.choice("uvw")
        label = "P" if values["A0"] < 4 else ("Q" if values["C"] != "w" else "R")
        if rng.random() < 0.15:
            label = rng.choice("PQR")
        cases.append(Case(f"c{i}", values, label))
    base = CaseBase(schema, tuple(cases))
    specs = [discretize(base, f"A{j}", "supervised", n_cuts=rng.randint(1, 3)) for j in range(n_attrs)]
    return base, specs


@settings(max_examples=40, deadline=None)
@given(
    st.integers(0, 10**6),
    st.integers(5, 40),
    st.sampled_from(["shannon", "quadratic"]),
    st.sampled_from([0.0, 1.0]),
    st.integers(1, 4),
    st.booleans(),
)
def test_graph_invariants_and_resubstitution(seed, n, measure, lam, mu, merge):
    rng = random.Random(seed)
    base, specs = _random_base(rng, n, rng.randint(1, 3))
    params = LearnerParams(measure=measure, lam=lam, mu=mu, max_depth=4, merge=merge)
    graph = build_graph(base, specs, params)
    _check_graph(graph, base, params)
    rules = extract_rules(graph).rules
    terminals = {t.id for t in graph.terminals}
    for case in base:
        facts = {f"{a}={graph.modality(case, a)}" for a, _ in graph.attributes}
        fired = {r.conclusion for r in rules if set(r.premises) <= facts}
        reached = graph.route(case)
        if reached in terminals:
            assert fired == {graph.leaf_class[reached]}
            assert graph.predict(case) == graph.leaf_class[reached]
