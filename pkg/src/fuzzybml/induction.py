"""Induction-graph learning by successive partition refinement.

Starting from a single root node holding the whole learning sample, each
step either splits a node on the modalities of one attribute or merges two
nodes, whichever lowers the size-weighted uncertainty of the partition the
most. Splits whose children fall below the admissible size ``mu`` have the
small children fused together, which gives nodes with several incoming arcs.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .cases import CaseBase, Case
from .engine import Rule, RuleBase
from .errors import FuzzyBMLError

SHANNON = "shannon"
QUADRATIC = "quadratic"

_TIE_EPS = 1e-12


@dataclass(frozen=True)
class LearnerParams:
    measure: str = SHANNON
    lam: float = 1.0
    mu: int = 2
    max_depth: int = 5
    min_gain: float = 1e-9
    merge: bool = True

    def __post_init__(self):
        if self.measure not in (SHANNON, QUADRATIC):
            raise FuzzyBMLError(f"unknown uncertainty measure {self.measure!r}")
        if self.lam < 0:
            raise FuzzyBMLError("lambda must be non-negative")
        if self.mu < 1:
            raise FuzzyBMLError("mu must be at least 1")
        if self.max_depth < 1:
            raise FuzzyBMLError("max_depth must be positive")
        if self.min_gain < 0:
            raise FuzzyBMLError("min_gain must be non-negative")

    @property
    def tree_mode(self) -> "LearnerParams":
        return replace(self, merge=False)


DEFAULT_PARAMS = LearnerParams()


def uncertainty(counts: Mapping[str, int] | Sequence[int], params: LearnerParams = DEFAULT_PARAMS) -> float:
    """Shannon entropy (bits) or quadratic (Gini) impurity of a node.

    Frequencies are Laplace-smoothed: ``(n_j + lam) / (n + m * lam)``.
    """
    values = list(counts.values()) if isinstance(counts, Mapping) else list(counts)
    n = sum(values)
    m = len(values)
    if n == 0 or m == 0:
        return 0.0
    lam = params.lam
    denom = n + m * lam
    freqs = [(c + lam) / denom for c in values]
    if params.measure == SHANNON:
        h = -sum(f * math.log2(f) for f in freqs if 0.0 < f < 1.0)
    else:
        h = sum(f * (1.0 - f) for f in freqs)
    return max(0.0, h)


def _uncertainty_rows(counts: np.ndarray, params: LearnerParams) -> np.ndarray:
    # Vectorised uncertainty over the last axis.
    counts = counts.astype(float)
    n = counts.sum(axis=-1, keepdims=True)
    m = counts.shape[-1]
    denom = n + m * params.lam
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(denom > 0, (counts + params.lam) / np.where(denom > 0, denom, 1.0), 0.0)
        if params.measure == SHANNON:
            terms = np.where((f > 0) & (f < 1), -f * np.log2(np.where(f > 0, f, 1.0)), 0.0)
        else:
            terms = f * (1.0 - f)
    return np.maximum(terms.sum(axis=-1), 0.0)


@dataclass(frozen=True)
class DiscretizationSpec:
    """Cut points for one numeric attribute.

    Bin ``i`` holds ``cut_points[i-1] <= x < cut_points[i]``; the first bin is
    everything below the first cut and the last everything from the last cut
    up. ``modality_names`` names the bins in that order.
    """

    attribute: str
    cut_points: tuple[float, ...]
    modality_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "cut_points", tuple(float(c) for c in self.cut_points))
        object.__setattr__(self, "modality_names", tuple(self.modality_names))
        cuts = self.cut_points
        if any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise FuzzyBMLError(f"{self.attribute}: cut points must be strictly ascending")
        if len(self.modality_names) != len(cuts) + 1:
            raise FuzzyBMLError(
                f"{self.attribute}: {len(cuts)} cuts need {len(cuts) + 1} modality names"
            )
        if len(set(self.modality_names)) != len(self.modality_names):
            raise FuzzyBMLError(f"{self.attribute}: duplicate modality names")

    def bin_of(self, x: float) -> int:
        return bisect.bisect_right(self.cut_points, x)

    def modality_of(self, x: float) -> str:
        return self.modality_names[self.bin_of(x)]

    def to_dict(self) -> dict:
        return {
            "attribute": self.attribute,
            "cut_points": list(self.cut_points),
            "modality_names": list(self.modality_names),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "DiscretizationSpec":
        return cls(data["attribute"], tuple(data["cut_points"]), tuple(data["modality_names"]))


def default_modality_names(count: int) -> tuple[str, ...]:
    return tuple(f"I{i + 1}" for i in range(count))


def discretize(
    base: CaseBase,
    attribute: str,
    method: str = "supervised",
    cuts: Sequence[float] | None = None,
    names: Sequence[str] | None = None,
    n_cuts: int = 2,
    params: LearnerParams = DEFAULT_PARAMS,
) -> DiscretizationSpec:
    """Discretize a numeric attribute.

    ``method="explicit"`` takes ``cuts`` verbatim. ``method="supervised"``
    places up to ``n_cuts`` cuts on midpoints between consecutive distinct
    values so that the weighted uncertainty of the induced bins is minimal
    (exact dynamic programme over the sorted values).
    """
    attr = base.schema.attribute(attribute)
    if not attr.is_numeric:
        raise FuzzyBMLError(f"attribute {attribute!r} is categorical; nothing to discretize")
    if method == "explicit":
        if cuts is None:
            raise FuzzyBMLError("explicit discretization needs cut points")
        found = tuple(cuts)
    elif method == "supervised":
        found = _supervised_cuts(base, attribute, n_cuts, params)
    else:
        raise FuzzyBMLError(f"unknown discretization method {method!r}")
    if names is None or len(names) != len(found) + 1:
        names = default_modality_names(len(found) + 1)
    return DiscretizationSpec(attribute, found, tuple(names))


def _supervised_cuts(base: CaseBase, attribute: str, n_cuts: int, params: LearnerParams) -> tuple[float, ...]:
    labels = list(base.schema.class_labels)
    label_index = {lab: i for i, lab in enumerate(labels)}
    xs = sorted({float(c.values[attribute]) for c in base.cases})
    if len(xs) < 2 or n_cuts < 1:
        return ()
    for c in base.cases:
        if c.label is None:
            raise FuzzyBMLError("supervised discretization needs labeled cases")
    pos = {x: i for i, x in enumerate(xs)}
    d = len(xs)
    per_value = np.zeros((d, len(labels)), dtype=np.int64)
    for c in base.cases:
        per_value[pos[float(c.values[attribute])], label_index[c.label]] += 1
    prefix = np.vstack([np.zeros((1, len(labels)), dtype=np.int64), np.cumsum(per_value, axis=0)])
    n = prefix[-1].sum()

    # cost[i, j]: weighted uncertainty of the bin holding distinct values i..j-1
    seg = prefix[None, :, :] - prefix[:, None, :]
    sizes = seg.sum(axis=-1)
    cost = np.where(sizes > 0, sizes / n * _uncertainty_rows(np.maximum(seg, 0), params), np.inf)
    idx = np.arange(d + 1)
    cost[idx[:, None] >= idx[None, :]] = np.inf

    k = min(n_cuts, d - 1)
    best = cost[0].copy()
    back = []
    for _ in range(k):
        # total[i, j] = best[i] + cost[i, j]; argmin keeps the leftmost tie
        total = best[:, None] + cost
        arg = np.argmin(total, axis=0)
        best = total[arg, np.arange(d + 1)]
        back.append(arg)
    boundaries = []
    j = d
    for arg in reversed(back):
        i = int(arg[j])
        boundaries.append(i)
        j = i
    boundaries.reverse()
    return tuple((xs[b - 1] + xs[b]) / 2.0 for b in boundaries)


def bins_uncertainty(base: CaseBase, spec: DiscretizationSpec, params: LearnerParams = DEFAULT_PARAMS) -> float:
    """Weighted uncertainty of the partition a discretization induces."""
    labels = base.schema.class_labels
    groups: dict[int, dict[str, int]] = {}
    for c in base.cases:
        b = spec.bin_of(float(c.values[spec.attribute]))
        groups.setdefault(b, {lab: 0 for lab in labels})[c.label] += 1
    n = len(base.cases)
    return sum(sum(g.values()) / n * uncertainty(g, params) for g in groups.values())


@dataclass(frozen=True)
class Node:
    id: str
    member_case_ids: frozenset[str]
    class_counts: Mapping[str, int]
    depth: int

    @property
    def size(self) -> int:
        return sum(self.class_counts.values())

    def majority(self) -> str:
        # Ties go to the lexicographically smallest label.
        return min(self.class_counts, key=lambda lab: (-self.class_counts[lab], lab))


@dataclass(frozen=True)
class Partition:
    step: int
    nodes: tuple[Node, ...]

    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)


@dataclass(frozen=True)
class Arc:
    """``attribute``/``modality`` are ``None`` on merge arcs."""

    parent: str
    attribute: str | None
    modality: str | None
    child: str

    @property
    def is_merge(self) -> bool:
        return self.attribute is None


def partition_uncertainty(p: Partition | Sequence[Node], params: LearnerParams = DEFAULT_PARAMS) -> float:
    nodes = p.nodes if isinstance(p, Partition) else tuple(p)
    if not nodes:
        raise FuzzyBMLError("partition is empty")
    n = sum(node.size for node in nodes)
    if n == 0:
        return 0.0
    return sum(node.size / n * uncertainty(node.class_counts, params) for node in nodes)


@dataclass
class InductionGraph:
    partitions: list[Partition]
    arcs: list[Arc]
    leaf_class: dict[str, str]
    attributes: tuple[tuple[str, tuple[str, ...]], ...]
    class_labels: tuple[str, ...]
    specs: dict[str, DiscretizationSpec] = field(default_factory=dict)

    @property
    def root(self) -> Node:
        return self.partitions[0].nodes[0]

    @property
    def terminals(self) -> tuple[Node, ...]:
        return self.partitions[-1].nodes

    def nodes(self) -> dict[str, Node]:
        out = {}
        for p in self.partitions:
            for n in p.nodes:
                out.setdefault(n.id, n)
        return out

    def out_arcs(self) -> dict[str, list[Arc]]:
        out: dict[str, list[Arc]] = {}
        for a in self.arcs:
            out.setdefault(a.parent, []).append(a)
        return out

    def in_arcs(self) -> dict[str, list[Arc]]:
        inc: dict[str, list[Arc]] = {}
        for a in self.arcs:
            inc.setdefault(a.child, []).append(a)
        return inc

    def modality(self, case: Case, attribute: str) -> str:
        if attribute not in case.values:
            raise FuzzyBMLError(f"query has no value for {attribute}")
        value = case.values[attribute]
        spec = self.specs.get(attribute)
        return spec.modality_of(float(value)) if spec is not None else value

    def route(self, case: Case) -> str:
        """Follow crisp modality tests (and merge arcs) from the root; returns
        the id of the node where routing stops."""
        out = self.out_arcs()
        node = self.root.id
        while node in out:
            arcs = out[node]
            if arcs[0].is_merge:
                node = arcs[0].child
                continue
            attr = arcs[0].attribute
            mod = self.modality(case, attr)
            nxt = next((a.child for a in arcs if a.modality == mod), None)
            if nxt is None:
                break
            node = nxt
        return node

    def predict(self, case: Case) -> str:
        node_id = self.route(case)
        if node_id in self.leaf_class:
            return self.leaf_class[node_id]
        return self.nodes()[node_id].majority()

    def to_dict(self) -> dict:
        nodes = self.nodes()
        return {
            "attributes": [{"name": a, "modalities": list(m)} for a, m in self.attributes],
            "class_labels": list(self.class_labels),
            "specs": [s.to_dict() for s in self.specs.values()],
            "nodes": [
                {
                    "id": n.id,
                    "members": sorted(n.member_case_ids),
                    "class_counts": dict(n.class_counts),
                    "depth": n.depth,
                }
                for n in nodes.values()
            ],
            "partitions": [{"step": p.step, "nodes": [n.id for n in p.nodes]} for p in self.partitions],
            "arcs": [[a.parent, a.attribute, a.modality, a.child] for a in self.arcs],
            "leaf_class": dict(self.leaf_class),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "InductionGraph":
        nodes = {
            d["id"]: Node(d["id"], frozenset(d["members"]), dict(d["class_counts"]), d["depth"])
            for d in data["nodes"]
        }
        specs = [DiscretizationSpec.from_dict(s) for s in data.get("specs", [])]
        return cls(
            partitions=[Partition(p["step"], tuple(nodes[i] for i in p["nodes"])) for p in data["partitions"]],
            arcs=[Arc(*a) for a in data["arcs"]],
            leaf_class=dict(data["leaf_class"]),
            attributes=tuple((a["name"], tuple(a["modalities"])) for a in data["attributes"]),
            class_labels=tuple(data["class_labels"]),
            specs={s.attribute: s for s in specs},
        )


def learner_attributes(base: CaseBase, specs: Iterable[DiscretizationSpec]) -> tuple[tuple[str, tuple[str, ...]], ...]:
    """Attributes the learner may split on, with modalities in fact order.

    Numeric attributes take part only through a discretization spec. When
    the schema declares modality names for a numeric attribute and the
    spec's names are a permutation of them, the schema order wins.
    """
    by_name = {s.attribute: s for s in specs}
    out = []
    for attr in base.schema.attributes:
        if attr.is_numeric:
            spec = by_name.get(attr.name)
            if spec is None:
                continue
            mods = spec.modality_names
            if attr.modalities is not None and sorted(attr.modalities) == sorted(mods):
                mods = attr.modalities
            out.append((attr.name, tuple(mods)))
        else:
            out.append((attr.name, tuple(attr.modalities)))
    unknown = set(by_name) - {a.name for a in base.schema.attributes}
    if unknown:
        raise FuzzyBMLError(f"discretization for unknown attribute(s) {sorted(unknown)}")
    return tuple(out)


@dataclass(frozen=True)
class Refinement:
    kind: str  # "split" or "merge"
    gain: float
    partition: Partition
    arcs: tuple[Arc, ...]
    targets: tuple[str, ...]
    attribute: str | None = None


class _Learner:
    def __init__(self, base: CaseBase, specs: Sequence[DiscretizationSpec], params: LearnerParams):
        self.base = base
        self.params = params
        self.labels = tuple(base.schema.class_labels)
        self.attributes = learner_attributes(base, specs)
        self.specs = {s.attribute: s for s in specs}
        self.case_by_id = {c.id: c for c in base.cases}
        self.n = len(base.cases)
        # modality index of every case for every attribute, in fact order
        self.codes: dict[str, dict[str, int]] = {}
        for name, mods in self.attributes:
            index = {m: i for i, m in enumerate(mods)}
            spec = self.specs.get(name)
            col = {}
            for c in base.cases:
                mod = spec.modality_of(float(c.values[name])) if spec is not None else c.values[name]
                col[c.id] = index[mod]
            self.codes[name] = col

    def node(self, node_id: str, members: Iterable[str], depth: int) -> Node:
        members = frozenset(members)
        counts = {lab: 0 for lab in self.labels}
        for cid in members:
            counts[self.case_by_id[cid].label] += 1
        return Node(node_id, members, counts, depth)

    def weighted(self, node: Node) -> float:
        return node.size / self.n * uncertainty(node.class_counts, self.params) if self.n else 0.0

    def split_groups(self, node: Node, attribute: str, n_mods: int) -> list[tuple[list[int], list[str]]] | None:
        buckets: list[list[str]] = [[] for _ in range(n_mods)]
        col = self.codes[attribute]
        for cid in sorted(node.member_case_ids):
            buckets[col[cid]].append(cid)
        if sum(1 for b in buckets if b) < 2:
            return None
        mu = self.params.mu
        groups = [([i], buckets[i]) for i in range(n_mods) if len(buckets[i]) >= mu]
        small = [i for i in range(n_mods) if len(buckets[i]) < mu]
        if small:
            fused = ([*small], [cid for i in small for cid in buckets[i]])
            if len(fused[1]) >= mu:
                groups.append(fused)
            elif groups:
                # still too small: absorb into the smallest admissible child
                target = min(range(len(groups)), key=lambda g: (len(groups[g][1]), groups[g][0][0]))
                mods, members = groups[target]
                groups[target] = (mods + fused[0], members + fused[1])
            else:
                return None
        if len(groups) < 2:
            return None
        for mods, _ in groups:
            mods.sort()
        groups.sort(key=lambda g: g[0][0])
        return groups

    def candidates(self, p: Partition, next_index: int) -> list[Refinement]:
        params = self.params
        before = {node.id: self.weighted(node) for node in p.nodes}
        out = []
        for pos, node in enumerate(p.nodes):
            if node.depth >= params.max_depth:
                continue
            for name, mods in sorted(self.attributes):
                groups = self.split_groups(node, name, len(mods))
                if groups is None:
                    continue
                children, arcs = [], []
                for k, (mod_idx, members) in enumerate(groups):
                    child = self.node(f"s_{next_index + k}", members, node.depth + 1)
                    children.append(child)
                    arcs.extend(Arc(node.id, name, mods[i], child.id) for i in mod_idx)
                gain = before[node.id] - sum(self.weighted(c) for c in children)
                nodes = p.nodes[:pos] + tuple(children) + p.nodes[pos + 1:]
                out.append(
                    Refinement("split", gain, Partition(p.step + 1, nodes), tuple(arcs), (node.id,), name)
                )
        if params.merge:
            for i, a in enumerate(p.nodes):
                for j in range(i + 1, len(p.nodes)):
                    b = p.nodes[j]
                    if a.depth != b.depth or a.size + b.size < params.mu:
                        continue
                    merged = self.node(f"s_{next_index}", a.member_case_ids | b.member_case_ids, a.depth)
                    gain = before[a.id] + before[b.id] - self.weighted(merged)
                    nodes = p.nodes[:i] + (merged,) + p.nodes[i + 1:j] + p.nodes[j + 1:]
                    arcs = (Arc(a.id, None, None, merged.id), Arc(b.id, None, None, merged.id))
                    out.append(Refinement("merge", gain, Partition(p.step + 1, nodes), arcs, (a.id, b.id)))
        return out


def _next_index(p: Partition) -> int:
    return 1 + max(int(n.id.split("_")[1]) for n in p.nodes)


def _pick(cands: list[Refinement], positions: Mapping[str, int], min_gain: float) -> Refinement | None:
    if not cands:
        return None
    top = max(c.gain for c in cands)
    if top <= min_gain:
        return None
    tied = [c for c in cands if c.gain >= top - _TIE_EPS]

    def key(c: Refinement):
        # splits before merges, then attribute name, then node position
        return (0 if c.kind == "split" else 1, c.attribute or "", [positions[t] for t in c.targets])

    return min(tied, key=key)


def root_partition(base: CaseBase) -> Partition:
    learner = _Learner(base, (), DEFAULT_PARAMS)
    return Partition(0, (learner.node("s_0", (c.id for c in base.cases), 0),))


def refine_partition(
    p: Partition,
    base: CaseBase,
    specs: Sequence[DiscretizationSpec],
    params: LearnerParams = DEFAULT_PARAMS,
) -> Refinement | None:
    """Best admissible split or merge of ``p``, or ``None`` if none lowers
    the partition uncertainty by more than ``params.min_gain``."""
    learner = _Learner(base, specs, params)
    return _refine(learner, p)


def _refine(learner: _Learner, p: Partition) -> Refinement | None:
    positions = {n.id: i for i, n in enumerate(p.nodes)}
    return _pick(learner.candidates(p, _next_index(p)), positions, learner.params.min_gain)


MAX_STEPS = 500


def build_graph(
    train: CaseBase,
    specs: Sequence[DiscretizationSpec],
    params: LearnerParams = DEFAULT_PARAMS,
) -> InductionGraph:
    if len(train) == 0:
        raise FuzzyBMLError("cannot learn from an empty training set")
    if any(c.label is None for c in train.cases):
        raise FuzzyBMLError("training cases must be labeled")
    learner = _Learner(train, specs, params)
    partitions = [Partition(0, (learner.node("s_0", (c.id for c in train.cases), 0),))]
    arcs: list[Arc] = []
    for _ in range(MAX_STEPS):
        step = _refine(learner, partitions[-1])
        if step is None:
            break
        partitions.append(step.partition)
        arcs.extend(step.arcs)
    leaf_class = {n.id: n.majority() for n in partitions[-1].nodes}
    return InductionGraph(
        partitions=partitions,
        arcs=arcs,
        leaf_class=leaf_class,
        attributes=learner.attributes,
        class_labels=learner.labels,
        specs=dict(learner.specs),
    )


def fact_label(attribute: str, modality: str) -> str:
    return f"{attribute}={modality}"


def path_premises(g: InductionGraph, node_id: str) -> list[frozenset[tuple[str, str]]]:
    """Distinct satisfiable premise sets over all root-to-node paths."""
    inc = g.in_arcs()
    root = g.root.id
    found: list[frozenset[tuple[str, str]]] = []

    def walk(node: str, acc: frozenset):
        if node == root:
            if acc not in found:
                found.append(acc)
            return
        for arc in inc.get(node, ()):
            nxt = acc
            if not arc.is_merge:
                clash = any(a == arc.attribute and m != arc.modality for a, m in acc)
                if clash:
                    continue
                nxt = acc | {(arc.attribute, arc.modality)}
            walk(arc.parent, nxt)

    walk(node_id, frozenset())
    return found


def graph_facts(g: InductionGraph) -> list[str]:
    facts = [fact_label(a, m) for a, mods in g.attributes for m in mods]
    return facts + list(g.class_labels)


def extract_rules(g: InductionGraph) -> RuleBase:
    """One rule per distinct premise set leading to each terminal node."""
    facts = graph_facts(g)
    order = {f: i for i, f in enumerate(facts)}
    rules = []
    for node in g.terminals:
        sets = [sorted((fact_label(a, m) for a, m in ps), key=order.__getitem__) for ps in path_premises(g, node.id)]
        sets.sort(key=lambda s: [order[f] for f in s])
        for premises in sets:
            rules.append(Rule(f"R_{len(rules) + 1}", tuple(premises), g.leaf_class[node.id]))
    return RuleBase(tuple(facts), tuple(rules))


def graph_rule_base(g: InductionGraph) -> RuleBase:
    """The graph itself as rules: one ``parent & test -> child`` rule per
    arc (merge arcs have no test) and one ``terminal -> class`` rule per
    terminal node."""
    facts: list[str] = [g.root.id]
    rules = []
    for arc in g.arcs:
        premises = [arc.parent]
        if not arc.is_merge:
            test = fact_label(arc.attribute, arc.modality)
            if test not in facts:
                facts.append(test)
            premises.append(test)
        if arc.child not in facts:
            facts.append(arc.child)
        rules.append(Rule(f"ARC_{len(rules) + 1}", tuple(premises), arc.child))
    for node in g.terminals:
        if node.id not in facts:
            facts.append(node.id)
    for i, node in enumerate(g.terminals, start=1):
        rules.append(Rule(f"LEAF_{i}", (node.id,), g.leaf_class[node.id]))
    facts.extend(lab for lab in g.class_labels if lab not in facts)
    return RuleBase(tuple(facts), tuple(rules))
