"""Retrieval: index a new problem to a plan, and score retrieval methods.

Three methods share one interface: the fuzzy Boolean model (induction
graph rules run on the graded cell engine), a plain decision tree routed by
crisp modality tests, and k nearest neighbours.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence, TextIO

from .cases import Case, CaseBase, AttributeSchema, split_dataset
from .engine import AutomatonConfig, CellularKnowledgeBase, RuleBase, compile_rule_base
from .errors import FuzzyBMLError, FuzzyConfigError
from .fuzzy import (
    FuzzyAssignment,
    LinguisticVariable,
    assert_fuzzy,
    crisp_assignment,
    defuzzify,
    fact_label,
    fuzzify,
    fuzzy_chain,
    fuzzy_config_to_dict,
    membership,
    ruspini_variable,
)
from .induction import (
    DEFAULT_PARAMS,
    DiscretizationSpec,
    InductionGraph,
    LearnerParams,
    build_graph,
    discretize,
    extract_rules,
)

FUZZY_BML = "fuzzy-bml"
DECISION_TREE = "decision-tree"
KNN = "knn"
KINDS = (FUZZY_BML, DECISION_TREE, KNN)

RESUBSTITUTION = "resubstitution"
HOLDOUT = "holdout"
LEAVE_ONE_OUT = "leave-one-out"
PROTOCOL_ALIASES = {
    "resubstitution": RESUBSTITUTION,
    "resub": RESUBSTITUTION,
    "holdout": HOLDOUT,
    "leave-one-out": LEAVE_ONE_OUT,
    "loocv": LEAVE_ONE_OUT,
    "loo": LEAVE_ONE_OUT,
}


def normalize_protocol(name: str) -> str:
    try:
        return PROTOCOL_ALIASES[name]
    except KeyError:
        raise FuzzyBMLError(f"unknown protocol {name!r}") from None


@dataclass(frozen=True)
class MethodConfig:
    """How to train one retrieval method.

    Numeric attributes listed in ``cuts`` are discretized at those points;
    the others get ``n_cuts`` supervised cuts, or are left out when
    ``supervise_rest`` is false. ``overlap`` sets the ramp
    width of derived fuzzy terms as a fraction of the attribute's range;
    ``fuzzy`` overrides them per attribute. ``crisp`` runs the fuzzy model
    with 0/1 memberships.
    """

    kind: str
    name: str | None = None
    params: LearnerParams = DEFAULT_PARAMS
    cuts: Mapping[str, Sequence[float]] = field(default_factory=dict)
    names: Mapping[str, Sequence[str]] = field(default_factory=dict)
    n_cuts: int = 2
    supervise_rest: bool = True
    k: int = 3
    fuzzy: Mapping[str, LinguisticVariable] = field(default_factory=dict)
    overlap: float = 0.1
    cutoff: float = 0.0
    crisp: bool = False

    def __post_init__(self):
        # tuples, so a config survives a JSON round trip unchanged
        object.__setattr__(self, "cuts", {k: tuple(v) for k, v in self.cuts.items()})
        object.__setattr__(self, "names", {k: tuple(v) for k, v in self.names.items()})
        object.__setattr__(self, "fuzzy", dict(self.fuzzy))
        if self.kind not in KINDS:
            raise FuzzyBMLError(f"unknown method kind {self.kind!r}")
        if self.k < 1:
            raise FuzzyBMLError("k must be a positive integer")
        if self.overlap < 0:
            raise FuzzyBMLError("overlap must be non-negative")

    @property
    def label(self) -> str:
        return self.name or self.kind


class Decision(NamedTuple):
    label: str | None
    degree: float
    diagnostic: str = ""


@dataclass
class Classifier:
    kind: str
    schema: AttributeSchema | None
    config: MethodConfig | None = None
    graph: InductionGraph | None = None
    rules: RuleBase | None = None
    kb: CellularKnowledgeBase | None = None
    variables: dict[str, LinguisticVariable] = field(default_factory=dict)
    class_labels: tuple[str, ...] = ()
    base: CaseBase | None = None
    ranges: dict[str, tuple[float, float]] = field(default_factory=dict)

    @classmethod
    def from_rules(
        cls,
        rules: RuleBase,
        variables: Mapping[str, LinguisticVariable],
        class_labels: Sequence[str],
        cutoff: float = 0.0,
    ) -> "Classifier":
        """A fuzzy-bml classifier over a hand-written rule base (cannot be
        retrained, so leave-one-out is unavailable)."""
        return cls(
            FUZZY_BML,
            None,
            config=MethodConfig(FUZZY_BML, cutoff=cutoff),
            rules=rules,
            kb=compile_rule_base(rules),
            variables=dict(variables),
            class_labels=tuple(class_labels),
        )

    @property
    def retrainable(self) -> bool:
        return self.schema is not None and self.config is not None


def make_specs(train: CaseBase, config: MethodConfig) -> list[DiscretizationSpec]:
    for name in [*config.cuts, *config.names]:
        if name not in train.schema.names or not train.schema.attribute(name).is_numeric:
            raise FuzzyBMLError(f"cuts/names given for {name!r}, which is not a numeric attribute")
    specs = []
    for attr in train.schema.attributes:
        if not attr.is_numeric:
            continue
        if attr.name in config.cuts:
            cuts = list(config.cuts[attr.name])
            names = config.names.get(attr.name)
            if names is None and attr.bin_names is not None and len(attr.bin_names) == len(cuts) + 1:
                names = attr.bin_names
            specs.append(discretize(train, attr.name, "explicit", cuts=cuts, names=names))
        elif config.supervise_rest:
            spec = discretize(train, attr.name, "supervised", n_cuts=config.n_cuts, params=config.params)
            names = config.names.get(attr.name)
            if names is None and attr.bin_names is not None and len(attr.bin_names) == len(spec.cut_points) + 1:
                names = attr.bin_names
            if names is not None:
                spec = DiscretizationSpec(attr.name, spec.cut_points, tuple(names))
            specs.append(spec)
    return specs


def derive_variables(
    train: CaseBase,
    specs: Sequence[DiscretizationSpec],
    overlap: float,
    overrides: Mapping[str, LinguisticVariable] | None = None,
) -> dict[str, LinguisticVariable]:
    """One linguistic variable per discretized attribute, crossing 0.5 on
    each cut; outer terms stay open so no value falls outside every term."""
    overrides = overrides or {}
    out = {}
    for spec in specs:
        if spec.attribute in overrides:
            var = overrides[spec.attribute]
            if set(var.labels) != set(spec.modality_names):
                raise FuzzyConfigError(
                    f"{spec.attribute}: fuzzy terms {var.labels} do not match modalities "
                    f"{list(spec.modality_names)}"
                )
            out[spec.attribute] = var
            continue
        xs = [float(c.values[spec.attribute]) for c in train.cases]
        lo, hi = (min(xs), max(xs)) if xs else (0.0, 1.0)
        out[spec.attribute] = ruspini_variable(
            spec.attribute, spec.cut_points, spec.modality_names, (lo, hi), overlap * (hi - lo), open_ends=True
        )
    return out


def train(config: MethodConfig, base: CaseBase) -> Classifier:
    if len(base) == 0:
        raise FuzzyBMLError("cannot train on an empty case base")
    if any(c.label is None for c in base.cases):
        raise FuzzyBMLError("training cases must be labeled")
    labels = tuple(base.schema.class_labels)
    if config.kind == KNN:
        ranges = {}
        for attr in base.schema.attributes:
            if attr.is_numeric:
                xs = [float(c.values[attr.name]) for c in base.cases]
                ranges[attr.name] = (min(xs), max(xs))
        return Classifier(KNN, base.schema, config, base=base, ranges=ranges, class_labels=labels)

    specs = make_specs(base, config)
    if config.kind == DECISION_TREE:
        graph = build_graph(base, specs, config.params.tree_mode)
        return Classifier(DECISION_TREE, base.schema, config, graph=graph, class_labels=labels)

    graph = build_graph(base, specs, config.params)
    rules = extract_rules(graph)
    variables = {} if config.crisp else derive_variables(base, specs, config.overlap, config.fuzzy)
    return Classifier(
        FUZZY_BML,
        base.schema,
        config,
        graph=graph,
        rules=rules,
        kb=compile_rule_base(rules),
        variables=variables,
        class_labels=labels,
    )


def knn_distance(a: Case, b: Case, schema: AttributeSchema, ranges: Mapping[str, tuple[float, float]]) -> float:
    """Euclidean over min-max normalised numeric attributes plus 0/1
    mismatch on categorical ones."""
    total = 0.0
    for attr in schema.attributes:
        x, y = a.values[attr.name], b.values[attr.name]
        if attr.is_numeric:
            lo, hi = ranges.get(attr.name, (0.0, 0.0))
            span = hi - lo
            if span > 0:
                total += ((float(x) - float(y)) / span) ** 2
        else:
            total += 0.0 if x == y else 1.0
    return math.sqrt(total)


def knn_classify(
    base: CaseBase,
    query: Case,
    k: int,
    ranges: Mapping[str, tuple[float, float]] | None = None,
) -> str:
    if len(base) == 0:
        raise FuzzyBMLError("k-NN needs a non-empty case base")
    if not 1 <= k <= len(base):
        raise FuzzyBMLError(f"k={k} must lie in 1..{len(base)}")
    if ranges is None:
        ranges = {}
        for attr in base.schema.attributes:
            if attr.is_numeric:
                xs = [float(c.values[attr.name]) for c in base.cases]
                ranges[attr.name] = (min(xs), max(xs))
    schema = base.schema
    # sorted() is stable, so equal distances keep case order
    ranked = sorted(base.cases, key=lambda c: knn_distance(query, c, schema, ranges))
    votes = Counter(c.label for c in ranked[:k])
    return min(votes, key=lambda lab: (-votes[lab], lab))


def _fuzzy_assignments(clf: Classifier, query: Case) -> tuple[list[FuzzyAssignment], str]:
    kb = clf.kb
    known = set(kb.facts)
    specs = clf.graph.specs if clf.graph is not None else {}
    out = []
    for name, value in query.values.items():
        if isinstance(value, str):
            if fact_label(name, value) not in known:
                raise FuzzyConfigError(f"{name}={value} is not a fact of the rule base")
            out.append(crisp_assignment(name, value))
            continue
        x = float(value)
        var = clf.variables.get(name)
        if var is not None:
            lo, hi = var.universe
            if lo <= x <= hi:
                out.append(fuzzify(var, x))
                continue
            # outside the universe: keep raw degrees rather than clamping, so
            # open-ended outer terms still apply
            raw = {t.label: membership(t.mf, x) for t in var.terms}
            if not any(raw.values()):
                return [], f"{name}={x:g} lies outside every fuzzy support"
            out.append(FuzzyAssignment(name, raw))
        elif name in specs:
            out.append(crisp_assignment(name, specs[name].modality_of(x)))
        elif any(f.startswith(name + "=") for f in known):
            raise FuzzyConfigError(f"no fuzzy variable for {name}")
    for a in out:
        a_known = {t: mu for t, mu in a.degrees.items() if fact_label(a.variable, t) in known}
        if len(a_known) != len(a.degrees):
            missing = sorted(set(a.degrees) - set(a_known))
            raise FuzzyConfigError(f"{a.variable}: terms {missing} are not facts of the rule base")
    return out, ""


def fuzzy_trace(query: Case, clf: Classifier) -> tuple[Decision, list[AutomatonConfig]]:
    """Run the fuzzy model on ``query`` and keep every configuration G_k."""
    assignments, problem = _fuzzy_assignments(clf, query)
    if problem:
        return Decision(None, 0.0, problem), []
    trace = fuzzy_chain(clf.kb, assert_fuzzy(clf.kb, assignments, clf.config.cutoff))
    label, degree = defuzzify(clf.kb, trace[-1], clf.class_labels)
    if label is None:
        return Decision(None, 0.0, "no rule fired"), trace
    return Decision(label, degree), trace


def index_case(query: Case, clf: Classifier) -> Decision:
    """Map a problem description to a plan label (``None`` = no decision)."""
    if clf.kind == KNN:
        return Decision(knn_classify(clf.base, query, clf.config.k, clf.ranges), 1.0)
    if clf.kind == DECISION_TREE:
        return Decision(clf.graph.predict(query), 1.0)
    return fuzzy_trace(query, clf)[0]


@dataclass(frozen=True)
class Prediction:
    case_id: str
    true: str
    predicted: str | None
    degree: float


@dataclass
class EvaluationReport:
    method: str
    protocol: str
    predictions: list[Prediction]
    rounds: int = 0

    @property
    def n(self) -> int:
        return len(self.predictions)

    @property
    def confusion(self) -> dict[tuple[str, str | None], int]:
        return dict(Counter((p.true, p.predicted) for p in self.predictions))

    @property
    def correct(self) -> int:
        return sum(1 for p in self.predictions if p.predicted == p.true)

    @property
    def accuracy(self) -> float:
        return self.correct / self.n if self.n else 0.0

    @property
    def no_decisions(self) -> int:
        return sum(1 for p in self.predictions if p.predicted is None)


def _predict_all(clf: Classifier, cases: Sequence[Case]) -> list[Prediction]:
    out = []
    for case in cases:
        d = index_case(Case(case.id, case.values, None), clf)
        out.append(Prediction(case.id, case.label, d.label, d.degree))
    return out


def evaluate(clf: Classifier, test: CaseBase, protocol: str = HOLDOUT) -> EvaluationReport:
    """Score ``clf`` on ``test``.

    Under leave-one-out, ``test`` is the whole sample: each case is held out
    in turn and the classifier retrained on the rest with its own config.
    No-decision outcomes count as errors.
    """
    protocol = normalize_protocol(protocol)
    if len(test) == 0:
        raise FuzzyBMLError("cannot evaluate on an empty case set")
    if any(c.label is None for c in test.cases):
        raise FuzzyBMLError("evaluation cases must be labeled")
    name = clf.config.label if clf.config is not None else clf.kind
    if protocol != LEAVE_ONE_OUT:
        return EvaluationReport(name, protocol, _predict_all(clf, test.cases), rounds=1)
    if not clf.retrainable:
        raise FuzzyBMLError("leave-one-out needs a classifier that can be retrained")
    preds = []
    cases = test.cases
    for i, held_out in enumerate(cases):
        fold = test.subset(cases[:i] + cases[i + 1:])
        model = train(clf.config, fold)
        preds.extend(_predict_all(model, [held_out]))
    return EvaluationReport(name, protocol, preds, rounds=len(cases))


def compare(
    base: CaseBase,
    methods: Sequence[MethodConfig],
    protocol: str = LEAVE_ONE_OUT,
    seed: int = 0,
    train_fraction: float = 0.7,
) -> list[EvaluationReport]:
    """Train and score every method under the same protocol and split."""
    if not methods:
        raise FuzzyBMLError("compare needs at least one method")
    protocol = normalize_protocol(protocol)
    if len(base) == 0:
        raise FuzzyBMLError("cannot compare on an empty case base")
    reports = []
    if protocol == HOLDOUT:
        learn, test = split_dataset(base, train_fraction, seed)
    for cfg in methods:
        if protocol == RESUBSTITUTION:
            reports.append(evaluate(train(cfg, base), base, RESUBSTITUTION))
        elif protocol == HOLDOUT:
            reports.append(evaluate(train(cfg, learn), test, HOLDOUT))
        else:
            reports.append(evaluate(train(cfg, base), base, LEAVE_ONE_OUT))
    return reports


REPORT_HEADER = ("method", "protocol", "accuracy", "n", "no_decisions")


def write_report_table(reports: Sequence[EvaluationReport], dest: TextIO) -> None:
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for r in reports:
        w.writerow([r.method, r.protocol, f"{r.accuracy:.6f}", r.n, r.no_decisions])


def write_predictions(reports: Sequence[EvaluationReport], dest: TextIO) -> None:
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(("method", "id", "true", "predicted", "degree"))
    for r in reports:
        for p in r.predictions:
            w.writerow([r.method, p.case_id, p.true, p.predicted or "", f"{p.degree:.6f}"])


def write_confusion(report: EvaluationReport, dest: TextIO, labels: Sequence[str]) -> None:
    """Rows are true labels, columns predicted labels plus no-decision."""
    w = csv.writer(dest, lineterminator="\n")
    cols = list(labels) + [None]
    w.writerow(["true\\predicted", *labels, "no_decision"])
    conf = report.confusion
    for t in labels:
        w.writerow([t, *(conf.get((t, p), 0) for p in cols)])


MODEL_FORMAT = "fuzzybml-model/1"


def config_to_dict(config: MethodConfig) -> dict:
    p = config.params
    return {
        "kind": config.kind,
        "name": config.name,
        "params": {
            "measure": p.measure,
            "lambda": p.lam,
            "mu": p.mu,
            "max_depth": p.max_depth,
            "min_gain": p.min_gain,
            "merge": p.merge,
        },
        "cuts": {a: list(c) for a, c in config.cuts.items()},
        "names": {a: list(n) for a, n in config.names.items()},
        "n_cuts": config.n_cuts,
        "supervise_rest": config.supervise_rest,
        "k": config.k,
        "fuzzy": fuzzy_config_to_dict(config.fuzzy.values())["variables"],
        "overlap": config.overlap,
        "cutoff": config.cutoff,
        "crisp": config.crisp,
    }


def config_from_dict(data: Mapping) -> MethodConfig:
    p = data.get("params", {})
    params = LearnerParams(
        measure=p.get("measure", DEFAULT_PARAMS.measure),
        lam=p.get("lambda", DEFAULT_PARAMS.lam),
        mu=p.get("mu", DEFAULT_PARAMS.mu),
        max_depth=p.get("max_depth", DEFAULT_PARAMS.max_depth),
        min_gain=p.get("min_gain", DEFAULT_PARAMS.min_gain),
        merge=p.get("merge", DEFAULT_PARAMS.merge),
    )
    fuzzy = {v["name"]: LinguisticVariable.from_dict(v) for v in data.get("fuzzy", [])}
    return MethodConfig(
        data["kind"],
        name=data.get("name"),
        params=params,
        cuts={a: tuple(c) for a, c in data.get("cuts", {}).items()},
        names={a: tuple(n) for a, n in data.get("names", {}).items()},
        n_cuts=data.get("n_cuts", 2),
        supervise_rest=data.get("supervise_rest", True),
        k=data.get("k", 3),
        fuzzy=fuzzy,
        overlap=data.get("overlap", 0.1),
        cutoff=data.get("cutoff", 0.0),
        crisp=data.get("crisp", False),
    )


def model_to_dict(clf: Classifier) -> dict:
    """Everything needed to rebuild ``clf``: schema, config, graph, rules,
    incidence matrices, fuzzy variables and (for k-NN) the stored cases."""
    out = {
        "format": MODEL_FORMAT,
        "kind": clf.kind,
        "class_labels": list(clf.class_labels),
        "schema": clf.schema.to_dict() if clf.schema is not None else None,
        "config": config_to_dict(clf.config) if clf.config is not None else None,
    }
    if clf.graph is not None:
        out["specs"] = [s.to_dict() for s in clf.graph.specs.values()]
        out["graph"] = clf.graph.to_dict()
    if clf.rules is not None:
        out["rules"] = clf.rules.to_dict()
        out["incidence"] = {
            "facts": list(clf.kb.facts),
            "rules": list(clf.kb.rule_ids),
            "R_E": clf.kb.R_E,
            "R_S": clf.kb.R_S,
        }
        out["fuzzy"] = fuzzy_config_to_dict(clf.variables.values())["variables"]
    if clf.base is not None:
        out["cases"] = [
            {"id": c.id, "values": dict(c.values), "label": c.label} for c in clf.base.cases
        ]
        out["ranges"] = {a: list(r) for a, r in clf.ranges.items()}
    return out


def model_from_dict(data: Mapping) -> Classifier:
    if data.get("format") != MODEL_FORMAT:
        raise FuzzyBMLError(f"not a model file (expected format {MODEL_FORMAT!r})")
    kind = data["kind"]
    schema = AttributeSchema.from_dict(data["schema"]) if data.get("schema") else None
    config = config_from_dict(data["config"]) if data.get("config") else None
    clf = Classifier(kind, schema, config, class_labels=tuple(data["class_labels"]))
    if "graph" in data:
        clf.graph = InductionGraph.from_dict(data["graph"])
    if "rules" in data:
        clf.rules = RuleBase.from_dict(data["rules"])
        clf.kb = compile_rule_base(clf.rules)
        clf.variables = {v["name"]: LinguisticVariable.from_dict(v) for v in data.get("fuzzy", [])}
    if "cases" in data:
        cases = tuple(Case(c["id"], dict(c["values"]), c["label"]) for c in data["cases"])
        clf.base = CaseBase(schema, cases)
        clf.ranges = {a: tuple(r) for a, r in data.get("ranges", {}).items()}
    if (kind == FUZZY_BML and clf.kb is None) or (kind == DECISION_TREE and clf.graph is None):
        raise FuzzyBMLError(f"model of kind {kind!r} is missing its payload")
    if kind == KNN and clf.base is None:
        raise FuzzyBMLError("k-NN model is missing its cases")
    return clf


def save_model(clf: Classifier, dest: TextIO) -> None:
    json.dump(model_to_dict(clf), dest, indent=2, ensure_ascii=False)
    dest.write("\n")


def load_model(source: TextIO | str) -> Classifier:
    if isinstance(source, str):
        with open(source, encoding="utf-8") as fh:
            return load_model(fh)
    return model_from_dict(json.load(source))
