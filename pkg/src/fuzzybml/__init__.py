"""Case-based plan retrieval with induction-graph rules run on a fuzzy
Boolean cellular inference engine."""

from .cases import (
    Attribute,
    AttributeSchema,
    Case,
    CaseBase,
    load_case_base,
    load_schema,
    save_case_base,
    split_dataset,
    validate_case,
)
from .engine import (
    AutomatonConfig,
    CellularKnowledgeBase,
    Rule,
    RuleBase,
    assert_facts,
    backward_chain,
    compile_rule_base,
    delta_fact,
    delta_rule,
    forward_chain,
)
from .errors import FuzzyBMLError
from .fuzzy import (
    FuzzyAssignment,
    LinguisticVariable,
    Trapezoid,
    assert_fuzzy,
    defuzzify,
    fuzzify,
    fuzzy_infer,
    membership,
)
from .induction import (
    DiscretizationSpec,
    InductionGraph,
    LearnerParams,
    build_graph,
    discretize,
    extract_rules,
    partition_uncertainty,
    refine_partition,
    uncertainty,
)
from .planning import AndOrGraph, Task, build_and_or_graph, enumerate_plans, synthesize_cases
from .retrieval import Classifier, MethodConfig, compare, evaluate, index_case, knn_classify, train

__version__ = "0.1.0"

__all__ = [
    "Attribute",
    "AttributeSchema",
    "Case",
    "CaseBase",
    "load_case_base",
    "load_schema",
    "save_case_base",
    "split_dataset",
    "validate_case",
    "AutomatonConfig",
    "CellularKnowledgeBase",
    "Rule",
    "RuleBase",
    "assert_facts",
    "backward_chain",
    "compile_rule_base",
    "delta_fact",
    "delta_rule",
    "forward_chain",
    "FuzzyBMLError",
    "FuzzyAssignment",
    "LinguisticVariable",
    "Trapezoid",
    "assert_fuzzy",
    "defuzzify",
    "fuzzify",
    "fuzzy_infer",
    "membership",
    "DiscretizationSpec",
    "InductionGraph",
    "LearnerParams",
    "build_graph",
    "discretize",
    "extract_rules",
    "partition_uncertainty",
    "refine_partition",
    "uncertainty",
    "AndOrGraph",
    "Task",
    "build_and_or_graph",
    "enumerate_plans",
    "synthesize_cases",
    "Classifier",
    "MethodConfig",
    "compare",
    "evaluate",
    "index_case",
    "knn_classify",
    "train",
]
