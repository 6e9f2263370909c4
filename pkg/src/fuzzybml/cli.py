"""Command-line front end: build cases, train, list rules, infer, evaluate
and compare retrieval methods."""

from __future__ import annotations

import argparse
import json
import re
import sys
from contextlib import contextmanager
from dataclasses import replace
from typing import Sequence

from .cases import (
    AttributeSchema,
    Case,
    CaseBase,
    infer_schema,
    load_case_base,
    load_schema,
    parse_number,
    save_case_base,
    save_schema,
    split_dataset,
)
from .engine import RuleBase, compile_rule_base, format_rules, format_trace, parse_rules
from .errors import FuzzyBMLError
from .fuzzy import load_fuzzy_config
from .induction import LearnerParams, graph_rule_base
from .planning import build_and_or_graph, enumerate_plans, load_project, plan_schema, synthesize_cases
from .retrieval import (
    DECISION_TREE,
    FUZZY_BML,
    HOLDOUT,
    KINDS,
    KNN,
    LEAVE_ONE_OUT,
    PROTOCOL_ALIASES,
    Classifier,
    MethodConfig,
    compare,
    evaluate,
    fuzzy_trace,
    index_case,
    load_model,
    normalize_protocol,
    save_model,
    train,
    write_confusion,
    write_predictions,
    write_report_table,
)

PROG = "fuzzybml"


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # one diagnostic line instead of usage + message
    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message}\n")


@contextmanager
def _reading(path: str):
    """Prefix any failure raised while reading ``path`` with the file name."""
    try:
        yield
    except FileNotFoundError:
        raise CliError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: line {exc.lineno}, column {exc.colno}: invalid JSON ({exc.msg})") from None
    except (FuzzyBMLError, KeyError, TypeError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, FuzzyBMLError) else f"{type(exc).__name__}: {exc}"
        raise CliError(f"{path}: {msg}") from None


@contextmanager
def _output(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


# flag parsing

def _key_list(items: Sequence[str] | None, flag: str, convert) -> dict[str, tuple]:
    out = {}
    for item in items or ():
        name, sep, rest = item.partition("=")
        if not sep or not name.strip() or not rest.strip():
            raise CliError(f"{flag}: expected ATTR=v1,v2,... but got {item!r}")
        try:
            out[name.strip()] = tuple(convert(v.strip()) for v in rest.split(","))
        except ValueError:
            raise CliError(f"{flag}: bad value list in {item!r}") from None
    return out


_QUERY_SPLIT = re.compile(r"[,;]\s*(?=[^,;=]+=)")


def parse_query(text: str, schema: AttributeSchema | None) -> Case:
    """``"X_1=80,X_3=35"`` -> an unlabeled case. Numbers may use a decimal
    comma; a value that is not a number is taken as a term."""
    values = {}
    for part in _QUERY_SPLIT.split(text.strip()):
        name, sep, raw = part.partition("=")
        name, raw = name.strip(), raw.strip()
        if not sep or not name or not raw:
            raise CliError(f"--query: expected ATTR=value but got {part!r}")
        if schema is not None and name not in schema.names:
            raise CliError(f"--query: unknown attribute {name!r}")
        attr = schema.attribute(name) if schema is not None else None
        try:
            values[name] = parse_number(raw)
        except ValueError:
            if attr is not None and attr.is_numeric:
                raise CliError(f"--query: {name}: cannot parse number {raw!r}") from None
            values[name] = raw
    return Case("query", values, None)


def _learner_params(args) -> LearnerParams:
    return LearnerParams(
        measure=args.measure,
        lam=args.lam,
        mu=args.mu,
        max_depth=args.max_depth,
        min_gain=args.min_gain,
        merge=not args.tree,
    )


def _method_config(args, kind: str) -> MethodConfig:
    fuzzy = {}
    if args.fuzzy:
        with _reading(args.fuzzy):
            fuzzy = load_fuzzy_config(args.fuzzy)
    return MethodConfig(
        kind,
        params=_learner_params(args),
        cuts=_key_list(args.cuts, "--cuts", parse_number),
        names=_key_list(args.names, "--names", str),
        n_cuts=2 if args.n_cuts is None else args.n_cuts,
        # explicit cuts alone restrict learning to those attributes
        supervise_rest=not args.cuts or args.n_cuts is not None,
        k=args.k,
        fuzzy=fuzzy,
        overlap=args.overlap,
        cutoff=args.cutoff,
        crisp=args.crisp,
    )


def _load_cases(path: str, schema_path: str | None) -> CaseBase:
    with _reading(schema_path or path):
        schema = load_schema(schema_path) if schema_path else infer_schema(path)
    with _reading(path):
        return load_case_base(path, schema)


def _load_rules(path: str) -> RuleBase:
    with _reading(path):
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        if text.lstrip().startswith("{"):
            return RuleBase.from_dict(json.loads(text))
        return parse_rules(text)


# subcommands

def cmd_build_cases(args) -> int:
    with _reading(args.project):
        project = load_project(args.project)
        graph = build_and_or_graph(project)
    plans = enumerate_plans(graph)
    schema = plan_schema(plans)
    base = synthesize_cases(plans, graph.tasks, schema)
    with _output(args.output) as out:
        save_case_base(base, out)
    if args.schema_out:
        with open(args.schema_out, "w", encoding="utf-8") as fh:
            save_schema(schema, fh)
    return 0


def cmd_train(args) -> int:
    base = _load_cases(args.cases, args.schema)
    clf = train(_method_config(args, args.method), base)
    with _output(args.output) as out:
        save_model(clf, out)
    return 0


def _matrix_lines(name: str, cols: Sequence[str], rows: Sequence[str], m) -> list[str]:
    lines = [f"{name}\t" + "\t".join(cols)]
    lines += [f"{r}\t" + "\t".join(str(v) for v in row) for r, row in zip(rows, m)]
    return lines


def cmd_rules(args) -> int:
    with _reading(args.model):
        clf = load_model(args.model)
    if clf.rules is None:
        raise CliError(f"{args.model}: model of kind {clf.kind!r} has no rule base")
    rb = graph_rule_base(clf.graph) if args.graph else clf.rules
    with _output(args.output) as out:
        if args.json:
            json.dump(rb.to_dict(), out, indent=2, ensure_ascii=False)
            out.write("\n")
        else:
            out.write(format_rules(rb))
        if args.matrices:
            kb = compile_rule_base(rb)
            lines = _matrix_lines("R_E", kb.rule_ids, kb.facts, kb.R_E)
            lines += _matrix_lines("R_S", kb.rule_ids, kb.facts, kb.R_S)
            out.write("\n".join(lines) + "\n")
    return 0


def _rule_classes(rb: RuleBase) -> tuple[str, ...]:
    premises = {p for r in rb.rules for p in r.premises}
    seen = []
    for r in rb.rules:
        if r.conclusion not in premises and r.conclusion not in seen:
            seen.append(r.conclusion)
    return tuple(sorted(seen))


def cmd_infer(args) -> int:
    if bool(args.model) == bool(args.rules):
        raise CliError("infer needs exactly one of --model or --rules")
    if args.model:
        with _reading(args.model):
            clf = load_model(args.model)
        if args.fuzzy and clf.kind == FUZZY_BML:
            with _reading(args.fuzzy):
                clf.variables.update(load_fuzzy_config(args.fuzzy))
        if args.cutoff is not None and clf.config is not None:
            clf.config = replace(clf.config, cutoff=args.cutoff)
    else:
        rb = _load_rules(args.rules)
        variables = {}
        if args.fuzzy:
            with _reading(args.fuzzy):
                variables = load_fuzzy_config(args.fuzzy)
        classes = tuple(args.classes.split(",")) if args.classes else _rule_classes(rb)
        clf = Classifier.from_rules(rb, variables, classes, args.cutoff or 0.0)
    query = parse_query(args.query, clf.schema)

    trace = []
    if clf.kind == FUZZY_BML:
        decision, trace = fuzzy_trace(query, clf)
    else:
        decision = index_case(query, clf)
    line = f"{decision.label or 'no-decision'}\t{decision.degree:.6f}"
    if decision.diagnostic:
        line += f"\t{decision.diagnostic}"
    with _output(args.output) as out:
        out.write(line + "\n")
        if args.trace and trace:
            out.write(format_trace(clf.kb, trace))
        elif args.trace and clf.kind == DECISION_TREE:
            out.write(f"node\t{clf.graph.route(query)}\n")
    return 0


def _write_reports(args, reports, labels) -> None:
    with _output(args.output) as out:
        write_report_table(reports, out)
    if args.predictions:
        with open(args.predictions, "w", encoding="utf-8", newline="") as fh:
            write_predictions(reports, fh)
    if getattr(args, "confusion", None):
        with open(args.confusion, "w", encoding="utf-8", newline="") as fh:
            for r in reports:
                write_confusion(r, fh, labels)


def cmd_evaluate(args) -> int:
    protocol = normalize_protocol(args.protocol)
    base = _load_cases(args.cases, args.schema)
    with _reading(args.cases):
        if len(base) == 0:
            raise FuzzyBMLError("no cases to evaluate")
        if args.model:
            with _reading(args.model):
                clf = load_model(args.model)
            if protocol == LEAVE_ONE_OUT and not clf.retrainable:
                raise FuzzyBMLError("leave-one-out needs a retrainable model")
            report = evaluate(clf, base, protocol)
        else:
            cfg = _method_config(args, args.method)
            if protocol == HOLDOUT:
                learn, test = split_dataset(base, args.train_fraction, args.seed)
                report = evaluate(train(cfg, learn), test, HOLDOUT)
            else:
                report = evaluate(train(cfg, base), base, protocol)
    _write_reports(args, [report], base.schema.class_labels)
    return 0


def cmd_compare(args) -> int:
    protocol = normalize_protocol(args.protocol)
    kinds = [k.strip() for k in args.methods.split(",") if k.strip()]
    for k in kinds:
        if k not in KINDS:
            raise CliError(f"--methods: unknown method {k!r} (choose from {', '.join(KINDS)})")
    base = _load_cases(args.cases, args.schema)
    methods = [_method_config(args, k) for k in kinds]
    with _reading(args.cases):
        reports = compare(base, methods, protocol, seed=args.seed, train_fraction=args.train_fraction)
    _write_reports(args, reports, base.schema.class_labels)
    return 0


# parser

def _add_training_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("learning")
    g.add_argument("--cuts", action="append", metavar="ATTR=C1,C2",
                   help="explicit cut points for a numeric attribute (repeatable)")
    g.add_argument("--names", action="append", metavar="ATTR=N1,N2,N3",
                   help="modality names for an attribute's bins, low to high (repeatable)")
    g.add_argument("--n-cuts", "--bins", dest="n_cuts", type=int,
                   help="supervised cut points for attributes without --cuts (default 2; "
                   "when --cuts is given, other numeric attributes are used only if this is set)")
    g.add_argument("--measure", choices=("shannon", "quadratic"), default="shannon")
    g.add_argument("--lambda", dest="lam", type=float, default=1.0, help="Laplace smoothing (default 1)")
    g.add_argument("--mu", type=int, default=2, help="minimum node size (default 2)")
    g.add_argument("--max-depth", type=int, default=5)
    g.add_argument("--min-gain", type=float, default=1e-9)
    g.add_argument("--tree", action="store_true", help="disable merges (plain decision tree)")
    g.add_argument("--k", type=int, default=3, help="neighbours for knn (default 3)")
    g.add_argument("--fuzzy", metavar="FILE", help="fuzzy variables overriding the derived ones")
    g.add_argument("--overlap", type=float, default=0.1,
                   help="ramp width of derived fuzzy terms, as a fraction of the range")
    g.add_argument("--cutoff", type=float, default=0.0, help="minimum degree to assert a term")
    g.add_argument("--crisp", action="store_true", help="run the fuzzy model with 0/1 memberships")


def _add_case_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cases", required=True, metavar="FILE", help="case file (CSV)")
    p.add_argument("--schema", metavar="FILE", help="schema JSON (inferred from the case file if absent)")


def _add_report_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--protocol", default=LEAVE_ONE_OUT, choices=sorted(PROTOCOL_ALIASES))
    p.add_argument("--seed", type=int, default=0, help="seed for the holdout split")
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--output", "-o", metavar="FILE", help="report table (default stdout)")
    p.add_argument("--predictions", metavar="FILE", help="per-case prediction dump")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=PROG, description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("build-cases", help="project file -> case file")
    p.add_argument("--project", required=True, metavar="FILE")
    p.add_argument("--output", "-o", metavar="FILE")
    p.add_argument("--schema-out", metavar="FILE")
    p.set_defaults(func=cmd_build_cases)

    p = sub.add_parser("train", help="case file -> model file")
    _add_case_flags(p)
    p.add_argument("--method", choices=KINDS, default=FUZZY_BML)
    p.add_argument("--output", "-o", metavar="FILE")
    _add_training_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rules", help="list a model's rules")
    p.add_argument("--model", required=True, metavar="FILE")
    p.add_argument("--graph", action="store_true", help="list the arc/leaf rules of the graph itself")
    p.add_argument("--json", action="store_true", help="JSON instead of the Si ... Alors listing")
    p.add_argument("--matrices", action="store_true", help="append the R_E and R_S matrices")
    p.add_argument("--output", "-o", metavar="FILE")
    p.set_defaults(func=cmd_rules)

    p = sub.add_parser("infer", help="index one query")
    p.add_argument("--model", metavar="FILE")
    p.add_argument("--rules", metavar="FILE", help="rule base (JSON or Si ... Alors listing)")
    p.add_argument("--fuzzy", metavar="FILE")
    p.add_argument("--classes", metavar="C1,C2", help="class facts (default: conclusions no rule uses)")
    p.add_argument("--query", required=True, metavar="ATTR=V,...")
    p.add_argument("--cutoff", type=float)
    p.add_argument("--trace", action="store_true", help="print every configuration G_k")
    p.add_argument("--output", "-o", metavar="FILE")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("evaluate", help="score one method")
    _add_case_flags(p)
    p.add_argument("--method", choices=KINDS, default=FUZZY_BML)
    p.add_argument("--model", metavar="FILE", help="score a saved model instead of training one")
    p.add_argument("--confusion", metavar="FILE", help="confusion matrix CSV")
    _add_report_flags(p)
    _add_training_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="score several methods under one protocol")
    _add_case_flags(p)
    p.add_argument("--methods", default=",".join((FUZZY_BML, DECISION_TREE, KNN)))
    _add_report_flags(p)
    _add_training_flags(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        msg = str(exc)
    except FuzzyBMLError as exc:
        msg = exc.args[0] if exc.args else type(exc).__name__
    except OSError as exc:
        msg = f"{exc.filename or ''}: {exc.strerror or exc}".lstrip(": ")
    print(f"{PROG}: error: {' '.join(msg.split())}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
