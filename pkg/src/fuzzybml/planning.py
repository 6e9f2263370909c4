"""AND/OR task graphs, backward-chaining plan enumeration, case synthesis.

A project is a table of tasks, each listing the tasks it depends on and how
those dependencies combine: ``and`` (all are required) or ``or`` (any one
alternative suffices). The combine tag belongs to the destination node.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence, TextIO

from .cases import Attribute, AttributeSchema, Case, CaseBase, NUMERIC
from .errors import CycleError, FuzzyBMLError, GraphError

INITIAL = "initial"
FINAL = "final"
AND = "and"
OR = "or"


@dataclass(frozen=True)
class Task:
    id: str
    duration: float = 0.0
    probability: float = 1.0
    cost: float = 0.0

    def __post_init__(self):
        if self.duration < 0:
            raise GraphError(f"task {self.id!r}: negative duration")
        if not 0.0 <= self.probability <= 1.0:
            raise GraphError(f"task {self.id!r}: probability outside [0, 1]")
        if self.cost < 0:
            raise GraphError(f"task {self.id!r}: negative cost")


@dataclass(frozen=True)
class ProjectTask:
    task: Task
    depends_on: tuple[str, ...] = ()
    combine: str = AND


@dataclass(frozen=True)
class Project:
    tasks: tuple[ProjectTask, ...]
    final_combine: str = AND

    @classmethod
    def from_dict(cls, data: Mapping) -> "Project":
        try:
            tasks = tuple(
                ProjectTask(
                    Task(
                        str(t["id"]),
                        float(t.get("duration", 0.0)),
                        float(t.get("probability", 1.0)),
                        float(t.get("cost", 0.0)),
                    ),
                    tuple(t.get("depends_on", ())),
                    t.get("combine", AND),
                )
                for t in data["tasks"]
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise GraphError(f"malformed project document: {exc}") from exc
        return cls(tasks, data.get("final_combine", AND))

    def to_dict(self) -> dict:
        return {
            "tasks": [
                {
                    "id": pt.task.id,
                    "duration": pt.task.duration,
                    "probability": pt.task.probability,
                    "cost": pt.task.cost,
                    "depends_on": list(pt.depends_on),
                    "combine": pt.combine,
                }
                for pt in self.tasks
            ],
            "final_combine": self.final_combine,
        }

    @property
    def task_table(self) -> dict[str, Task]:
        return {pt.task.id: pt.task for pt in self.tasks}


def load_project(source: TextIO | str) -> Project:
    if isinstance(source, str):
        with open(source, encoding="utf-8") as fh:
            return Project.from_dict(json.load(fh))
    return Project.from_dict(json.load(source))


@dataclass(frozen=True)
class AndOrGraph:
    """Task nodes plus the distinguished ``initial`` and ``final`` nodes.

    ``preds[n]`` lists the sources of the arcs entering ``n`` and
    ``combine[n]`` says how they combine.
    """

    tasks: Mapping[str, Task]
    preds: Mapping[str, tuple[str, ...]]
    combine: Mapping[str, str]

    @property
    def nodes(self) -> list[str]:
        return [INITIAL, *self.tasks, FINAL]

    @property
    def arcs(self) -> set[tuple[str, str]]:
        return {(p, n) for n, ps in self.preds.items() for p in ps}

    def successors(self) -> dict[str, list[str]]:
        succ = {n: [] for n in self.nodes}
        for n, ps in self.preds.items():
            for p in ps:
                succ[p].append(n)
        return succ

    def check(self) -> None:
        """Raise unless the graph is acyclic, fully connected to ``initial``
        and ``final`` reachable."""
        nodes = set(self.nodes)
        for n in nodes - {INITIAL}:
            ps = self.preds.get(n, ())
            if not ps:
                raise GraphError(f"node {n!r} has no incoming arc")
            for p in ps:
                if p not in nodes:
                    raise GraphError(f"node {n!r} depends on unknown node {p!r}")
            if self.combine.get(n, AND) not in (AND, OR):
                raise GraphError(f"node {n!r}: combine must be 'and' or 'or'")
        _topological_order(self.preds, self.nodes)
        succ = self.successors()
        seen, stack = {INITIAL}, [INITIAL]
        while stack:
            for m in succ[stack.pop()]:
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        if FINAL not in seen:
            raise GraphError("final node is not reachable from initial")

    def topological_order(self) -> list[str]:
        return _topological_order(self.preds, self.nodes)


def _topological_order(preds: Mapping[str, Sequence[str]], nodes: Sequence[str]) -> list[str]:
    # Depth-first post-order; raises a CycleError carrying a witness.
    state: dict[str, int] = {}
    order: list[str] = []
    for root in nodes:
        if root in state:
            continue
        stack = [(root, iter(sorted(preds.get(root, ()))))]
        path = [root]
        state[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                path.pop()
                state[node] = 2
                order.append(node)
            elif state.get(nxt) == 1:
                cycle = path[path.index(nxt):] + [nxt]
                raise CycleError("dependency cycle", list(reversed(cycle)))
            elif nxt not in state:
                state[nxt] = 1
                path.append(nxt)
                stack.append((nxt, iter(sorted(preds.get(nxt, ())))))
    return order


def build_and_or_graph(project: Project | Iterable[ProjectTask], final_combine: str | None = None) -> AndOrGraph:
    """Turn a task table into an AND/OR graph.

    Tasks without prerequisites hang off ``initial``; tasks nothing depends
    on feed ``final``, whose combine tag is the project's ``final_combine``.
    """
    if not isinstance(project, Project):
        project = Project(tuple(project), final_combine or AND)
    elif final_combine is not None:
        project = Project(project.tasks, final_combine)

    tasks: dict[str, Task] = {}
    for pt in project.tasks:
        tid = pt.task.id
        if tid in (INITIAL, FINAL):
            raise GraphError(f"task id {tid!r} is reserved")
        if tid in tasks:
            raise GraphError(f"duplicate task id {tid!r}")
        tasks[tid] = pt.task

    preds: dict[str, tuple[str, ...]] = {}
    combine: dict[str, str] = {}
    depended_on = set()
    for pt in project.tasks:
        for dep in pt.depends_on:
            if dep not in tasks:
                raise GraphError(f"task {pt.task.id!r} depends on unknown task {dep!r}")
            depended_on.add(dep)
        if pt.combine not in (AND, OR):
            raise GraphError(f"task {pt.task.id!r}: combine must be 'and' or 'or'")
        preds[pt.task.id] = tuple(dict.fromkeys(pt.depends_on)) or (INITIAL,)
        combine[pt.task.id] = pt.combine
    if project.final_combine not in (AND, OR):
        raise GraphError("final_combine must be 'and' or 'or'")
    sinks = tuple(t for t in tasks if t not in depended_on)
    preds[FINAL] = sinks or (INITIAL,)
    combine[FINAL] = project.final_combine

    graph = AndOrGraph(tasks, preds, combine)
    graph.check()
    return graph


def success_probability(ps: Sequence[float]) -> float:
    # drop the last bits of rounding noise so case files show 0.731025, not 0.7310249999999999
    return round(math.prod(ps), 15)


@dataclass(frozen=True)
class Aggregation:
    """How task attributes combine into plan descriptors."""

    duration: Callable[[Sequence[float]], float] = math.fsum
    probability: Callable[[Sequence[float]], float] = success_probability
    cost: Callable[[Sequence[float]], float] = math.fsum


DEFAULT_AGGREGATION = Aggregation()


@dataclass(frozen=True)
class Plan:
    id: str
    tasks: tuple[str, ...]
    duration: float
    probability: float
    cost: float


def aggregate(task_ids: Sequence[str], table: Mapping[str, Task], agg: Aggregation = DEFAULT_AGGREGATION):
    try:
        members = [table[t] for t in task_ids]
    except KeyError as exc:
        raise GraphError(f"unknown task id {exc.args[0]!r}") from None
    return (
        agg.duration([t.duration for t in members]),
        agg.probability([t.probability for t in members]),
        agg.cost([t.cost for t in members]),
    )


def solution_sets(graph: AndOrGraph) -> list[frozenset[str]]:
    """Backward chaining from ``final``: AND nodes pull in every predecessor,
    OR nodes branch once per predecessor. Each node is expanded at most once
    per solution, so an OR node commits to a single alternative."""
    found: set[frozenset[str]] = set()

    def expand(pending: tuple[str, ...], selected: frozenset[str]):
        if not pending:
            found.add(selected)
            return
        node, rest = pending[0], pending[1:]
        preds = graph.preds[node]
        options = [preds] if graph.combine[node] == AND else [(p,) for p in preds]
        for option in options:
            fresh = tuple(dict.fromkeys(p for p in option if p != INITIAL and p not in selected))
            expand(rest + fresh, selected | frozenset(fresh))

    expand((FINAL,), frozenset())
    # Keep minimal solutions only: with shared subgoals one choice can
    # strictly contain another.
    return [s for s in found if not any(o < s for o in found)]


def enumerate_plans(graph: AndOrGraph, aggregation: Aggregation = DEFAULT_AGGREGATION) -> list[Plan]:
    rank = {n: i for i, n in enumerate(graph.topological_order())}
    sequences = sorted(tuple(sorted(s, key=lambda t: (rank[t], t))) for s in solution_sets(graph))
    plans = []
    for i, seq in enumerate(sequences, start=1):
        d, p, c = aggregate(seq, graph.tasks, aggregation)
        plans.append(Plan(f"Plan{i}", seq, d, p, c))
    return plans


PLAN_DESCRIPTORS = ("duration", "probability", "cost")


def plan_schema(plans: Sequence[Plan]) -> AttributeSchema:
    """Default schema for synthesized cases: the three plan descriptors with
    one class label per plan."""
    if len(plans) < 2:
        raise GraphError(f"a case base needs at least two plans, the project yields {len(plans)}")
    return AttributeSchema(
        tuple(Attribute(name, NUMERIC) for name in PLAN_DESCRIPTORS),
        tuple(p.id for p in plans),
    )


def _descriptor_columns(schema: AttributeSchema) -> tuple[str, str, str]:
    names = {a.name.lower(): a.name for a in schema.attributes if a.is_numeric}
    if all(d in names for d in PLAN_DESCRIPTORS):
        return tuple(names[d] for d in PLAN_DESCRIPTORS)
    numeric = [a.name for a in schema.attributes if a.is_numeric]
    if len(numeric) < 3:
        raise FuzzyBMLError("schema needs three numeric attributes for duration, probability, cost")
    return tuple(numeric[:3])


def synthesize_cases(
    plans: Sequence[Plan],
    tasks: Mapping[str, Task],
    schema: AttributeSchema,
    aggregation: Aggregation = DEFAULT_AGGREGATION,
) -> CaseBase:
    """One case per plan, descriptors aggregated from the task table.

    Attributes named duration/probability/cost receive those aggregates;
    otherwise the first three numeric attributes do, in that order.
    """
    if not plans:
        return CaseBase(schema, ())
    d_col, p_col, c_col = _descriptor_columns(schema)
    cases = []
    for plan in plans:
        d, p, c = aggregate(plan.tasks, tasks, aggregation)
        values = {a.name: 0.0 for a in schema.attributes}
        values.update({d_col: d, p_col: p, c_col: c})
        if plan.id not in schema.class_labels:
            raise FuzzyBMLError(f"plan {plan.id!r} is not a class label of the schema")
        cases.append(Case(plan.id, values, plan.id))
    return CaseBase(schema, tuple(cases))
