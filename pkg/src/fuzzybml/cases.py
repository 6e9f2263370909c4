"""Case representation: attribute schema, cases, case bases, CSV ingestion."""

from __future__ import annotations

import csv
import io
import json
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, TextIO

from .errors import CaseFormatError, FuzzyBMLError, SchemaError

NUMERIC = "numeric"
CATEGORICAL = "categorical"

ID_COLUMN = "id"
PLAN_COLUMN = "plan"


@dataclass(frozen=True)
class Attribute:
    """One exogenous descriptor.

    ``modalities`` is mandatory for categorical attributes. A numeric
    attribute may also declare modality names; they fix the order in which
    its terms appear as facts and child nodes, and name its bins.
    ``order`` says whether that listing runs from low to high values
    (``"ascending"``) or the reverse.
    """

    name: str
    kind: str = NUMERIC
    modalities: tuple[str, ...] | None = None
    order: str = "ascending"

    def __post_init__(self):
        if self.modalities is not None:
            object.__setattr__(self, "modalities", tuple(self.modalities))
        if self.order not in ("ascending", "descending"):
            raise SchemaError(f"attribute {self.name!r}: order must be ascending or descending")

    @property
    def is_numeric(self) -> bool:
        return self.kind == NUMERIC

    @property
    def bin_names(self) -> tuple[str, ...] | None:
        """Modalities from the lowest to the highest bin."""
        if self.modalities is None:
            return None
        return self.modalities if self.order == "ascending" else tuple(reversed(self.modalities))


@dataclass(frozen=True)
class AttributeSchema:
    attributes: tuple[Attribute, ...]
    class_labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes))
        object.__setattr__(self, "class_labels", tuple(self.class_labels))
        seen = set()
        for attr in self.attributes:
            if not attr.name or not attr.name.strip():
                raise SchemaError("attribute names must be non-empty")
            if "=" in attr.name:
                raise SchemaError(f"attribute name {attr.name!r} may not contain '='")
            if attr.name in (ID_COLUMN, PLAN_COLUMN):
                raise SchemaError(f"attribute name {attr.name!r} is reserved")
            if attr.name in seen:
                raise SchemaError(f"duplicate attribute name {attr.name!r}")
            seen.add(attr.name)
            if attr.kind not in (NUMERIC, CATEGORICAL):
                raise SchemaError(f"attribute {attr.name!r}: unknown kind {attr.kind!r}")
            if attr.kind == CATEGORICAL and (attr.modalities is None or len(attr.modalities) < 2):
                raise SchemaError(f"categorical attribute {attr.name!r} needs at least 2 modalities")
            if attr.modalities is not None and len(set(attr.modalities)) != len(attr.modalities):
                raise SchemaError(f"attribute {attr.name!r} has duplicate modalities")
        if len(set(self.class_labels)) != len(self.class_labels):
            raise SchemaError("duplicate class labels")
        if len(self.class_labels) < 2:
            raise SchemaError("a schema needs at least 2 class labels")

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.attributes]

    def attribute(self, name: str) -> Attribute:
        for attr in self.attributes:
            if attr.name == name:
                return attr
        raise KeyError(name)

    def to_dict(self) -> dict:
        attrs = []
        for a in self.attributes:
            entry = {"name": a.name, "kind": a.kind}
            if a.modalities is not None:
                entry["modalities"] = list(a.modalities)
            if a.order != "ascending":
                entry["order"] = a.order
            attrs.append(entry)
        return {"attributes": attrs, "class_labels": list(self.class_labels)}

    @classmethod
    def from_dict(cls, data: Mapping) -> "AttributeSchema":
        try:
            attrs = [
                Attribute(a["name"], a.get("kind", NUMERIC), a.get("modalities"), a.get("order", "ascending"))
                for a in data["attributes"]
            ]
            return cls(tuple(attrs), tuple(data["class_labels"]))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema document: {exc}") from exc


def load_schema(source: TextIO | str) -> AttributeSchema:
    if isinstance(source, str):
        with open(source, encoding="utf-8") as fh:
            return AttributeSchema.from_dict(json.load(fh))
    return AttributeSchema.from_dict(json.load(source))


def save_schema(schema: AttributeSchema, dest: TextIO) -> None:
    json.dump(schema.to_dict(), dest, indent=2, ensure_ascii=False)
    dest.write("\n")


@dataclass(frozen=True)
class Case:
    id: str
    values: Mapping[str, float | str]
    label: str | None = None


@dataclass(frozen=True)
class Violation:
    case_id: str
    attribute: str | None
    message: str

    def __str__(self):
        where = f"{self.attribute}: " if self.attribute else ""
        return f"case {self.case_id}: {where}{self.message}"


def validate_case(case: Case, schema: AttributeSchema) -> list[Violation]:
    """Return every way ``case`` departs from ``schema`` (empty if it conforms)."""
    report = []
    for attr in schema.attributes:
        if attr.name not in case.values:
            report.append(Violation(case.id, attr.name, "missing attribute"))
            continue
        value = case.values[attr.name]
        if attr.is_numeric:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                report.append(Violation(case.id, attr.name, f"expected a number, got {value!r}"))
            elif not math.isfinite(value):
                report.append(Violation(case.id, attr.name, f"non-finite number {value!r}"))
        elif value not in attr.modalities:
            report.append(
                Violation(case.id, attr.name, f"{value!r} is not one of {list(attr.modalities)}")
            )
    for name in case.values:
        if name not in schema.names:
            report.append(Violation(case.id, name, "attribute not in schema"))
    if case.label is not None and case.label not in schema.class_labels:
        report.append(Violation(case.id, None, f"unknown plan label {case.label!r}"))
    return report


@dataclass(frozen=True)
class CaseBase:
    schema: AttributeSchema
    cases: tuple[Case, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "cases", tuple(self.cases))
        ids = set()
        for case in self.cases:
            if case.id in ids:
                raise FuzzyBMLError(f"duplicate case id {case.id!r}")
            ids.add(case.id)
            problems = validate_case(case, self.schema)
            if problems:
                raise FuzzyBMLError(str(problems[0]))

    def __len__(self):
        return len(self.cases)

    def __iter__(self):
        return iter(self.cases)

    def __getitem__(self, index):
        return self.cases[index]

    @property
    def labels(self) -> list[str | None]:
        return [c.label for c in self.cases]

    def class_counts(self) -> dict[str, int]:
        counts = {label: 0 for label in self.schema.class_labels}
        for case in self.cases:
            if case.label is not None:
                counts[case.label] += 1
        return counts

    def subset(self, cases: Iterable[Case]) -> "CaseBase":
        return CaseBase(self.schema, tuple(cases))


def parse_number(text: str) -> float:
    """Parse a decimal accepting either '.' or ',' as the separator."""
    s = text.strip()
    if "," in s and "." not in s and s.count(",") == 1:
        s = s.replace(",", ".")
    value = float(s)
    if not math.isfinite(value):
        raise ValueError(f"non-finite number {text!r}")
    return value


def load_case_base(
    source: TextIO | str,
    schema: AttributeSchema,
    labeled: bool = True,
    delimiter: str = ",",
) -> CaseBase:
    """Read a delimiter-separated case file.

    The header must name every schema attribute, optionally plus ``id`` and
    ``plan``. In labeled mode every row needs a plan; with ``labeled=False``
    the plan column may be absent or blank (query cases).
    """
    if isinstance(source, str):
        with open(source, encoding="utf-8", newline="") as fh:
            return load_case_base(fh, schema, labeled=labeled, delimiter=delimiter)

    reader = csv.reader(source, delimiter=delimiter)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise CaseFormatError("missing header row", row=1) from None

    known = set(schema.names) | {ID_COLUMN, PLAN_COLUMN}
    for col in header:
        if col not in known:
            raise CaseFormatError("unknown column", row=1, column=col)
    if len(set(header)) != len(header):
        raise CaseFormatError("duplicate column in header", row=1)
    for name in schema.names:
        if name not in header:
            raise CaseFormatError("header is missing attribute", row=1, column=name)
    if labeled and PLAN_COLUMN not in header:
        raise CaseFormatError("labeled case file needs a 'plan' column", row=1)

    cases = []
    seen_ids = set()
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise CaseFormatError(
                f"expected {len(header)} fields, found {len(row)}", row=lineno
            )
        cells = dict(zip(header, (cell.strip() for cell in row)))
        case_id = cells.get(ID_COLUMN) or f"w{len(cases) + 1}"
        if case_id in seen_ids:
            raise CaseFormatError(f"duplicate id {case_id!r}", row=lineno, column=ID_COLUMN)
        seen_ids.add(case_id)

        values = {}
        for attr in schema.attributes:
            raw = cells[attr.name]
            if attr.is_numeric:
                try:
                    values[attr.name] = parse_number(raw)
                except ValueError:
                    raise CaseFormatError(
                        f"cannot parse number {raw!r}", row=lineno, column=attr.name
                    ) from None
            else:
                if raw not in attr.modalities:
                    raise CaseFormatError(
                        f"unknown modality {raw!r}", row=lineno, column=attr.name
                    )
                values[attr.name] = raw

        label = cells.get(PLAN_COLUMN) or None
        if label is None and labeled:
            raise CaseFormatError("missing plan label", row=lineno, column=PLAN_COLUMN)
        if label is not None and label not in schema.class_labels:
            raise CaseFormatError(f"unknown plan {label!r}", row=lineno, column=PLAN_COLUMN)
        cases.append(Case(case_id, values, label))
    return CaseBase(schema, tuple(cases))


def loads_case_base(text: str, schema: AttributeSchema, **kwargs) -> CaseBase:
    return load_case_base(io.StringIO(text), schema, **kwargs)


def _format_value(value) -> str:
    if isinstance(value, float) and value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return str(value)


def save_case_base(base: CaseBase, dest: TextIO, delimiter: str = ",") -> None:
    writer = csv.writer(dest, delimiter=delimiter, lineterminator="\n")
    has_labels = not base.cases or any(c.label is not None for c in base.cases)
    header = [ID_COLUMN, *base.schema.names] + ([PLAN_COLUMN] if has_labels else [])
    writer.writerow(header)
    for case in base.cases:
        row = [case.id] + [_format_value(case.values[n]) for n in base.schema.names]
        if has_labels:
            row.append(case.label or "")
        writer.writerow(row)


def dumps_case_base(base: CaseBase) -> str:
    buf = io.StringIO()
    save_case_base(base, buf)
    return buf.getvalue()


def infer_schema(source: TextIO | str, delimiter: str = ",") -> AttributeSchema:
    """Guess a schema from a case file: columns that all parse as numbers are
    numeric, the rest categorical; class labels come from the plan column."""
    if isinstance(source, str):
        with open(source, encoding="utf-8", newline="") as fh:
            return infer_schema(fh, delimiter=delimiter)
    rows = list(csv.reader(source, delimiter=delimiter))
    if not rows:
        raise CaseFormatError("missing header row", row=1)
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    columns = {h: [] for h in header}
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise CaseFormatError(f"expected {len(header)} fields, found {len(row)}", row=lineno)
        for h, cell in zip(header, row):
            columns[h].append(cell.strip())
    attrs = []
    for h in header:
        if h in (ID_COLUMN, PLAN_COLUMN):
            continue
        try:
            for cell in columns[h]:
                parse_number(cell)
            attrs.append(Attribute(h, NUMERIC))
        except ValueError:
            attrs.append(Attribute(h, CATEGORICAL, tuple(sorted(set(columns[h])))))
    labels = sorted({c for c in columns.get(PLAN_COLUMN, []) if c})
    return AttributeSchema(tuple(attrs), tuple(labels))


def split_dataset(base: CaseBase, train_fraction: float, seed: int) -> tuple[CaseBase, CaseBase]:
    """Shuffle with ``seed`` and cut into learning and test samples.

    The learning sample gets ``round(train_fraction * n)`` cases (halves
    round up).
    """
    if not 0.0 < train_fraction < 1.0:
        raise FuzzyBMLError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    for case in base.cases:
        if case.label is None:
            raise FuzzyBMLError(f"case {case.id!r} is unlabeled; cannot split for learning")
    order = list(range(len(base.cases)))
    random.Random(seed).shuffle(order)
    n_train = int(math.floor(train_fraction * len(order) + 0.5))
    train_idx = sorted(order[:n_train])
    test_idx = sorted(order[n_train:])
    return (
        base.subset(base.cases[i] for i in train_idx),
        base.subset(base.cases[i] for i in test_idx),
    )
