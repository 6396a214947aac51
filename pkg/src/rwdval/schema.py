"""Core data model: variable schemas, label records, label sets, cohorts.

A label row asserts one value for one (patient, variable) from one source:
model extraction, a human abstractor, an adjudicator, or the assembled
reference standard. Everything downstream (reference-standard assembly,
metrics, checks, replication) consumes these types.

Two absence states are distinguished throughout:

* documented unknown -- a record exists whose value is the variable's
  ``unknown_token`` ("the chart says it is unknown");
* missing -- no record at all for that (patient, variable).

Both count as not-known for completeness; they differ for check
applicability and for disagreement detection.
"""
from __future__ import annotations

from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from enum import Enum


MISSING_ATTRIBUTE = "missing"


class SchemaError(ValueError):
    """A record or variable definition violates the declared schema."""


class VariableKind(str, Enum):
    CATEGORICAL = "categorical"
    DATE = "date"
    NUMERIC = "numeric"
    EVENT_LIST = "event_list"

    @property
    def has_dates(self) -> bool:
        return self in (VariableKind.DATE, VariableKind.EVENT_LIST)


class Source(str, Enum):
    LLM = "llm"
    ABSTRACTOR_1 = "abstractor_1"
    ABSTRACTOR_2 = "abstractor_2"
    ADJUDICATOR = "adjudicator"
    REFERENCE = "reference"


@dataclass(frozen=True)
class VariableSpec:
    """Declares one extractable variable.

    ``allowed_values`` is required for categorical variables, optional for
    date and event_list variables (their value payload is usually a small
    category set such as yes/no or positive/negative), and forbidden for
    numeric ones. ``unknown_token`` marks the documented-unknown value and
    must be a member of ``allowed_values`` when both are present.
    ``date_tolerance_days`` overrides the engine-wide date tolerance.
    """

    name: str
    kind: VariableKind
    allowed_values: frozenset[str] | None = None
    unknown_token: str | None = None
    date_tolerance_days: int | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise SchemaError("variable name must be non-empty")
        if self.allowed_values is not None:
            object.__setattr__(self, "allowed_values", frozenset(self.allowed_values))
        kind = self.kind
        if kind == VariableKind.CATEGORICAL and not self.allowed_values:
            raise SchemaError(f"{self.name}: categorical variables need allowed_values")
        if kind == VariableKind.NUMERIC and self.allowed_values:
            raise SchemaError(f"{self.name}: numeric variables take no allowed_values")
        if self.unknown_token is not None and self.allowed_values is not None:
            if self.unknown_token not in self.allowed_values:
                raise SchemaError(
                    f"{self.name}: unknown_token {self.unknown_token!r} not in allowed_values"
                )
        if self.date_tolerance_days is not None and self.date_tolerance_days < 0:
            raise SchemaError(f"{self.name}: date_tolerance_days must be >= 0")

    @property
    def known_values(self) -> frozenset[str] | None:
        """Allowed values minus the unknown token (the assertable ones)."""
        if self.allowed_values is None:
            return None
        if self.unknown_token is None:
            return self.allowed_values
        return self.allowed_values - {self.unknown_token}


class Schema(Mapping[str, VariableSpec]):
    """Immutable name -> VariableSpec mapping for one cohort."""

    def __init__(self, variables: Iterable[VariableSpec]):
        specs = list(variables)
        names = [s.name for s in specs]
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise SchemaError(f"duplicate variable names: {sorted(dupes)}")
        self._by_name: dict[str, VariableSpec] = {s.name: s for s in specs}

    def __getitem__(self, name: str) -> VariableSpec:
        try:
            return self._by_name[name]
        except KeyError:
            raise SchemaError(f"unknown variable {name!r}") from None

    def __contains__(self, name: object) -> bool:
        # Mapping's default relies on __getitem__ raising KeyError;
        # ours raises SchemaError, so membership is answered directly.
        return name in self._by_name

    def __iter__(self) -> Iterator[str]:
        return iter(self._by_name)

    def __len__(self) -> int:
        return len(self._by_name)

    def __repr__(self) -> str:
        return f"Schema({sorted(self._by_name)})"


@dataclass(frozen=True)
class LabelRecord:
    """One asserted value for one (patient, variable) from one source.

    ``value`` is a category token for categorical/date/event_list variables
    and a float for numeric ones. ``event_date`` may be present only for
    date and event_list kinds; event_list records must carry one unless the
    value is the documented-unknown token.
    """

    patient_id: str
    variable: str
    value: str | float
    event_date: date | None = None
    source: Source = Source.REFERENCE
    refresh_id: str | None = None

    def is_unknown(self, spec: VariableSpec) -> bool:
        return spec.unknown_token is not None and self.value == spec.unknown_token

    def is_known(self, spec: VariableSpec) -> bool:
        return not self.is_unknown(spec)


def validate_record(record: LabelRecord, spec: VariableSpec) -> None:
    """Raise SchemaError if the record does not conform to its variable spec."""
    if record.variable != spec.name:
        raise SchemaError(f"record variable {record.variable!r} != spec {spec.name!r}")
    if not record.patient_id:
        raise SchemaError(f"{spec.name}: empty patient_id")
    if spec.kind == VariableKind.NUMERIC:
        if not isinstance(record.value, (int, float)) or isinstance(record.value, bool):
            raise SchemaError(
                f"{spec.name}: numeric variable needs a numeric value, got {record.value!r}"
            )
    else:
        if not isinstance(record.value, str) or not record.value:
            raise SchemaError(
                f"{spec.name}: expected a non-empty category token, got {record.value!r}"
            )
        if spec.allowed_values is not None and record.value not in spec.allowed_values:
            raise SchemaError(
                f"{spec.name}: value {record.value!r} not in allowed values "
                f"{sorted(spec.allowed_values)}"
            )
    if record.event_date is not None and not spec.kind.has_dates:
        raise SchemaError(f"{spec.name}: {spec.kind.value} variables carry no event_date")
    if (
        spec.kind == VariableKind.EVENT_LIST
        and record.event_date is None
        and record.is_known(spec)
    ):
        raise SchemaError(f"{spec.name}: event_list records need an event_date")


def _record_sort_key(rec: LabelRecord):
    return (
        rec.patient_id,
        rec.variable,
        rec.event_date is None,
        rec.event_date or date.min,
        str(rec.value),
    )


class LabelSet:
    """All label records from one source, keyed by (patient, variable).

    Non-event_list variables hold at most one record per key. Construction
    validates every record against the schema. Equality compares the source
    and the canonical record multiset, so write -> read round-trips compare
    equal regardless of row order.
    """

    def __init__(
        self,
        schema: Schema,
        source: Source,
        records: Iterable[LabelRecord] = (),
        refresh_id: str | None = None,
    ):
        self.schema = schema
        self.source = Source(source)
        self.refresh_id = refresh_id
        self._by_key: dict[tuple[str, str], list[LabelRecord]] = {}
        for rec in records:
            self.add(rec)

    def add(self, record: LabelRecord) -> None:
        spec = self.schema[record.variable]
        validate_record(record, spec)
        if record.source != self.source:
            raise SchemaError(
                f"record source {record.source.value!r} does not match "
                f"label set source {self.source.value!r}"
            )
        key = (record.patient_id, record.variable)
        bucket = self._by_key.setdefault(key, [])
        if bucket and spec.kind != VariableKind.EVENT_LIST:
            raise SchemaError(
                f"duplicate record for patient {record.patient_id!r}, "
                f"variable {record.variable!r} ({spec.kind.value} admits one)"
            )
        bucket.append(record)

    def remove(self, patient_id: str, variable: str) -> None:
        """Drop every record for one key; absent keys are a no-op."""
        self._by_key.pop((patient_id, variable), None)

    def get(self, patient_id: str, variable: str) -> tuple[LabelRecord, ...]:
        """Records for one key, date-sorted; empty tuple means missing."""
        recs = self._by_key.get((patient_id, variable), ())
        return tuple(sorted(recs, key=_record_sort_key))

    def get_single(self, patient_id: str, variable: str) -> LabelRecord | None:
        recs = self._by_key.get((patient_id, variable))
        return recs[0] if recs else None

    def keys(self) -> set[tuple[str, str]]:
        return set(self._by_key)

    @property
    def patients(self) -> set[str]:
        return {pid for pid, _ in self._by_key}

    @property
    def variables(self) -> set[str]:
        return {var for _, var in self._by_key}

    def records(self) -> list[LabelRecord]:
        out: list[LabelRecord] = []
        for recs in self._by_key.values():
            out.extend(recs)
        out.sort(key=_record_sort_key)
        return out

    def relabel(self, source: Source, refresh_id: str | None = None) -> "LabelSet":
        """Copy with every record re-attributed to another source."""
        out = LabelSet(self.schema, source, refresh_id=refresh_id)
        for rec in self.records():
            out.add(replace(rec, source=source))
        return out

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_key.values())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabelSet):
            return NotImplemented
        return self.source == other.source and self.records() == other.records()

    def __repr__(self) -> str:
        return (
            f"LabelSet(source={self.source.value}, records={len(self)}, "
            f"patients={len(self.patients)})"
        )


@dataclass
class CohortDataset:
    """A patient universe, its attributes, and label sets from each source."""

    schema: Schema
    patients: dict[str, dict[str, str]]
    label_sets: dict[Source, LabelSet] = field(default_factory=dict)

    def validate(self) -> None:
        """Every record must reference a cohort patient."""
        for src, labels in self.label_sets.items():
            stray = labels.patients - set(self.patients)
            if stray:
                raise SchemaError(
                    f"{src.value} labels reference patients outside the cohort: "
                    f"{sorted(stray)[:5]}"
                )

    def attribute(self, patient_id: str, key: str) -> str:
        """Attribute value for a patient; absent patients/keys read as missing."""
        return self.patients.get(patient_id, {}).get(key, MISSING_ATTRIBUTE)

    def strata(self, key: str) -> dict[str, list[str]]:
        """Partition cohort patients by one attribute (missing included)."""
        out: dict[str, list[str]] = {}
        for pid in sorted(self.patients):
            out.setdefault(self.attribute(pid, key), []).append(pid)
        return out

    def labels(self, source: Source) -> LabelSet:
        try:
            return self.label_sets[Source(source)]
        except KeyError:
            raise SchemaError(f"no label set for source {Source(source).value!r}") from None


def patient_view(
    dataset_or_labels: CohortDataset | LabelSet,
    source: Source | None = None,
    patient_id: str = "",
) -> dict[str, object]:
    """Flatten one patient's labels from one source for check evaluation.

    Returns a map variable -> entry where the entry is the value for
    categorical/numeric kinds, a (value, event_date) pair for date kinds,
    and a date-sorted tuple of (value, event_date) pairs for event lists.
    Only documented variables appear; documented-unknown records are
    included so the check engine can distinguish unknown from missing.
    """
    if isinstance(dataset_or_labels, CohortDataset):
        if source is None:
            raise ValueError("source required when passing a CohortDataset")
        if patient_id not in dataset_or_labels.patients:
            raise SchemaError(f"unknown patient {patient_id!r}")
        labels = dataset_or_labels.labels(source)
    else:
        labels = dataset_or_labels
    schema = labels.schema
    view: dict[str, object] = {}
    for var, spec in schema.items():
        recs = labels.get(patient_id, var)
        if not recs:
            continue
        if spec.kind == VariableKind.EVENT_LIST:
            view[var] = tuple((r.value, r.event_date) for r in recs)
        elif spec.kind == VariableKind.DATE:
            view[var] = (recs[0].value, recs[0].event_date)
        else:
            view[var] = recs[0].value
    return view


def effective_tolerance(spec: VariableSpec, default_days: int) -> int:
    """Per-variable date tolerance override, falling back to the default."""
    return spec.date_tolerance_days if spec.date_tolerance_days is not None else default_days


def shift_date(d: date, days: int) -> date:
    return d + timedelta(days=days)
