"""Variable-level performance of extracted labels against a reference.

Conventions that shape every count here:

* A prediction that is missing or documented-unknown is a non-assertion:
  it can produce a false negative when the reference asserts the positive
  class, but never a false positive.
* Patients whose reference value is unknown or missing are excluded from
  confusion counts entirely (there is nothing to score against).
* A zero denominator leaves a metric undefined (None), never zero.

Date accuracy is conditioned on value-matched true positives where both
sides carry a date. Every ratio is also kept as an integer
numerator/denominator pair so relative differences between two reports can
be computed in exact rational arithmetic (a difference that is a whole
number of percentage points serializes as exactly that number).
"""
from __future__ import annotations

from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from datetime import date
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .schema import (
    CohortDataset,
    LabelSet,
    VariableKind,
    effective_tolerance,
)

EVENT_PRESENCE = None  # positive_class sentinel for event_list variables

_EXACT_MATCH_LIMIT = 8

DERIVED_POSITIVE = "positive"
DERIVED_NEGATIVE = "negative"
DERIVED_UNKNOWN = "unknown"

METRIC_NAMES = ("recall", "precision", "f1", "date_accuracy", "completeness")


@dataclass(frozen=True)
class MatchResult:
    """One-to-one event matching outcome; pairs are (pred_date, ref_date)."""

    pairs: tuple[tuple[date, date], ...]
    unmatched_pred: tuple[date, ...]
    unmatched_ref: tuple[date, ...]

    @property
    def n_matched(self) -> int:
        return len(self.pairs)


def match_events(
    pred_events: Sequence[date],
    ref_events: Sequence[date],
    tolerance_days: int,
) -> MatchResult:
    """Match predicted to reference event dates within a day tolerance.

    Each event is used at most once. For inputs up to eight events per side
    the matching is exact: maximum cardinality, then minimum total absolute
    day distance, then lexicographically earliest (reference, predicted)
    pairs. Larger inputs fall back to an earliest-compatible greedy sweep
    that preserves maximum cardinality for this interval structure but may
    not minimize total distance.
    """
    if tolerance_days < 0:
        raise ValueError("tolerance_days must be >= 0")
    pred = sorted(pred_events)
    ref = sorted(ref_events)
    if max(len(pred), len(ref)) <= _EXACT_MATCH_LIMIT:
        pairs = _match_exact(tuple(pred), tuple(ref), tolerance_days)
    else:
        pairs = _match_greedy(pred, ref, tolerance_days)
    used_pred = list(pred)
    used_ref = list(ref)
    for r, p in pairs:
        used_pred.remove(p)
        used_ref.remove(r)
    return MatchResult(
        pairs=tuple((p, r) for r, p in pairs),
        unmatched_pred=tuple(used_pred),
        unmatched_ref=tuple(used_ref),
    )


def _match_exact(
    pred: tuple[date, ...], ref: tuple[date, ...], tol: int
) -> tuple[tuple[date, date], ...]:
    """Optimal assignment over (ref index, used-pred bitmask) states."""

    @lru_cache(maxsize=None)
    def best(i: int, mask: int):
        if i == len(ref):
            return (0, 0, ())
        options = [best(i + 1, mask)]
        for j, p in enumerate(pred):
            if mask & (1 << j):
                continue
            delta = abs((p - ref[i]).days)
            if delta <= tol:
                neg_card, days, pairs = best(i + 1, mask | (1 << j))
                options.append((neg_card - 1, days + delta, ((ref[i], p),) + pairs))
        return min(options)

    result = best(0, 0)[2]
    best.cache_clear()
    return result


def _match_greedy(pred: list[date], ref: list[date], tol: int) -> tuple[tuple[date, date], ...]:
    pairs = []
    used = [False] * len(pred)
    j = 0
    for r in ref:
        while j < len(pred) and (r - pred[j]).days > tol:
            j += 1
        for k in range(j, len(pred)):
            if used[k]:
                continue
            if abs((pred[k] - r).days) <= tol:
                used[k] = True
                pairs.append((r, pred[k]))
                break
            if (pred[k] - r).days > tol:
                break
    return tuple(pairs)


@dataclass
class ConfusionCounts:
    """Patient-level (or event-level) confusion for one variable and class."""

    variable: str
    positive_class: str | None
    tp: int = 0
    fp: int = 0
    fn: int = 0
    n_matched_with_date: int = 0
    n_date_correct: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")
        if not (0 <= self.n_date_correct <= self.n_matched_with_date <= self.tp):
            raise ValueError(
                "need 0 <= n_date_correct <= n_matched_with_date <= tp, got "
                f"{self.n_date_correct}/{self.n_matched_with_date}/{self.tp}"
            )

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "n_matched_with_date": self.n_matched_with_date,
            "n_date_correct": self.n_date_correct,
        }


def _reference_labels(reference) -> LabelSet:
    labels = getattr(reference, "labels", reference)
    if not isinstance(labels, LabelSet):
        raise TypeError("reference must be a LabelSet or carry a .labels LabelSet")
    return labels


def _default_cohort(pred: LabelSet, reference) -> list[str]:
    universe = getattr(reference, "patients", None)
    if universe is None:
        universe = _reference_labels(reference).patients | pred.patients
    return sorted(universe)


def confusion(
    pred: LabelSet,
    reference,
    variable: str,
    positive_class: str | None,
    *,
    tolerance_days: int = 30,
    patients: Iterable[str] | None = None,
) -> ConfusionCounts:
    """One-vs-rest confusion counts for one variable.

    ``reference`` may be a LabelSet or an assembled reference standard.
    ``patients`` fixes the evaluation cohort (duplicates allowed, so
    bootstrap resamples weight patients by multiplicity); by default it is
    the union of patients seen by either side.

    For event_list variables the counts are per event: matched events are
    true positives, unmatched predicted events false positives, unmatched
    reference events false negatives. ``positive_class`` of None counts
    every documented known event (event presence); a token restricts both
    sides to events with that value. Undated known events cannot be matched
    and therefore count as unmatched assertions.
    """
    ref_labels = _reference_labels(reference)
    spec = pred.schema[variable]
    tol = effective_tolerance(spec, tolerance_days)
    if spec.kind != VariableKind.EVENT_LIST:
        if positive_class is None:
            raise ValueError(f"{variable}: positive_class required for {spec.kind.value}")
        if spec.allowed_values is not None and positive_class not in spec.allowed_values:
            raise ValueError(
                f"{variable}: positive_class {positive_class!r} not in allowed values"
            )
    elif positive_class is not None and spec.allowed_values is not None:
        if positive_class not in spec.allowed_values:
            raise ValueError(
                f"{variable}: positive_class {positive_class!r} not in allowed values"
            )
    cohort = list(patients) if patients is not None else _default_cohort(pred, reference)
    counts = ConfusionCounts(variable=variable, positive_class=positive_class)
    if spec.kind == VariableKind.EVENT_LIST:
        for pid in cohort:
            ref_events = [
                r.event_date
                for r in ref_labels.get(pid, variable)
                if r.is_known(spec)
                and r.event_date is not None
                and (positive_class is None or r.value == positive_class)
            ]
            pred_events = [
                r.event_date
                for r in pred.get(pid, variable)
                if r.is_known(spec)
                and r.event_date is not None
                and (positive_class is None or r.value == positive_class)
            ]
            ref_undated = sum(
                1
                for r in ref_labels.get(pid, variable)
                if r.is_known(spec)
                and r.event_date is None
                and (positive_class is None or r.value == positive_class)
            )
            pred_undated = sum(
                1
                for r in pred.get(pid, variable)
                if r.is_known(spec)
                and r.event_date is None
                and (positive_class is None or r.value == positive_class)
            )
            m = match_events(pred_events, ref_events, tol)
            counts.tp += m.n_matched
            counts.fp += len(m.unmatched_pred) + pred_undated
            counts.fn += len(m.unmatched_ref) + ref_undated
            counts.n_matched_with_date += m.n_matched
            counts.n_date_correct += sum(
                1 for p, r in m.pairs if abs((p - r).days) <= tol
            )
        return counts
    for pid in cohort:
        ref_rec = ref_labels.get_single(pid, variable)
        if ref_rec is None or not ref_rec.is_known(spec):
            continue  # reference not known: excluded from confusion
        pred_rec = pred.get_single(pid, variable)
        pred_asserts = pred_rec is not None and pred_rec.is_known(spec)
        ref_pos = ref_rec.value == positive_class
        pred_pos = pred_asserts and pred_rec.value == positive_class
        if ref_pos and pred_pos:
            counts.tp += 1
            if spec.kind == VariableKind.DATE:
                if pred_rec.event_date is not None and ref_rec.event_date is not None:
                    counts.n_matched_with_date += 1
                    if abs((pred_rec.event_date - ref_rec.event_date).days) <= tol:
                        counts.n_date_correct += 1
        elif ref_pos:
            counts.fn += 1
        elif pred_pos:
            counts.fp += 1
    return counts


@dataclass
class RelativePerformance:
    """Extraction-minus-abstraction gap for one metric, in percentage points."""

    metric: str
    llm_value: float
    abstraction_value: float
    delta_pp: float

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "llm": self.llm_value,
            "abstraction": self.abstraction_value,
            "delta_pp": self.delta_pp,
        }


@dataclass
class MetricReport:
    """Point metrics for one variable, with optional bootstrap intervals.

    Undefined metrics are None and serialize as null. ``ratios`` keeps the
    exact integer fractions behind each defined metric.
    """

    variable: str
    recall: float | None = None
    precision: float | None = None
    f1: float | None = None
    date_accuracy: float | None = None
    completeness: float | None = None
    ci: dict[str, tuple[float, float]] | None = None
    n_patients: int = 0
    ratios: dict[str, tuple[int, int]] = field(default_factory=dict, repr=False)
    counts: ConfusionCounts | None = field(default=None, repr=False)

    def value(self, metric: str) -> float | None:
        if metric not in METRIC_NAMES:
            raise ValueError(f"unknown metric {metric!r}")
        return getattr(self, metric)

    def to_dict(self) -> dict:
        out = {name: self.value(name) for name in METRIC_NAMES}
        out["n_patients"] = self.n_patients
        if self.counts is not None:
            out["counts"] = self.counts.to_dict()
        if self.ci is not None:
            out["ci"] = {k: list(v) for k, v in sorted(self.ci.items())}
        return out


def _ratio(num: int, den: int) -> tuple[float, tuple[int, int]] | tuple[None, None]:
    if den <= 0:
        return None, None
    return num / den, (num, den)


def compute_metrics(
    counts: ConfusionCounts,
    *,
    completeness: tuple[int, int] | float | None = None,
    n_patients: int = 0,
    ci: dict[str, tuple[float, float]] | None = None,
) -> MetricReport:
    """Derive recall/precision/F1/date-accuracy from confusion counts.

    recall = tp/(tp+fn), precision = tp/(tp+fp), f1 their harmonic mean
    (equivalently 2tp/(2tp+fp+fn)), date_accuracy = dates correct among
    value-matched pairs that both carry a date. Zero denominators leave the
    metric undefined rather than zero.
    """
    report = MetricReport(
        variable=counts.variable, n_patients=n_patients, ci=ci, counts=counts
    )
    report.recall, r = _ratio(counts.tp, counts.tp + counts.fn)
    if r:
        report.ratios["recall"] = r
    report.precision, r = _ratio(counts.tp, counts.tp + counts.fp)
    if r:
        report.ratios["precision"] = r
    if report.recall is not None and report.precision is not None:
        report.f1, r = _ratio(2 * counts.tp, 2 * counts.tp + counts.fp + counts.fn)
        if r:
            report.ratios["f1"] = r
    report.date_accuracy, r = _ratio(counts.n_date_correct, counts.n_matched_with_date)
    if r:
        report.ratios["date_accuracy"] = r
    if isinstance(completeness, tuple):
        report.completeness, r = _ratio(*completeness)
        if r:
            report.ratios["completeness"] = r
    elif completeness is not None:
        report.completeness = float(completeness)
    return report


def completeness(
    labels: LabelSet, variable: str, cohort: Iterable[str]
) -> tuple[int, int]:
    """(numerator, denominator) of patients with a documented known value.

    Documented-unknown and missing both count as not known. Raises on an
    empty cohort (zero denominator).
    """
    spec = labels.schema[variable]
    cohort = list(cohort)
    if not cohort:
        raise ValueError(f"{variable}: empty cohort for completeness")
    n_known = 0
    for pid in cohort:
        if any(r.is_known(spec) for r in labels.get(pid, variable)):
            n_known += 1
    return n_known, len(cohort)


def relative_difference(
    llm: MetricReport, abstraction: MetricReport
) -> list[RelativePerformance]:
    """Per-metric (llm - abstraction) deltas in signed percentage points.

    Only metrics defined on both sides appear. When both reports carry the
    exact integer ratios the delta is computed rationally, so integral
    percentage-point gaps come out exact. The two reports must describe the
    same cohort.
    """
    if llm.n_patients != abstraction.n_patients:
        raise ValueError(
            f"mismatched cohorts: {llm.n_patients} vs {abstraction.n_patients} patients"
        )
    out = []
    for name in METRIC_NAMES:
        a, b = llm.value(name), abstraction.value(name)
        if a is None or b is None:
            continue
        ra, rb = llm.ratios.get(name), abstraction.ratios.get(name)
        if ra and rb:
            delta = float(100 * (Fraction(*ra) - Fraction(*rb)))
        else:
            delta = 100.0 * (a - b)
        out.append(
            RelativePerformance(metric=name, llm_value=a, abstraction_value=b, delta_pp=delta)
        )
    return out


def bootstrap_ci(
    statistic: Callable[[Sequence[str]], Mapping[str, float | None] | float | None],
    patients: Sequence[str],
    *,
    n_replicates: int = 2000,
    seed: int = 0,
    alpha: float = 0.05,
):
    """Percentile bootstrap over patient-level resamples.

    ``statistic`` receives a patient list (with repeats) and returns either
    a float or a mapping of named floats; undefined replicate values are
    dropped before taking percentiles. Resample indices are drawn once from
    a generator seeded with ``seed``, so results are reproducible and do
    not depend on evaluation order. Intervals are clamped to bracket the
    point estimate.
    """
    patients = list(patients)
    if not patients:
        raise ValueError("bootstrap needs a non-empty cohort")
    if n_replicates < 1:
        raise ValueError("n_replicates must be >= 1")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(patients), size=(n_replicates, len(patients)))
    point = statistic(patients)
    lo_q, hi_q = 100 * alpha / 2, 100 * (1 - alpha / 2)

    def interval(values: list[float], center: float | None):
        if not values:
            return None
        lo, hi = np.percentile(values, [lo_q, hi_q])
        if center is not None:
            lo, hi = min(lo, center), max(hi, center)
        return (float(lo), float(hi))

    if isinstance(point, Mapping):
        reps: dict[str, list[float]] = {k: [] for k in point}
        for row in idx:
            sample = [patients[i] for i in row]
            rep = statistic(sample)
            for k in reps:
                v = rep.get(k) if isinstance(rep, Mapping) else None
                if v is not None:
                    reps[k].append(float(v))
        return {
            k: interval(reps[k], point.get(k))
            for k in point
            if interval(reps[k], point.get(k)) is not None
        }
    values = []
    for row in idx:
        v = statistic([patients[i] for i in row])
        if v is not None:
            values.append(float(v))
    return interval(values, None if point is None else float(point))


def variable_metrics(
    pred: LabelSet,
    reference,
    variable: str,
    positive_class: str | None,
    *,
    tolerance_days: int = 30,
    patients: Iterable[str] | None = None,
) -> MetricReport:
    """Confusion + completeness in one pass for one variable."""
    cohort = list(patients) if patients is not None else _default_cohort(pred, reference)
    counts = confusion(
        pred,
        reference,
        variable,
        positive_class,
        tolerance_days=tolerance_days,
        patients=cohort,
    )
    comp = completeness(pred, variable, cohort) if cohort else None
    return compute_metrics(counts, completeness=comp, n_patients=len(cohort))


def bootstrap_variable_ci(
    pred: LabelSet,
    reference,
    variable: str,
    positive_class: str | None,
    *,
    tolerance_days: int = 30,
    patients: Iterable[str] | None = None,
    n_replicates: int = 2000,
    seed: int = 0,
    alpha: float = 0.05,
) -> dict[str, tuple[float, float]]:
    """Bootstrap intervals for every defined metric of one variable."""
    cohort = list(patients) if patients is not None else _default_cohort(pred, reference)

    def statistic(sample: Sequence[str]) -> dict[str, float | None]:
        rep = variable_metrics(
            pred,
            reference,
            variable,
            positive_class,
            tolerance_days=tolerance_days,
            patients=sample,
        )
        return {name: rep.value(name) for name in METRIC_NAMES}

    return bootstrap_ci(
        statistic, cohort, n_replicates=n_replicates, seed=seed, alpha=alpha
    )


@dataclass(frozen=True)
class DerivedVariableRule:
    """Composite variable built from dated component tests near an index date.

    The index must be a dated ``index_positive`` assertion; anything else
    (absent, negated, undated, documented unknown) leaves the derivation
    unknown, since there is no index event to anchor the window. For each
    component the test closest to the index date within ``window_days``
    (ties to the earlier date) supplies its value. The derived value is
    positive when every component equals its required token, negative when
    any known in-window component differs, and unknown when any
    still-undecided component lacks a known in-window value.
    """

    name: str
    index_variable: str
    components: tuple[tuple[str, str], ...]  # (variable, required value)
    window_days: tuple[int, int] = (-60, 60)
    index_positive: str = "yes"

    def __post_init__(self) -> None:
        if self.window_days[0] > self.window_days[1]:
            raise ValueError(f"{self.name}: window lo must be <= hi")
        if not self.components:
            raise ValueError(f"{self.name}: at least one component required")
        object.__setattr__(self, "components", tuple(self.components))


def derive_variable(
    rule: DerivedVariableRule,
    labels: LabelSet,
    *,
    cohort: Iterable[str] | None = None,
) -> dict[str, str]:
    """Evaluate a derived rule per patient: positive/negative/unknown."""
    schema = labels.schema
    index_spec = schema[rule.index_variable]
    if index_spec.known_values is not None and rule.index_positive not in index_spec.known_values:
        raise ValueError(
            f"{rule.name}: {rule.index_variable} has no known value {rule.index_positive!r}"
        )
    for comp, required in rule.components:
        spec = schema[comp]
        if spec.known_values is not None and required not in spec.known_values:
            raise ValueError(f"{rule.name}: {comp} has no known value {required!r}")
    patients = sorted(cohort) if cohort is not None else sorted(labels.patients)
    lo, hi = rule.window_days
    out: dict[str, str] = {}
    for pid in patients:
        index_rec = labels.get_single(pid, rule.index_variable)
        if (
            index_rec is None
            or index_rec.value != rule.index_positive
            or index_rec.event_date is None
        ):
            out[pid] = DERIVED_UNKNOWN
            continue
        index = index_rec.event_date
        verdict = DERIVED_POSITIVE
        for comp, required in rule.components:
            spec = schema[comp]
            candidates = [
                r
                for r in labels.get(pid, comp)
                if r.is_known(spec)
                and r.event_date is not None
                and lo <= (r.event_date - index).days <= hi
            ]
            if not candidates:
                if verdict == DERIVED_POSITIVE:
                    verdict = DERIVED_UNKNOWN
                continue
            nearest = min(
                candidates, key=lambda r: (abs((r.event_date - index).days), r.event_date)
            )
            if nearest.value != required:
                verdict = DERIVED_NEGATIVE
                break
        out[pid] = verdict
    return out


@dataclass
class EndToEndMetrics:
    """Derived-variable performance, optionally against an abstraction side."""

    rule: DerivedVariableRule
    llm: MetricReport
    abstraction: MetricReport | None = None
    relative: list[RelativePerformance] | None = None


def _derived_confusion(
    derived_pred: Mapping[str, str],
    derived_ref: Mapping[str, str],
    name: str,
    cohort: Sequence[str],
) -> tuple[ConfusionCounts, tuple[int, int]]:
    counts = ConfusionCounts(variable=name, positive_class=DERIVED_POSITIVE)
    n_known = 0
    for pid in cohort:
        p = derived_pred.get(pid, DERIVED_UNKNOWN)
        r = derived_ref.get(pid, DERIVED_UNKNOWN)
        if p != DERIVED_UNKNOWN:
            n_known += 1
        if r == DERIVED_UNKNOWN:
            continue
        if r == DERIVED_POSITIVE and p == DERIVED_POSITIVE:
            counts.tp += 1
        elif r == DERIVED_POSITIVE:
            counts.fn += 1
        elif p == DERIVED_POSITIVE:
            counts.fp += 1
    return counts, (n_known, len(cohort))


def end_to_end_metrics(
    rule: DerivedVariableRule,
    pred: LabelSet,
    reference,
    abstraction: LabelSet | None = None,
    *,
    cohort: Iterable[str] | None = None,
) -> EndToEndMetrics:
    """Score a derived variable end to end.

    Both sides are derived with the same rule; the derived values then feed
    a one-vs-rest confusion on the positive class. Component errors
    compound: with independent per-component accuracy p over k required
    components, end-to-end accuracy approaches p**k.
    """
    ref_labels = _reference_labels(reference)
    cohort_list = (
        sorted(cohort) if cohort is not None else _default_cohort(pred, reference)
    )
    derived_ref = derive_variable(rule, ref_labels, cohort=cohort_list)
    derived_pred = derive_variable(rule, pred, cohort=cohort_list)
    counts, comp = _derived_confusion(derived_pred, derived_ref, rule.name, cohort_list)
    llm_report = compute_metrics(counts, completeness=comp, n_patients=len(cohort_list))
    result = EndToEndMetrics(rule=rule, llm=llm_report)
    if abstraction is not None:
        derived_abs = derive_variable(rule, abstraction, cohort=cohort_list)
        a_counts, a_comp = _derived_confusion(
            derived_abs, derived_ref, rule.name, cohort_list
        )
        result.abstraction = compute_metrics(
            a_counts, completeness=a_comp, n_patients=len(cohort_list)
        )
        result.relative = relative_difference(llm_report, result.abstraction)
    return result


@dataclass
class StratumMetrics:
    """Per-stratum comparison; suppressed strata carry counts only."""

    stratum: str
    n: int
    suppressed: bool
    llm: MetricReport | None = None
    abstraction: MetricReport | None = None
    relative: list[RelativePerformance] | None = None


def stratified_metrics(
    pred: LabelSet,
    abstraction: LabelSet | None,
    reference,
    variable: str,
    positive_class: str | None,
    dataset: CohortDataset,
    stratum_key: str,
    *,
    tolerance_days: int = 30,
    min_stratum_n: int = 20,
) -> dict[str, StratumMetrics]:
    """Metrics per attribute stratum, with small strata suppressed.

    Strata with fewer than ``min_stratum_n`` patients report only their
    size. A widening llm-vs-abstraction gap in one stratum relative to the
    others is the differential-error signal this view exists to surface.
    """
    out: dict[str, StratumMetrics] = {}
    for stratum, pids in sorted(dataset.strata(stratum_key).items()):
        if len(pids) < min_stratum_n:
            out[stratum] = StratumMetrics(stratum=stratum, n=len(pids), suppressed=True)
            continue
        llm_rep = variable_metrics(
            pred,
            reference,
            variable,
            positive_class,
            tolerance_days=tolerance_days,
            patients=pids,
        )
        entry = StratumMetrics(
            stratum=stratum, n=len(pids), suppressed=False, llm=llm_rep
        )
        if abstraction is not None:
            abs_rep = variable_metrics(
                abstraction,
                reference,
                variable,
                positive_class,
                tolerance_days=tolerance_days,
                patients=pids,
            )
            entry.abstraction = abs_rep
            entry.relative = relative_difference(llm_rep, abs_rep)
        out[stratum] = entry
    return out
