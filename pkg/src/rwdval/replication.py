"""Replication of published analyses and benchmarking against externals.

Builds analysis-ready survival cohorts from extracted labels, compares
Kaplan-Meier curves and category distributions between sources or against
published figures, tracks monthly trend series, and scores concordance
with external benchmarks (direction of effect, or a median within a
stated tolerance). Undefined medians never silently pass: they make the
benchmark non-concordant with an explicit reason.
"""
from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .checks.engine import monthly_counts
from .schema import LabelSet, VariableKind
from .survival import KMCurve, SurvivalRecord, km_from_records


@dataclass
class SurvivalCohort:
    """Follow-up records plus bookkeeping for excluded patients."""

    records: list[SurvivalRecord]
    n_no_index: int = 0
    n_no_followup: int = 0
    n_undated_event: int = 0
    n_negative_duration: int = 0

    @property
    def n_included(self) -> int:
        return len(self.records)

    def curve(self) -> KMCurve:
        return km_from_records(self.records)

    def summary(self) -> dict:
        return {
            "n_included": self.n_included,
            "n_no_index": self.n_no_index,
            "n_no_followup": self.n_no_followup,
            "n_undated_event": self.n_undated_event,
            "n_negative_duration": self.n_negative_duration,
        }


def survival_records(
    labels: LabelSet,
    *,
    index_variable: str,
    event_variable: str,
    censor_variable: str,
    event_positive: str = "yes",
    max_followup_days: int | None = None,
    patients: Iterable[str] | None = None,
) -> SurvivalCohort:
    """Assemble per-patient durations from extracted labels.

    Index is the dated value of ``index_variable``; the event happens at
    the date of ``event_variable`` when its value is ``event_positive``;
    otherwise the patient is censored at the date of ``censor_variable``.
    Patients lacking an index date or any follow-up anchor are excluded
    and counted, as are events dated before index. ``max_followup_days``
    applies administrative censoring at that horizon.
    """
    schema = labels.schema
    for var in (index_variable, event_variable, censor_variable):
        if not schema[var].kind.has_dates:
            raise ValueError(f"{var}: survival endpoints need a dated variable")
    pool = sorted(patients) if patients is not None else sorted(labels.patients)
    cohort = SurvivalCohort(records=[])
    for pid in pool:
        index_rec = labels.get_single(pid, index_variable)
        if (
            index_rec is None
            or not index_rec.is_known(schema[index_variable])
            or index_rec.event_date is None
        ):
            cohort.n_no_index += 1
            continue
        index_date = index_rec.event_date
        event_rec = labels.get_single(pid, event_variable)
        had_event = event_rec is not None and event_rec.is_known(
            schema[event_variable]
        ) and event_rec.value == event_positive
        if had_event:
            if event_rec.event_date is None:
                cohort.n_undated_event += 1
                continue
            last_date = event_rec.event_date
            event = True
        else:
            censor_rec = labels.get_single(pid, censor_variable)
            if (
                censor_rec is None
                or not censor_rec.is_known(schema[censor_variable])
                or censor_rec.event_date is None
            ):
                cohort.n_no_followup += 1
                continue
            last_date = censor_rec.event_date
            event = False
        if last_date < index_date:
            cohort.n_negative_duration += 1
            continue
        duration = (last_date - index_date).days
        if max_followup_days is not None and duration > max_followup_days:
            # administrative censoring at the analysis horizon
            from .schema import shift_date

            last_date = shift_date(index_date, max_followup_days)
            event = False
        cohort.records.append(
            SurvivalRecord(
                patient_id=pid, index_date=index_date, last_date=last_date, event=event
            )
        )
    return cohort


# ---- curve comparison ----


@dataclass
class CurveComparison:
    median_a: float | None
    median_b: float | None
    median_delta: float | None
    max_abs_diff: float
    max_abs_diff_at: float | None
    common_horizon: float
    survival_deltas: list[tuple[float, float, float, float]] = field(
        default_factory=list
    )  # (t, S_a, S_b, S_a - S_b)

    def to_dict(self) -> dict:
        return {
            "median_a": self.median_a,
            "median_b": self.median_b,
            "median_delta": self.median_delta,
            "max_abs_diff": self.max_abs_diff,
            "max_abs_diff_at": self.max_abs_diff_at,
            "common_horizon": self.common_horizon,
            "survival_deltas": [list(row) for row in self.survival_deltas],
        }


def compare_curves(
    curve_a: KMCurve,
    curve_b: KMCurve,
    *,
    at_times: Sequence[float] = (),
) -> CurveComparison:
    """Compare two Kaplan-Meier curves over their common follow-up.

    The median delta propagates None: it is defined only when both
    medians are. The sup-norm difference scans every event time of either
    curve up to the shorter follow-up.
    """
    median_a = curve_a.median()
    median_b = curve_b.median()
    median_delta = None
    if median_a is not None and median_b is not None:
        median_delta = median_a - median_b
    horizon = min(curve_a.max_followup, curve_b.max_followup)
    grid = sorted({t for t in curve_a.times + curve_b.times if t <= horizon})
    max_abs = 0.0
    max_at = None
    for t in grid:
        diff = abs(curve_a.survival_at(t) - curve_b.survival_at(t))
        if diff > max_abs:
            max_abs = diff
            max_at = t
    deltas = []
    for t in at_times:
        sa = curve_a.survival_at(t)
        sb = curve_b.survival_at(t)
        deltas.append((float(t), sa, sb, sa - sb))
    return CurveComparison(
        median_a=median_a,
        median_b=median_b,
        median_delta=median_delta,
        max_abs_diff=max_abs,
        max_abs_diff_at=max_at,
        common_horizon=horizon,
        survival_deltas=deltas,
    )


# ---- distribution comparison ----


@dataclass
class DistributionComparison:
    n: int
    tvd: float
    per_category: dict[str, tuple[float, float, float]]  # (observed, reference, delta)
    chi2: float | None
    chi2_pvalue: float | None
    chi2_applicable: bool
    chi2_reason: str | None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "tvd": self.tvd,
            "per_category": {
                cat: list(vals) for cat, vals in sorted(self.per_category.items())
            },
            "chi2": self.chi2,
            "chi2_pvalue": self.chi2_pvalue,
            "chi2_applicable": self.chi2_applicable,
            "chi2_reason": self.chi2_reason,
        }


def distribution_from_labels(
    labels: LabelSet, variable: str, patients: Iterable[str] | None = None
) -> dict[str, int]:
    """Known-value counts of a single-valued variable across patients."""
    spec = labels.schema[variable]
    if spec.kind == VariableKind.EVENT_LIST:
        raise ValueError(f"{variable}: distributions need a single-valued variable")
    pool = patients if patients is not None else sorted(labels.patients)
    counts: dict[str, int] = {}
    for pid in pool:
        rec = labels.get_single(pid, variable)
        if rec is not None and rec.is_known(spec):
            counts[str(rec.value)] = counts.get(str(rec.value), 0) + 1
    return counts


def compare_distribution(
    observed: Mapping[str, int], reference: Mapping[str, float]
) -> DistributionComparison:
    """Observed category counts versus a reference distribution.

    Categories are unioned with zero fill on either side. Total variation
    distance is always reported; the chi-square goodness-of-fit statistic
    is computed only when every expected count is at least 5 and the
    reference puts mass on every observed category.
    """
    if any(c < 0 for c in observed.values()):
        raise ValueError("observed counts must be non-negative")
    n = sum(observed.values())
    if n == 0:
        raise ValueError("observed distribution is empty")
    ref_total = float(sum(reference.values()))
    if ref_total <= 0 or any(p < 0 for p in reference.values()):
        raise ValueError("reference distribution needs non-negative mass summing > 0")
    categories = sorted(set(observed) | set(reference))
    per_category = {}
    tvd = 0.0
    for cat in categories:
        obs = observed.get(cat, 0) / n
        ref = reference.get(cat, 0.0) / ref_total
        per_category[cat] = (obs, ref, obs - ref)
        tvd += abs(obs - ref)
    tvd *= 0.5
    chi2 = pvalue = None
    applicable = True
    reason = None
    expected = [n * reference.get(cat, 0.0) / ref_total for cat in categories]
    if any(e == 0 for e in expected):
        applicable = False
        reason = "reference has zero mass on an observed category"
    elif min(expected) < 5:
        applicable = False
        reason = f"smallest expected count {min(expected):.2f} is below 5"
    else:
        from scipy.stats import chisquare

        f_obs = [observed.get(cat, 0) for cat in categories]
        stat = chisquare(f_obs=f_obs, f_exp=expected)
        chi2 = float(stat.statistic)
        pvalue = float(stat.pvalue)
    return DistributionComparison(
        n=n,
        tvd=tvd,
        per_category=per_category,
        chi2=chi2,
        chi2_pvalue=pvalue,
        chi2_applicable=applicable,
        chi2_reason=reason,
    )


# ---- trend series ----


@dataclass
class TrendSeries:
    variable: str
    months: list[str]
    counts: list[int]

    def to_dict(self) -> dict:
        return {
            "variable": self.variable,
            "months": self.months,
            "counts": self.counts,
        }


def trend_series(labels: LabelSet, variable: str) -> TrendSeries:
    """Zero-filled monthly record counts for a dated variable."""
    months, counts = monthly_counts(labels, variable)
    return TrendSeries(variable=variable, months=months, counts=counts)


@dataclass
class TrendComparison:
    months: list[str]
    counts_a: list[int]
    counts_b: list[int]
    correlation: float | None
    max_abs_count_diff: int

    def to_dict(self) -> dict:
        return {
            "months": self.months,
            "counts_a": self.counts_a,
            "counts_b": self.counts_b,
            "correlation": self.correlation,
            "max_abs_count_diff": self.max_abs_count_diff,
        }


def compare_trend(a: TrendSeries, b: TrendSeries) -> TrendComparison:
    """Align two monthly series on the union of their spans and compare."""
    span = sorted(set(a.months) | set(b.months))
    map_a = dict(zip(a.months, a.counts))
    map_b = dict(zip(b.months, b.counts))
    ca = [map_a.get(m, 0) for m in span]
    cb = [map_b.get(m, 0) for m in span]
    correlation = None
    if len(span) >= 2 and len(set(ca)) > 1 and len(set(cb)) > 1:
        correlation = float(np.corrcoef(ca, cb)[0, 1])
    return TrendComparison(
        months=span,
        counts_a=ca,
        counts_b=cb,
        correlation=correlation,
        max_abs_count_diff=max(abs(x - y) for x, y in zip(ca, cb)) if span else 0,
    )


# ---- benchmark concordance ----


@dataclass(frozen=True)
class DirectionBenchmark:
    """Published finding: the first group's median exceeds the second's."""

    name: str
    higher: str
    lower: str


@dataclass(frozen=True)
class ToleranceBenchmark:
    """Published figure: one group's median, replicated within a tolerance."""

    name: str
    group: str
    expected_median: float
    tolerance: float

    def __post_init__(self) -> None:
        if self.tolerance < 0:
            raise ValueError(f"{self.name}: tolerance must be non-negative")


BenchmarkSpec = DirectionBenchmark | ToleranceBenchmark


@dataclass
class ConcordanceResult:
    benchmark: str
    concordant: bool
    reason: str
    observed: dict[str, float | None]

    def to_dict(self) -> dict:
        return {
            "benchmark": self.benchmark,
            "concordant": self.concordant,
            "reason": self.reason,
            "observed": dict(sorted(self.observed.items())),
        }


def benchmark_concordance(
    benchmark: BenchmarkSpec, medians: Mapping[str, float | None]
) -> ConcordanceResult:
    """Score observed group medians against one external benchmark.

    A group missing from ``medians`` is an error; a group present with an
    undefined (None) median makes the result non-concordant with the
    reason stated, because the direction or value cannot be established.
    """
    if isinstance(benchmark, DirectionBenchmark):
        for group in (benchmark.higher, benchmark.lower):
            if group not in medians:
                raise KeyError(f"{benchmark.name}: no median supplied for {group!r}")
        m_hi = medians[benchmark.higher]
        m_lo = medians[benchmark.lower]
        observed = {benchmark.higher: m_hi, benchmark.lower: m_lo}
        undefined = [g for g, m in observed.items() if m is None]
        if undefined:
            return ConcordanceResult(
                benchmark=benchmark.name,
                concordant=False,
                reason=(
                    "median undefined for "
                    + ", ".join(sorted(undefined))
                    + "; direction cannot be established"
                ),
                observed=observed,
            )
        if m_hi > m_lo:
            return ConcordanceResult(
                benchmark=benchmark.name,
                concordant=True,
                reason=f"median {m_hi:g} > {m_lo:g} as published",
                observed=observed,
            )
        return ConcordanceResult(
            benchmark=benchmark.name,
            concordant=False,
            reason=f"median {m_hi:g} <= {m_lo:g}, direction reversed or erased",
            observed=observed,
        )
    if isinstance(benchmark, ToleranceBenchmark):
        if benchmark.group not in medians:
            raise KeyError(f"{benchmark.name}: no median supplied for {benchmark.group!r}")
        m = medians[benchmark.group]
        observed = {benchmark.group: m}
        if m is None:
            return ConcordanceResult(
                benchmark=benchmark.name,
                concordant=False,
                reason="median undefined; value cannot be compared",
                observed=observed,
            )
        delta = abs(m - benchmark.expected_median)
        if delta <= benchmark.tolerance:
            return ConcordanceResult(
                benchmark=benchmark.name,
                concordant=True,
                reason=(
                    f"median {m:g} within {benchmark.tolerance:g} of "
                    f"{benchmark.expected_median:g}"
                ),
                observed=observed,
            )
        return ConcordanceResult(
            benchmark=benchmark.name,
            concordant=False,
            reason=(
                f"median {m:g} misses {benchmark.expected_median:g} "
                f"by {delta:g} (> {benchmark.tolerance:g})"
            ),
            observed=observed,
        )
    raise TypeError(f"unsupported benchmark {benchmark!r}")


# ---- equity replication ----


@dataclass
class EquityReport:
    stratum_attribute: str
    curves: dict[str, KMCurve]
    medians: dict[str, float | None]
    group_sizes: dict[str, int]
    suppressed: list[str]
    concordance: ConcordanceResult | None

    def to_dict(self) -> dict:
        return {
            "stratum_attribute": self.stratum_attribute,
            "medians": dict(sorted(self.medians.items())),
            "group_sizes": dict(sorted(self.group_sizes.items())),
            "suppressed": sorted(self.suppressed),
            "concordance": self.concordance.to_dict() if self.concordance else None,
            "curves": {g: c.to_dict() for g, c in sorted(self.curves.items())},
        }


def equity_replication(
    records: Sequence[SurvivalRecord],
    stratum_of: Mapping[str, str],
    *,
    stratum_attribute: str = "stratum",
    benchmark: DirectionBenchmark | None = None,
    min_stratum_n: int = 20,
) -> EquityReport:
    """Per-stratum survival replication for equity assessment.

    Fits one curve per stratum, suppressing strata below
    ``min_stratum_n``. When a direction benchmark is given (a published
    between-group difference), its concordance is scored on the observed
    medians. Raises if every stratum is suppressed.
    """
    groups: dict[str, list[SurvivalRecord]] = {}
    for rec in records:
        key = stratum_of.get(rec.patient_id, "missing")
        groups.setdefault(key, []).append(rec)
    curves: dict[str, KMCurve] = {}
    medians: dict[str, float | None] = {}
    sizes: dict[str, int] = {}
    suppressed: list[str] = []
    for key in sorted(groups):
        recs = groups[key]
        sizes[key] = len(recs)
        if len(recs) < min_stratum_n:
            suppressed.append(key)
            continue
        curve = km_from_records(recs)
        curves[key] = curve
        medians[key] = curve.median()
    if not curves:
        raise ValueError(
            f"all {len(groups)} strata fall below min_stratum_n={min_stratum_n}"
        )
    concordance = None
    if benchmark is not None:
        concordance = benchmark_concordance(benchmark, medians)
    return EquityReport(
        stratum_attribute=stratum_attribute,
        curves=curves,
        medians=medians,
        group_sizes=sizes,
        suppressed=suppressed,
        concordance=concordance,
    )
