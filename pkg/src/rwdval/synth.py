"""Synthetic longitudinal cohorts with controllable, known error processes.

The generator produces an internally consistent breast-cancer-like cohort
(diagnoses, staging, metastatic progression, locoregional and systemic
treatment, biomarker tests, survival) as a reference-quality label set,
then ``corrupt`` derives imperfect extraction outputs from it under an
explicit error model. Because the truth and the error process are both
known, expected metric values have closed forms and the whole validation
stack can be tested end to end.

Randomness is per patient: each patient draws from an independent Philox
stream keyed by (seed, patient index), so output is reproducible and
independent of cohort size or iteration order.
"""
from __future__ import annotations

import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, replace
from datetime import date

import numpy as np

from .metrics import DerivedVariableRule
from .schema import (
    CohortDataset,
    LabelRecord,
    LabelSet,
    Schema,
    Source,
    VariableKind,
    VariableSpec,
    shift_date,
)

UNKNOWN = "unknown"

_TRUTH_SALT = 0x11
_CORRUPT_SALT = 0x22
_REFRESH_SALT = 0x33


def _patient_rng(salt: int, seed: int, index: int) -> np.random.Generator:
    key = np.array([np.uint64(seed), np.uint64((salt << 48) | index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _choice(rng: np.random.Generator, probs: Mapping[str, float]) -> str:
    u = rng.random()
    acc = 0.0
    items = sorted(probs.items())
    for value, p in items:
        acc += p
        if u < acc:
            return value
    return items[-1][0]


def breast_schema() -> Schema:
    """Variable definitions for the synthetic breast-cancer-like cohort."""
    yn = frozenset({"yes", "no", UNKNOWN})
    result = frozenset({"positive", "negative", UNKNOWN})
    specs = [
        VariableSpec("initial_dx", VariableKind.DATE, frozenset({"yes", UNKNOWN}), UNKNOWN),
        VariableSpec("metastatic_dx", VariableKind.DATE, yn, UNKNOWN),
        VariableSpec(
            "stage",
            VariableKind.CATEGORICAL,
            frozenset({"I", "II", "III", "IV", UNKNOWN}),
            UNKNOWN,
        ),
        VariableSpec("surgery", VariableKind.DATE, yn, UNKNOWN),
        VariableSpec("radiation", VariableKind.DATE, yn, UNKNOWN),
        VariableSpec("adjuvant_start", VariableKind.DATE, yn, UNKNOWN),
        VariableSpec(
            "first_line_regimen",
            VariableKind.CATEGORICAL,
            frozenset(
                {
                    "anthracycline_taxane",
                    "taxane_platinum",
                    "cdk46_inhibitor_ai",
                    "capecitabine",
                    UNKNOWN,
                }
            ),
            UNKNOWN,
        ),
        VariableSpec("er_result", VariableKind.EVENT_LIST, result, UNKNOWN),
        VariableSpec("pr_result", VariableKind.EVENT_LIST, result, UNKNOWN),
        VariableSpec("her2_result", VariableKind.EVENT_LIST, result, UNKNOWN),
        VariableSpec("gbrca1_result", VariableKind.EVENT_LIST, result, UNKNOWN),
        VariableSpec(
            "hr_status",
            VariableKind.CATEGORICAL,
            frozenset({"positive", "negative", UNKNOWN}),
            UNKNOWN,
        ),
        VariableSpec("endocrine_therapy", VariableKind.DATE, yn, UNKNOWN),
        VariableSpec("death", VariableKind.DATE, yn, UNKNOWN),
        VariableSpec("last_contact", VariableKind.DATE, frozenset({"yes", UNKNOWN}), UNKNOWN),
    ]
    return Schema(specs)


_BIOMARKERS = ("er_result", "pr_result", "her2_result", "gbrca1_result")


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for the synthetic cohort.

    Probability maps must sum to 1. ``include`` restricts which variables
    are emitted (None keeps all). Survival is exponential from the
    metastatic date with arm-specific medians, optionally scaled per
    attribute stratum, and administratively censored at ``followup_days``.
    """

    n_patients: int = 1000
    diagnosis_start: date = date(2010, 1, 1)
    diagnosis_months: int = 96
    strata: Mapping[str, Mapping[str, float]] = field(
        default_factory=lambda: {"race_ethnicity": {"groupA": 0.5, "groupB": 0.5}}
    )
    arms: Mapping[str, float] = field(default_factory=lambda: {"A": 0.5, "B": 0.5})
    metastatic_fraction: float = 0.35
    de_novo_fraction: float = 0.25
    met_delay_days: tuple[int, int] = (180, 900)
    stage_probs: Mapping[str, float] = field(
        default_factory=lambda: {"I": 0.35, "II": 0.40, "III": 0.25}
    )
    surgery_by_stage: Mapping[str, float] = field(
        default_factory=lambda: {"I": 0.95, "II": 0.90, "III": 0.80, "IV": 0.0}
    )
    surgery_delay_days: tuple[int, int] = (7, 90)
    radiation_given_surgery: float = 0.6
    radiation_delay_days: tuple[int, int] = (10, 60)
    adjuvant_given_surgery: float = 0.7
    adjuvant_delay_days: tuple[int, int] = (7, 150)
    biomarker_positive: Mapping[str, float] = field(
        default_factory=lambda: {
            "er_result": 0.75,
            "pr_result": 0.65,
            "her2_result": 0.20,
            "gbrca1_result": 0.10,
        }
    )
    biomarker_tested: Mapping[str, float] = field(
        default_factory=lambda: {
            "er_result": 0.95,
            "pr_result": 0.95,
            "her2_result": 0.90,
            "gbrca1_result": 0.50,
        }
    )
    biomarker_repeat_rate: float = 0.15
    biomarker_window_days: tuple[int, int] = (-30, 30)
    endocrine_given_hr_positive: float = 0.85
    endocrine_delay_days: tuple[int, int] = (30, 200)
    regimens: Mapping[str, float] = field(
        default_factory=lambda: {
            "anthracycline_taxane": 0.35,
            "taxane_platinum": 0.25,
            "cdk46_inhibitor_ai": 0.25,
            "capecitabine": 0.15,
        }
    )
    os_median_days: Mapping[str, float] = field(
        default_factory=lambda: {"A": 420.0, "B": 330.0}
    )
    os_stratum_multiplier: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    followup_days: int = 1095
    unknown_rate: float = 0.0
    include: frozenset[str] | None = None

    def __post_init__(self) -> None:
        if self.n_patients <= 0:
            raise ValueError("n_patients must be positive")
        for name, probs in [
            ("arms", self.arms),
            ("stage_probs", self.stage_probs),
            ("regimens", self.regimens),
            *[(f"strata[{k}]", v) for k, v in self.strata.items()],
        ]:
            total = sum(probs.values())
            if not math.isclose(total, 1.0, abs_tol=1e-9):
                raise ValueError(f"{name}: probabilities sum to {total}, not 1")
        for lo, hi in (
            self.met_delay_days,
            self.surgery_delay_days,
            self.radiation_delay_days,
            self.adjuvant_delay_days,
            self.biomarker_window_days,
            self.endocrine_delay_days,
        ):
            if lo > hi:
                raise ValueError(f"delay window ({lo}, {hi}) is inverted")
        if self.include is not None:
            known = set(breast_schema().keys())
            bad = set(self.include) - known
            if bad:
                raise ValueError(f"include names unknown variables: {sorted(bad)}")

    def os_median(self, arm: str, attributes: Mapping[str, str]) -> float:
        median = self.os_median_days[arm]
        for attr, mults in self.os_stratum_multiplier.items():
            median *= mults.get(attributes.get(attr, ""), 1.0)
        return median


def _uniform_days(rng: np.random.Generator, window: tuple[int, int]) -> int:
    lo, hi = window
    return int(rng.integers(lo, hi + 1))


def generate_truth(config: GeneratorConfig, seed: int = 0) -> CohortDataset:
    """Generate the reference-quality cohort for a configuration.

    The output is internally consistent by construction: stage IV is
    de novo metastatic disease, surgery happens between initial and any
    metastatic diagnosis and never for stage IV, radiation and adjuvant
    therapy follow surgery inside their configured windows, repeat
    biomarker tests agree in sign, endocrine therapy needs hormone
    receptor positivity, and every death is dated and terminal.
    """
    schema = breast_schema()
    labels = LabelSet(schema, source=Source.REFERENCE)
    patients: dict[str, dict[str, str]] = {}
    span_days = max(1, config.diagnosis_months * 30)
    width = max(6, len(str(config.n_patients - 1)))

    def emit(pid, variable, value, event_date=None):
        if config.include is not None and variable not in config.include:
            return
        labels.add(
            LabelRecord(
                patient_id=pid,
                variable=variable,
                value=value,
                event_date=event_date,
                source=Source.REFERENCE,
            )
        )

    for i in range(config.n_patients):
        rng = _patient_rng(_TRUTH_SALT, seed, i)
        pid = f"P{i:0{width}d}"
        attrs = {attr: _choice(rng, probs) for attr, probs in sorted(config.strata.items())}
        attrs["treatment_arm"] = _choice(rng, config.arms)
        patients[pid] = attrs

        initial = shift_date(config.diagnosis_start, int(rng.integers(0, span_days)))
        emit(pid, "initial_dx", "yes", initial)

        metastatic = rng.random() < config.metastatic_fraction
        met_date = None
        if metastatic:
            de_novo = rng.random() < config.de_novo_fraction
            if de_novo:
                met_date = initial
                stage = "IV"
            else:
                met_date = shift_date(initial, _uniform_days(rng, config.met_delay_days))
                stage = _choice(rng, config.stage_probs)
            emit(pid, "metastatic_dx", "yes", met_date)
        else:
            stage = _choice(rng, config.stage_probs)
            emit(pid, "metastatic_dx", "no")
        emit(pid, "stage", stage)

        surgery_date = None
        if rng.random() < config.surgery_by_stage.get(stage, 0.0):
            surgery_date = shift_date(initial, _uniform_days(rng, config.surgery_delay_days))
            emit(pid, "surgery", "yes", surgery_date)
        else:
            emit(pid, "surgery", "no")

        if surgery_date is not None and rng.random() < config.radiation_given_surgery:
            emit(
                pid,
                "radiation",
                "yes",
                shift_date(surgery_date, _uniform_days(rng, config.radiation_delay_days)),
            )
        else:
            emit(pid, "radiation", "no")

        if surgery_date is not None and rng.random() < config.adjuvant_given_surgery:
            emit(
                pid,
                "adjuvant_start",
                "yes",
                shift_date(surgery_date, _uniform_days(rng, config.adjuvant_delay_days)),
            )
        else:
            emit(pid, "adjuvant_start", "no")

        if metastatic:
            emit(pid, "first_line_regimen", _choice(rng, config.regimens))

        signs = {}
        for marker in _BIOMARKERS:
            signs[marker] = (
                "positive" if rng.random() < config.biomarker_positive[marker] else "negative"
            )
        for marker in _BIOMARKERS:
            if rng.random() >= config.biomarker_tested[marker]:
                continue
            n_tests = 2 if rng.random() < config.biomarker_repeat_rate else 1
            offsets: set[int] = set()
            while len(offsets) < n_tests:
                offsets.add(_uniform_days(rng, config.biomarker_window_days))
            for off in sorted(offsets):
                emit(pid, marker, signs[marker], shift_date(initial, off))

        hr = "positive" if "positive" in (signs["er_result"], signs["pr_result"]) else "negative"
        emit(pid, "hr_status", hr)

        if hr == "positive" and rng.random() < config.endocrine_given_hr_positive:
            emit(
                pid,
                "endocrine_therapy",
                "yes",
                shift_date(initial, _uniform_days(rng, config.endocrine_delay_days)),
            )
        else:
            emit(pid, "endocrine_therapy", "no")

        anchor = met_date if met_date is not None else initial
        death_date = None
        if metastatic:
            median = config.os_median(attrs["treatment_arm"], attrs)
            duration = int(round(rng.exponential(median / math.log(2.0))))
            if duration <= config.followup_days:
                death_date = shift_date(anchor, max(duration, 1))
        if death_date is not None:
            emit(pid, "death", "yes", death_date)
            emit(pid, "last_contact", "yes", death_date)
        else:
            emit(pid, "death", "no")
            emit(pid, "last_contact", "yes", shift_date(anchor, config.followup_days))

        if config.unknown_rate > 0:
            # downgrade some documented values to documented-unknown
            for variable in ("stage", "hr_status", "first_line_regimen"):
                if rng.random() < config.unknown_rate:
                    _make_unknown(labels, pid, variable, schema)

    dataset = CohortDataset(
        schema=schema, patients=patients, label_sets={Source.REFERENCE: labels}
    )
    dataset.validate()
    return dataset


def _make_unknown(labels: LabelSet, pid: str, variable: str, schema: Schema) -> None:
    spec = schema[variable]
    if spec.unknown_token is None or not labels.get(pid, variable):
        return
    labels.remove(pid, variable)
    labels.add(
        LabelRecord(
            patient_id=pid,
            variable=variable,
            value=spec.unknown_token,
            event_date=None,
            source=labels.source,
        )
    )


# ---- error model ----


@dataclass(frozen=True)
class ErrorRates:
    """Per-variable rates of the supported corruption processes.

    ``miss`` drops a documented record; ``hallucinate`` fabricates a value
    where the truth has none; ``flip`` replaces a known value with a
    uniformly chosen other known value; ``date_shift_rate`` moves a date by
    exactly ``date_shift_days`` (sign random); ``instability`` mutates a
    record between data refreshes.
    """

    miss: float = 0.0
    hallucinate: float = 0.0
    flip: float = 0.0
    date_shift_rate: float = 0.0
    date_shift_days: int = 0
    instability: float = 0.0

    def __post_init__(self) -> None:
        for name in ("miss", "hallucinate", "flip", "date_shift_rate", "instability"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be within [0, 1], got {v}")
        if self.date_shift_days < 0:
            raise ValueError("date_shift_days must be non-negative")

    def scaled(self, factor: float) -> "ErrorRates":
        if factor == 1.0:
            return self
        clamp = lambda x: min(1.0, max(0.0, x * factor))
        return replace(
            self,
            miss=clamp(self.miss),
            hallucinate=clamp(self.hallucinate),
            flip=clamp(self.flip),
            date_shift_rate=clamp(self.date_shift_rate),
            instability=clamp(self.instability),
        )


@dataclass(frozen=True)
class ErrorModel:
    """1+ ErrorRates plus optional stratum-dependent scaling.

    ``stratum_multipliers`` scales every probability (never the shift
    magnitude) for patients whose ``stratum_attribute`` takes the given
    value; results are clamped to [0, 1]. That is how differential error,
    the bias mechanism under study, is injected.
    """

    default: ErrorRates = field(default_factory=ErrorRates)
    per_variable: Mapping[str, ErrorRates] = field(default_factory=dict)
    stratum_attribute: str | None = None
    stratum_multipliers: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.stratum_multipliers and self.stratum_attribute is None:
            raise ValueError("stratum_multipliers need a stratum_attribute")
        for value, mult in self.stratum_multipliers.items():
            if mult < 0:
                raise ValueError(f"multiplier for {value!r} must be non-negative")

    def rates_for(self, variable: str, attributes: Mapping[str, str] | None = None) -> ErrorRates:
        rates = self.per_variable.get(variable, self.default)
        if self.stratum_attribute and attributes is not None:
            mult = self.stratum_multipliers.get(
                attributes.get(self.stratum_attribute, ""), 1.0
            )
            rates = rates.scaled(mult)
        return rates


def _flip_value(rng: np.random.Generator, spec: VariableSpec, current: str) -> str:
    if spec.known_values is None:
        return current
    options = sorted(spec.known_values - {current})
    if not options:
        return current
    return options[int(rng.integers(0, len(options)))]


def _hallucinated_date(
    rng: np.random.Generator, spec: VariableSpec, anchor: date | None
) -> date | None:
    if not spec.kind.has_dates or anchor is None:
        return None
    return shift_date(anchor, int(rng.integers(0, 366)))


def corrupt(
    dataset: CohortDataset,
    model: ErrorModel,
    *,
    source: Source,
    seed: int,
    base_source: Source = Source.REFERENCE,
    refresh_id: str | None = None,
) -> LabelSet:
    """Derive an imperfect label set from a dataset's base labels.

    Per patient and variable, in deterministic order: the whole key may be
    missed; each surviving known record may have its value flipped to a
    uniformly chosen other known value; each surviving dated record may
    have its date shifted by exactly the configured magnitude. Variables
    absent from the truth may be hallucinated as a uniform known value,
    dated relative to the patient's initial diagnosis. Unknown-token
    records can be missed but are never flipped.
    """
    truth = dataset.labels(base_source)
    schema = dataset.schema
    out = LabelSet(schema, source=source, refresh_id=refresh_id)
    for index, pid in enumerate(sorted(dataset.patients)):
        rng = _patient_rng(_CORRUPT_SALT, seed, index)
        attrs = dataset.patients[pid]
        anchor_rec = truth.get_single(pid, "initial_dx") if "initial_dx" in schema else None
        anchor = anchor_rec.event_date if anchor_rec is not None else None
        for variable in sorted(schema.keys()):
            spec = schema[variable]
            rates = model.rates_for(variable, attrs)
            records = truth.get(pid, variable)
            if not records:
                if (
                    rates.hallucinate > 0
                    and spec.known_values
                    and rng.random() < rates.hallucinate
                ):
                    value = sorted(spec.known_values)[
                        int(rng.integers(0, len(spec.known_values)))
                    ]
                    event_date = _hallucinated_date(rng, spec, anchor)
                    if spec.kind == VariableKind.EVENT_LIST and event_date is None:
                        continue
                    out.add(
                        LabelRecord(
                            patient_id=pid,
                            variable=variable,
                            value=value,
                            event_date=event_date,
                            source=source,
                            refresh_id=refresh_id,
                        )
                    )
                continue
            if rng.random() < rates.miss:
                continue
            for rec in records:
                value = rec.value
                event_date = rec.event_date
                if rec.is_known(spec) and not isinstance(value, float):
                    if rng.random() < rates.flip:
                        value = _flip_value(rng, spec, value)
                if event_date is not None and rates.date_shift_rate > 0:
                    if rng.random() < rates.date_shift_rate:
                        sign = 1 if rng.random() < 0.5 else -1
                        event_date = shift_date(event_date, sign * rates.date_shift_days)
                out.add(
                    LabelRecord(
                        patient_id=pid,
                        variable=variable,
                        value=value,
                        event_date=event_date,
                        source=source,
                        refresh_id=refresh_id,
                    )
                )
    return out


def refresh_snapshot(
    labels: LabelSet,
    model: ErrorModel,
    *,
    seed: int,
    refresh_id: str,
    attributes: Mapping[str, Mapping[str, str]] | None = None,
    additions: LabelSet | None = None,
) -> LabelSet:
    """Produce the next refresh of a label feed.

    Each key mutates with its ``instability`` rate: the value flips when
    an alternative known value exists, otherwise the date shifts by the
    configured magnitude (default 30 days). ``additions`` merge in new
    patients, the expected kind of churn.
    """
    schema = labels.schema
    out = LabelSet(schema, source=labels.source, refresh_id=refresh_id)
    for index, pid in enumerate(sorted(labels.patients)):
        rng = _patient_rng(_REFRESH_SALT, seed, index)
        attrs = (attributes or {}).get(pid, {})
        for variable in sorted(schema.keys()):
            spec = schema[variable]
            rates = model.rates_for(variable, attrs)
            for rec in labels.get(pid, variable):
                value = rec.value
                event_date = rec.event_date
                if rates.instability > 0 and rng.random() < rates.instability:
                    flipped = None
                    if rec.is_known(spec) and not isinstance(value, float):
                        flipped = _flip_value(rng, spec, value)
                    if flipped is not None and flipped != value:
                        value = flipped
                    elif event_date is not None:
                        shift = rates.date_shift_days or 30
                        sign = 1 if rng.random() < 0.5 else -1
                        event_date = shift_date(event_date, sign * shift)
                out.add(
                    LabelRecord(
                        patient_id=pid,
                        variable=variable,
                        value=value,
                        event_date=event_date,
                        source=labels.source,
                        refresh_id=refresh_id,
                    )
                )
    if additions is not None:
        overlap = additions.patients & labels.patients
        if overlap:
            raise ValueError(f"additions overlap existing patients: {sorted(overlap)[:5]}")
        for rec in additions.records():
            out.add(replace(rec, source=labels.source, refresh_id=refresh_id))
    return out


# ---- closed-form expectations ----


def expected_metrics(
    model: ErrorModel,
    truth: CohortDataset,
    variable: str,
    positive_class: str,
    *,
    stratum_value: str | None = None,
    tolerance_days: int = 30,
    base_source: Source = Source.REFERENCE,
) -> dict[str, float | None]:
    """Expected metric values for ``corrupt`` output on a known truth.

    Exact for single-valued variables under the documented corruption
    order. When ``stratum_value`` is set the expectation is restricted to
    patients with that value of the model's stratum attribute (the rates
    then carry that stratum's multiplier).
    """
    schema = truth.schema
    spec = schema[variable]
    if spec.kind == VariableKind.EVENT_LIST:
        raise ValueError("closed-form expectations cover single-valued variables")
    labels = truth.labels(base_source)
    patients = sorted(truth.patients)
    if stratum_value is not None:
        if model.stratum_attribute is None:
            raise ValueError("stratum_value given but the model has no stratum_attribute")
        patients = [
            p
            for p in patients
            if truth.attribute(p, model.stratum_attribute) == stratum_value
        ]
        rates = model.rates_for(variable, {model.stratum_attribute: stratum_value})
    else:
        if model.stratum_attribute is not None and model.stratum_multipliers:
            raise ValueError(
                "model has stratum multipliers; pass stratum_value for exact expectations"
            )
        rates = model.rates_for(variable)
    n_cohort = len(patients)
    n_pos = 0
    n_other: dict[str, int] = {}
    n_known = 0
    n_absent = 0
    n_pos_dated = 0
    for pid in patients:
        rec = labels.get_single(pid, variable)
        if rec is None:
            n_absent += 1
            continue
        if not rec.is_known(spec):
            continue
        n_known += 1
        if rec.value == positive_class:
            n_pos += 1
            if rec.event_date is not None:
                n_pos_dated += 1
        else:
            n_other[str(rec.value)] = n_other.get(str(rec.value), 0) + 1
    keep = 1.0 - rates.miss
    intact = keep * (1.0 - rates.flip)
    k = len(spec.known_values)
    e_tp = n_pos * intact
    e_fn = n_pos * (1.0 - intact)
    e_fp = 0.0
    if k > 1:
        for count in n_other.values():
            e_fp += count * keep * rates.flip / (k - 1)
    e_fp += n_absent * rates.hallucinate / k
    recall = e_tp / (e_tp + e_fn) if (e_tp + e_fn) > 0 else None
    precision = e_tp / (e_tp + e_fp) if (e_tp + e_fp) > 0 else None
    f1 = None
    if recall is not None and precision is not None and (recall + precision) > 0:
        f1 = 2 * recall * precision / (recall + precision)
    completeness = None
    if n_cohort > 0:
        completeness = (n_known * keep + n_absent * rates.hallucinate) / n_cohort
    date_accuracy = None
    if spec.kind.has_dates and n_pos_dated > 0:
        if rates.date_shift_days > tolerance_days:
            date_accuracy = 1.0 - rates.date_shift_rate
        else:
            date_accuracy = 1.0
    return {
        "recall": recall,
        "precision": precision,
        "f1": f1,
        "completeness": completeness,
        "date_accuracy": date_accuracy,
    }


def expected_end_to_end_recall(
    model: ErrorModel,
    rule: DerivedVariableRule,
    *,
    attributes: Mapping[str, str] | None = None,
) -> float:
    """Expected recall of a derived classification under independent errors.

    Assumes the truth satisfies the rule for the scored patients, one test
    per component, no date shifting, and required values with exactly one
    alternative (so every flip breaks the rule). The derived prediction is
    then correct exactly when the index and every component survive
    unmissed and unflipped.
    """
    result = 1.0
    for variable in (rule.index_variable, *[v for v, _ in rule.components]):
        rates = model.rates_for(variable, attributes)
        result *= (1.0 - rates.miss) * (1.0 - rates.flip)
    return result


def simulate_validation_inputs(
    config: GeneratorConfig,
    *,
    seed: int = 0,
    llm_model: ErrorModel,
    abstractor_model: ErrorModel | None = None,
) -> CohortDataset:
    """Truth plus corrupted extraction outputs in one dataset.

    The reference labels are the generated truth; the llm label set (and,
    when a second model is given, an abstractor set) are corruptions of it
    with independent seeds.
    """
    dataset = generate_truth(config, seed)
    dataset.label_sets[Source.LLM] = corrupt(
        dataset, llm_model, source=Source.LLM, seed=seed + 1
    )
    if abstractor_model is not None:
        dataset.label_sets[Source.ABSTRACTOR_1] = corrupt(
            dataset, abstractor_model, source=Source.ABSTRACTOR_1, seed=seed + 2
        )
    dataset.validate()
    return dataset
