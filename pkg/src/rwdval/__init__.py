"""Validation engine for LLM-extracted longitudinal patient datasets.

Scores extracted labels against expert abstraction (variable-level recall,
precision, F1, date accuracy, completeness), assembles reference standards
from duplicate abstraction or adjudication, runs declarative verification
checks, replicates survival / distribution / trend analyses against
external benchmarks, and quantifies stratum-differential error. A
synthetic cohort generator with a controllable error model supports
validation of the validator itself.
"""
from .schema import (
    CohortDataset,
    LabelRecord,
    LabelSet,
    Schema,
    SchemaError,
    Source,
    VariableKind,
    VariableSpec,
    patient_view,
)
from .labelio import (
    IngestError,
    load_schema,
    read_attributes,
    read_labels,
    save_schema,
    write_attributes,
    write_labels,
)
from .metrics import (
    ConfusionCounts,
    DerivedVariableRule,
    EndToEndMetrics,
    MetricReport,
    RelativePerformance,
    StratumMetrics,
    bootstrap_ci,
    bootstrap_variable_ci,
    completeness,
    compute_metrics,
    confusion,
    derive_variable,
    end_to_end_metrics,
    match_events,
    relative_difference,
    stratified_metrics,
    variable_metrics,
)
from .refstd import (
    AdjudicationError,
    DisagreementCase,
    ReferenceMode,
    ReferenceStandard,
    adjudicate_from_oracle,
    build_double_adjudication,
    build_duplicate_abstraction,
    build_triple_adjudication,
    find_disagreements,
    write_disagreements,
)
from .checks import (
    CheckDefinition,
    CheckReport,
    CheckSuite,
    Truth,
    default_suite_path,
    evaluate,
    load_suite,
    parse_check,
    refresh_stability,
    run_all_checks,
    to_text,
)
from .survival import KMCurve, SurvivalRecord, km_estimate, km_from_records, median_survival
from .replication import (
    DirectionBenchmark,
    ToleranceBenchmark,
    benchmark_concordance,
    compare_curves,
    compare_distribution,
    compare_trend,
    equity_replication,
    survival_records,
    trend_series,
)
from .synth import (
    ErrorModel,
    ErrorRates,
    GeneratorConfig,
    breast_schema,
    corrupt,
    expected_end_to_end_recall,
    expected_metrics,
    generate_truth,
    refresh_snapshot,
    simulate_validation_inputs,
)
from .pipeline import (
    ConfigError,
    PipelineResult,
    RunConfig,
    config_hash,
    emit_report,
    load_run_config,
    run_from_config_file,
    run_pipeline,
)

__version__ = "0.1.0"

__all__ = [
    "AdjudicationError",
    "CheckDefinition",
    "CheckReport",
    "CheckSuite",
    "CohortDataset",
    "ConfigError",
    "ConfusionCounts",
    "DerivedVariableRule",
    "DirectionBenchmark",
    "DisagreementCase",
    "EndToEndMetrics",
    "ErrorModel",
    "ErrorRates",
    "GeneratorConfig",
    "IngestError",
    "KMCurve",
    "LabelRecord",
    "LabelSet",
    "MetricReport",
    "PipelineResult",
    "ReferenceMode",
    "ReferenceStandard",
    "RelativePerformance",
    "RunConfig",
    "Schema",
    "SchemaError",
    "Source",
    "StratumMetrics",
    "SurvivalRecord",
    "ToleranceBenchmark",
    "Truth",
    "VariableKind",
    "VariableSpec",
    "adjudicate_from_oracle",
    "benchmark_concordance",
    "bootstrap_ci",
    "bootstrap_variable_ci",
    "breast_schema",
    "build_double_adjudication",
    "build_duplicate_abstraction",
    "build_triple_adjudication",
    "compare_curves",
    "compare_distribution",
    "compare_trend",
    "completeness",
    "compute_metrics",
    "config_hash",
    "confusion",
    "corrupt",
    "default_suite_path",
    "derive_variable",
    "emit_report",
    "end_to_end_metrics",
    "equity_replication",
    "evaluate",
    "expected_end_to_end_recall",
    "expected_metrics",
    "find_disagreements",
    "generate_truth",
    "km_estimate",
    "km_from_records",
    "load_run_config",
    "load_schema",
    "load_suite",
    "match_events",
    "median_survival",
    "parse_check",
    "patient_view",
    "read_attributes",
    "read_labels",
    "refresh_snapshot",
    "refresh_stability",
    "relative_difference",
    "run_all_checks",
    "run_from_config_file",
    "run_pipeline",
    "save_schema",
    "simulate_validation_inputs",
    "stratified_metrics",
    "survival_records",
    "to_text",
    "trend_series",
    "variable_metrics",
    "write_attributes",
    "write_disagreements",
    "write_labels",
]
