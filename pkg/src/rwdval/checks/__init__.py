"""Declarative verification checks: expression language plus execution engine."""
from .engine import (
    CheckCategory,
    CheckDefinition,
    CheckFinding,
    CheckLevel,
    CheckOutcome,
    CheckReport,
    CheckResult,
    CheckSuite,
    DistributionRange,
    MonthlyCountStability,
    RefreshDelta,
    RefreshStability,
    Severity,
    StratifiedRateRange,
    default_suite_path,
    evaluate_patient_check,
    load_suite,
    monthly_counts,
    refresh_stability,
    run_all_checks,
    suite_from_dict,
)
from .lang import (
    CheckSyntaxError,
    CheckTypeError,
    Expr,
    Truth,
    evaluate,
    parse_check,
    referenced_variables,
    to_text,
)

__all__ = [
    "CheckCategory",
    "CheckDefinition",
    "CheckFinding",
    "CheckLevel",
    "CheckOutcome",
    "CheckReport",
    "CheckResult",
    "CheckSuite",
    "CheckSyntaxError",
    "CheckTypeError",
    "DistributionRange",
    "Expr",
    "MonthlyCountStability",
    "RefreshDelta",
    "RefreshStability",
    "Severity",
    "StratifiedRateRange",
    "Truth",
    "default_suite_path",
    "evaluate",
    "evaluate_patient_check",
    "load_suite",
    "monthly_counts",
    "parse_check",
    "referenced_variables",
    "refresh_stability",
    "run_all_checks",
    "suite_from_dict",
    "to_text",
]
