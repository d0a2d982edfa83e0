"""Streaming estimation for multiplicative regression under the LPRE criterion.

The package fits y = exp(xᵀβ) ε by the least product relative error criterion
in four ways: a full-data Newton fit, a renewable one-pass estimator that
keeps only O(p²) summary state between batches, and the CEE / CUEE sequential
baselines. Sandwich variance estimation, Wald inference, checkpointable
streaming, and a Monte Carlo harness round it out.
"""

from .errors import (
    CheckpointError,
    DigestMismatch,
    DimensionMismatch,
    EstimationError,
    InconsistentWidth,
    InvalidLevel,
    MethodMismatch,
    NonPositiveResponse,
    NotConverged,
    NotPositiveDefinite,
    Overflow,
    ParseError,
    Singular,
    VersionMismatch,
)
from .estimators import (
    CeeState,
    CueeState,
    Method,
    RenewableState,
    SolverConfig,
    cee_update,
    cuee_update,
    fit_full,
    initial_state,
    renew_update,
    update_state,
)
from .inference import (
    EstimateReport,
    batch_variance,
    cp_hit,
    normal_cdf,
    normal_quantile,
    pooled_report,
    renewable_variance,
    report_csv,
    report_text,
    state_report,
    wald_report,
)
from .model import Batch, BatchSummaries, cmat, information, lpre_loss, score, summarize
from .simulate import (
    BenchResult,
    CovariateCase,
    DgpConfig,
    ErrorLaw,
    McSummary,
    batch_sizes,
    bench,
    estimate_stream,
    gen_batch,
    run_scenario,
)
from .streaming import BatchSource, apply_stream, load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "Batch",
    "BatchSource",
    "BatchSummaries",
    "BenchResult",
    "CeeState",
    "CheckpointError",
    "CovariateCase",
    "CueeState",
    "DgpConfig",
    "DigestMismatch",
    "DimensionMismatch",
    "ErrorLaw",
    "EstimateReport",
    "EstimationError",
    "InconsistentWidth",
    "InvalidLevel",
    "McSummary",
    "Method",
    "MethodMismatch",
    "NonPositiveResponse",
    "NotConverged",
    "NotPositiveDefinite",
    "Overflow",
    "ParseError",
    "RenewableState",
    "Singular",
    "SolverConfig",
    "VersionMismatch",
    "apply_stream",
    "batch_sizes",
    "batch_variance",
    "bench",
    "cee_update",
    "cmat",
    "cp_hit",
    "cuee_update",
    "estimate_stream",
    "fit_full",
    "gen_batch",
    "information",
    "initial_state",
    "load_checkpoint",
    "lpre_loss",
    "normal_cdf",
    "normal_quantile",
    "pooled_report",
    "renew_update",
    "renewable_variance",
    "report_csv",
    "report_text",
    "run_scenario",
    "save_checkpoint",
    "score",
    "state_report",
    "summarize",
    "update_state",
    "wald_report",
]
