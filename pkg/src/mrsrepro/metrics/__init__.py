"""Agreement, inter-execution variability and finding-preservation statistics."""

from .agreement import AgreementStats, bland_altman, z95_matrix
from .findings import FindingPreservation, finding_preservation
from .records import QuantRecord, group_by, mean_over_executions, retained
from .variability import VariabilityStats, bootstrap_rmse, execution_residuals, rmse
from .wilcoxon import InsufficientDataError, WilcoxonResult, signed_rank_test, wilcoxon_signed_rank

__all__ = [
    "AgreementStats", "FindingPreservation", "InsufficientDataError", "QuantRecord",
    "VariabilityStats", "WilcoxonResult", "bland_altman", "bootstrap_rmse",
    "execution_residuals", "finding_preservation", "group_by", "mean_over_executions",
    "retained", "rmse", "signed_rank_test", "wilcoxon_signed_rank", "z95_matrix",
]
