from .experiment import (
    RESULTS_HEADER,
    SEED_POLICY,
    DataError,
    ExperimentConfig,
    FilterReport,
    ResultRow,
    ResultsTable,
    build_cohort,
    execution_seed,
    filter_converged,
    injected_failure,
    load_cohort_dir,
    run_experiment,
    run_grid,
    write_cohort,
)
from .report import AnalysisError, ReportBundle, analyze, compute_reports, write_reports
