"""Compensating wage differentials for fatal job risk and the value of a
statistical life, from panel and cross-sectional data."""

from .errors import *  # noqa: F401,F403
from .estimators import (
    ESTIMATORS,
    EstimateResult,
    ModelSpec,
    VarianceComponents,
    between_estimator,
    estimate,
    estimate_variance_components,
    first_difference_estimator,
    pooled_ols,
    re_gls,
    re_loglike,
    re_mle,
    within_estimator,
)
from .iv import (
    IvSpec,
    TestResult,
    anderson_rubin_test,
    ar_confidence_set,
    estimate_table4,
    first_stage_diagnostics,
    frar_test,
    two_sls,
)
from .montecarlo import (
    DgpConfig,
    McReport,
    RiskModel,
    StudySpec,
    generate_garen_panel,
    run_study,
    summarize_interval_widths,
)
from .ols import covariance_matrix, solve_ols
from .panel import (
    PanelDataset,
    PanelSchema,
    RiskTable,
    SampleFilter,
    apply_filter,
    between_means,
    first_differences,
    load_panel,
    load_risk_table,
    merge_risk,
    weighted_average_risk,
    within_transform,
)
from .vsl import VslEstimate, WageStats, annual_earnings, compute_vsl, vsl_report

__version__ = "0.1.0"
