"""Two-sample covariance test for discretely observed, noisy functional data."""

__version__ = "0.1.0"

from .covtest import (
    TestConfig,
    TestResult,
    combine_pvalues,
    fully_observed_statistic,
    nonstandardized_statistic,
    run_split_test,
    run_split_tests,
    standardized_statistic,
)
from .data import (
    FunctionalSample,
    SplitAssignment,
    Subject,
    bootstrap_within_groups,
    ingest_csv,
    permute_groups,
    split_sample,
    write_csv,
)
from .errors import FdcovError, InputError, NumericalError
from .numerics import RngStream, chi_squared_upper_tail, eigh, kernel_weight
from .scores import aggregate_moments, subject_moments, variance_estimates
from .simulation import (
    ScenarioSpec,
    SimulationDesign,
    bootstrap_study,
    generate_pair,
    permutation_study,
    rejection_curve,
)
from .smoothing import GridSpec, default_bandwidth, pool_two_groups, pooled_covariance, presmooth_curve
from .spectral import EigenSystem, eigendecompose, evaluate_eigenfunction
