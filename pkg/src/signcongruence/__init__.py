"""Tests of sign congruence between two (asymptotically) normal estimates."""

__version__ = "0.1.0"

from .bootstrap_cov import ReplicateSet, load_replicates, trimmed_bootstrap_correlation
from .calibration import (
    CalibrationConfig,
    CalibrationError,
    CriticalValueEntry,
    boundary_sup_rejection,
    critical_value,
    emit_critical_table,
    pvalue_from_min_stat,
)
from .cones import Cone2, cone_basis_change, cone_test, transform_estimates
from .normal_math import (
    Correlation,
    Covariance2,
    bvn_upper_orthant,
    sample_bvn,
    std_normal_cdf,
    std_normal_quantile,
)
from .procedures import (
    EstimatePair,
    NullDirection,
    TestOutcome,
    bmw_test,
    feasible_test,
    fractal_test,
    heuristic_bootstrap_test,
    recommended_test,
    run_test,
)
