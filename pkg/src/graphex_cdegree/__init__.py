"""Common-connection statistics of sparse graphex random graphs."""

from .cdegree import (
    CDegreeHistogram,
    TailFit,
    count_common,
    count_common_bruteforce,
    empirical_distribution,
    fit_tail_index,
    n_t_epsilon,
)
from .errors import (
    BracketError,
    CapacityError,
    ConfigError,
    DomainError,
    FitError,
    GraphexError,
    NumericError,
    QuadratureError,
)
from .experiment import ExperimentConfig, ExperimentReport, compare_mu1_matched, replication_seed, run_experiment
from .graphex import (
    Family,
    GraphexSpec,
    LimitFunctions,
    MarginalEvaluator,
    MarginalMode,
    eval_lambda,
    eval_W,
    limit_functions,
    limit_omega,
    mu1,
    mu2,
    mu_d,
    scaling_b,
    validate,
)
from .simulator import (
    PointSample,
    SparseGraph,
    choose_eta_max,
    planted_pair_draws,
    sample_graph_blocked,
    sample_graph_naive,
    sample_planted_pair,
    sample_points,
    simulate,
)
from .theory import BoundInterval, bound_interval, expected_nk_finite_t, limit_nk, mu4_condition_scan

__version__ = "0.1.0"
