"""Exact computations around conditioning sums of independent log-concave
integer variables: tilted laws, canonical measures, stochastic dominance,
order-preserving Markov couplings and conditioned-law convergence."""

__version__ = "0.1.0"

from .errors import (
    EmptyCondition,
    GibbsLabError,
    InstanceTooLarge,
    InvalidDistribution,
    InvalidInput,
    InvalidParameter,
    MonotonicityUnavailable,
    SchemaError,
    TargetUnreachable,
)
from .pmf import (
    Family,
    LogConcavityReport,
    Pmf,
    check_log_concave,
    family_from_spec,
    lambda_max,
    load_family,
    moments,
    partition_function,
    pmf_builtin,
    pmf_from_weights,
    tilt,
)
from .sumstats import (
    Interval,
    SumLaw,
    chernoff_log_bound,
    condition_check,
    condition_on_interval,
    cumulants,
    r_star,
    solve_tilt_for_mean,
    sum_law,
)
from .canonical import (
    DominanceResult,
    JointTable,
    canonical_joint,
    canonical_marginal,
    efron_check,
    mixture_conditional,
    proposition1_check,
    stochastic_dominance,
)
from .gcp import conditioned_law, gcp_experiment, sandwich_check, tv_distance

__all__ = [
    "EmptyCondition",
    "GibbsLabError",
    "InstanceTooLarge",
    "InvalidDistribution",
    "InvalidInput",
    "InvalidParameter",
    "MonotonicityUnavailable",
    "SchemaError",
    "TargetUnreachable",
    "Family",
    "LogConcavityReport",
    "Pmf",
    "check_log_concave",
    "family_from_spec",
    "lambda_max",
    "load_family",
    "moments",
    "partition_function",
    "pmf_builtin",
    "pmf_from_weights",
    "tilt",
    "Interval",
    "SumLaw",
    "chernoff_log_bound",
    "condition_check",
    "condition_on_interval",
    "cumulants",
    "r_star",
    "solve_tilt_for_mean",
    "sum_law",
    "DominanceResult",
    "JointTable",
    "canonical_joint",
    "canonical_marginal",
    "efron_check",
    "mixture_conditional",
    "proposition1_check",
    "stochastic_dominance",
    "conditioned_law",
    "gcp_experiment",
    "sandwich_check",
    "tv_distance",
]
