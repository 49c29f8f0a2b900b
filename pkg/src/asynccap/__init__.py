"""Asynchronous-channel capacity bounds and sequential-decoder simulation."""

from .bounds import (
    BoundKind,
    BoundPoint,
    GridSpec,
    GridResolutionError,
    InfeasibleRateError,
    alpha_bar,
    discontinuity_at_capacity,
    discontinuity_at_zero,
    gaussian_lower_bound,
    lower_bound_alpha,
    sweep,
    sync_threshold,
    training_bounds,
    upper_bound_alpha,
)
from .chernoff import ChernoffResult, chernoff_info, cond_chernoff, tilted_dist
from .prob import (
    Channel,
    Dist,
    EmpiricalType,
    JointType,
    blahut_arimoto,
    cond_kl,
    empirical_type,
    enumerate_types,
    joint_type,
    kl,
    mutual_info,
    output_dist,
    type_class_log_prob,
)
from .sim import Codebook, Scheme, SimConfig, SimResult, make_codebook, run_experiment, run_trial

__version__ = "0.1.0"
