"""Downlink simulator and optimizer for cell-free massive MIMO networks.

Conjugate beamforming with channels estimated from uplink pilots, a closed-form
per-user achievable rate with a Monte-Carlo cross-check, random/greedy pilot
assignment, max-min power control by bisection over cone feasibility problems,
and a small-cell baseline, all driven by a reproducible drop-based experiment
harness.
"""

from .experiment import (SampleRecord, SampleSet, Scenario, empirical_cdf,
                         percentile, run_drops, run_single_drop, throughput)
from .linkmodel import (LinkStats, PowerAllocation, RateReport,
                        full_power_allocation, gamma, mc_effective_sinr, rate_cf)
from .maxmin import (FeasibilityInstance, SolveOptions, SolverFailure, feasible,
                     sinr_upper_bound, solve_maxmin)
from .pilots import (GreedyOptions, PilotBook, assign_random, contamination_matrix,
                     contamination_objective, greedy_assign, orthonormal_base,
                     smallest_eigenvector)
from .propagation import (LargeScale, PathLossParams, RadioConfig, ShadowingParams,
                          cost231_fixed_loss, large_scale, normalized_snr,
                          path_loss_db, sample_shadowing, spatial_covariance)
from .smallcell import (SmallCellAssignment, assign_aps, ergodic_log_rate,
                        estimate_variance_mu, rate_sc)
from .topology import NetworkDrop, place_uniform, wrap_distance, wrap_distance_matrix

__version__ = "0.1.0"

__all__ = [
    "FeasibilityInstance", "GreedyOptions", "LargeScale", "LinkStats",
    "NetworkDrop", "PathLossParams", "PilotBook", "PowerAllocation",
    "RadioConfig", "RateReport", "SampleRecord", "SampleSet", "Scenario",
    "ShadowingParams", "SmallCellAssignment", "SolveOptions", "SolverFailure",
    "assign_aps", "assign_random", "contamination_matrix",
    "contamination_objective", "cost231_fixed_loss", "empirical_cdf",
    "ergodic_log_rate", "estimate_variance_mu", "feasible",
    "full_power_allocation", "gamma", "greedy_assign", "large_scale",
    "mc_effective_sinr", "normalized_snr", "orthonormal_base", "path_loss_db",
    "percentile", "place_uniform", "rate_cf", "rate_sc", "run_drops",
    "run_single_drop", "sample_shadowing", "sinr_upper_bound",
    "smallest_eigenvector", "solve_maxmin", "spatial_covariance", "throughput",
    "wrap_distance", "wrap_distance_matrix",
]
