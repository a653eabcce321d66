"""Penalized estimators for statistical linear inverse problems.

The package provides the matrix-weighted geometry, the two penalized
estimators (unsquared and squared empirical loss, both with an unsquared norm
penalty), data-dependent regularization selection on a geometric grid,
numerical verification of the associated error bounds, finite Markov reward
processes with linear features for the LSTD application, and Monte-Carlo
calibration of the error tail model.
"""

from .geometry import PenaltyNorm, WeightMatrix, dual_operator_norm, loss, penalty_norm, psd_sqrt, weighted_norm
from .solvers import RhoSelection, SolveConfig, SolveResult, brute_force_minimize, oracle_infimum, select_rho, solve_squared, solve_unsquared
from .bounds import BoundReport, ErrorPair, ProblemInstance, compute_errors, conditioning, transformed_bound, verify_bound
from .mrp import FeatureMap, FiniteMrp, OffPolicyMrp, Trajectory, empirical_system, exact_system, projected_bellman_error, simulate, stationary_distribution, value_function
from .concentration import TailModel, calibrate_tails, coverage_test, rate_fit

__all__ = [
    "PenaltyNorm",
    "WeightMatrix",
    "psd_sqrt",
    "weighted_norm",
    "penalty_norm",
    "dual_operator_norm",
    "loss",
    "SolveConfig",
    "SolveResult",
    "RhoSelection",
    "solve_unsquared",
    "solve_squared",
    "select_rho",
    "oracle_infimum",
    "brute_force_minimize",
    "ProblemInstance",
    "ErrorPair",
    "BoundReport",
    "compute_errors",
    "verify_bound",
    "conditioning",
    "transformed_bound",
    "FiniteMrp",
    "OffPolicyMrp",
    "FeatureMap",
    "Trajectory",
    "stationary_distribution",
    "value_function",
    "exact_system",
    "simulate",
    "empirical_system",
    "projected_bellman_error",
    "TailModel",
    "calibrate_tails",
    "coverage_test",
    "rate_fit",
]
