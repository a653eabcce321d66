"""Coefficient-error measures and the regret bounds they imply.

Six right-hand-side evaluators cover the two estimators crossed with three
regimes: a deterministic bound in terms of the realized coefficient errors,
a uniform high-probability bound whose penalty weight does not depend on the
confidence level, and an exact (leading constant one) high-probability bound
whose weight does.  ``verify_bound`` compares an estimator's loss on the true
system against an evaluated right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonpositiveTau
from .geometry import PenaltyNorm, WeightMatrix, dual_operator_norm, loss, psd_sqrt
from .solvers import SolveConfig, oracle_infimum

DEFAULT_EPS_SLACK = 1e-6


@dataclass(frozen=True)
class ProblemInstance:
    """A true system, its observed (noisy) counterpart, and the estimation geometry."""

    A: np.ndarray
    b: np.ndarray
    A_obs: np.ndarray
    b_obs: np.ndarray
    M: WeightMatrix
    penalty: PenaltyNorm

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float)
        A_obs = np.asarray(self.A_obs, dtype=float)
        b_obs = np.asarray(self.b_obs, dtype=float)
        if A.ndim != 2 or A_obs.shape != A.shape:
            raise DimensionMismatch(f"true and observed coefficients differ: {A.shape} vs {A_obs.shape}")
        m, d = A.shape
        if b.shape != (m,) or b_obs.shape != (m,) or self.M.m != m:
            raise DimensionMismatch("target or weight dimensions do not match the coefficient matrix")
        for arr in (A, b, A_obs, b_obs):
            if not np.all(np.isfinite(arr)):
                raise ValueError("instance entries must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "A_obs", A_obs)
        object.__setattr__(self, "b_obs", b_obs)

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape


@dataclass(frozen=True)
class ErrorPair:
    """Dual-operator-norm error of the coefficient matrix and weighted error of the target."""

    delta_a: float
    delta_b: float


@dataclass
class BoundReport:
    bound_name: str
    lhs: float
    rhs: float
    slack: float
    holds: bool
    epsilon_slack: float


def compute_errors(inst: ProblemInstance) -> ErrorPair:
    """Error measures of the observed system against the true one.

    delta_a is the operator norm of M^{1/2}(A - A_obs) from the penalty norm
    to the Euclidean norm; delta_b is the weighted Euclidean error of the
    target vector.
    """
    S = inst.M.sqrt_cache
    delta_a = dual_operator_norm(S @ (inst.A - inst.A_obs), inst.penalty)
    delta_b = float(np.linalg.norm(S @ (inst.b - inst.b_obs)))
    return ErrorPair(delta_a, delta_b)


def _true_infimum(inst: ProblemInstance, weight: float, cfg: SolveConfig) -> float:
    return oracle_infimum(inst.A, inst.b, inst.M, weight, inst.penalty, cfg)


def unsquared_deterministic_rhs(inst: ProblemInstance, lam: float, errs: ErrorPair, cfg: SolveConfig = SolveConfig()) -> float:
    """Deterministic regret bound for the unsquared-loss estimator at penalty weight lam."""
    if not lam > 0:
        raise ValueError("lam must be positive")
    ratio = errs.delta_a / lam
    inf_val = _true_infimum(inst, errs.delta_a + lam, cfg)
    return max(1.0, ratio) * inf_val + max(2.0, 1.0 + ratio) * errs.delta_b


def squared_deterministic_rhs(inst: ProblemInstance, lam: float, c: float, errs: ErrorPair, cfg: SolveConfig = SolveConfig()) -> float:
    """Deterministic regret bound for the grid-selected squared-loss estimator."""
    if not lam > 0 or not c > 0:
        raise ValueError("lam and c must be positive")
    ratio = errs.delta_a / lam
    inf_val = _true_infimum(inst, errs.delta_a + 2.0 * lam, cfg)
    return max(1.0, ratio) * inf_val + max(2.0, 1.0 + ratio) * errs.delta_b + max(1.0, ratio) * c


def unsquared_uniform_rhs(inst: ProblemInstance, tails, delta: float, cfg: SolveConfig = SolveConfig()) -> float:
    """High-probability bound for the unsquared estimator run at weight s_a.

    One weight serves every confidence level; the leading factor is
    max(1, z_a(delta)) so the evaluated bound never drops below the
    deterministic bound it instantiates when z_a(delta) < 1.
    """
    _check_delta(delta)
    za = tails.z_a(delta)
    zb = tails.z_b(delta)
    inf_val = _true_infimum(inst, tails.s_a * (1.0 + za), cfg)
    return max(1.0, za) * inf_val + tails.s_b * (1.0 + za) * zb


def unsquared_exact_rhs(inst: ProblemInstance, tails, delta: float, cfg: SolveConfig = SolveConfig()) -> float:
    """High-probability bound, leading constant one, for the unsquared estimator
    run at the confidence-dependent weight s_a * z_a(delta)."""
    _check_delta(delta)
    level = tails.s_a * tails.z_a(delta)
    errs = ErrorPair(level, tails.s_b * tails.z_b(delta))
    return unsquared_deterministic_rhs(inst, level, errs, cfg)


def squared_uniform_rhs(inst: ProblemInstance, tails, delta: float, cfg: SolveConfig = SolveConfig()) -> float:
    """High-probability bound for the grid-selected squared estimator at (lam, c) = (s_a, s_b)."""
    _check_delta(delta)
    za = tails.z_a(delta)
    zb = tails.z_b(delta)
    inf_val = _true_infimum(inst, tails.s_a * (za + 2.0), cfg)
    return (
        max(1.0, za) * inf_val
        + max(2.0, 1.0 + za) * tails.s_b * zb
        + max(1.0, za) * tails.s_b
    )


def squared_exact_rhs(inst: ProblemInstance, tails, delta: float, cfg: SolveConfig = SolveConfig()) -> float:
    """High-probability bound, leading constant one, for the grid-selected squared
    estimator at confidence-dependent (lam, c)."""
    _check_delta(delta)
    lam = tails.s_a * tails.z_a(delta)
    c = tails.s_b * tails.z_b(delta)
    return squared_deterministic_rhs(inst, lam, c, ErrorPair(lam, c), cfg)


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie strictly between 0 and 1")


def verify_bound(name: str, theta, inst: ProblemInstance, rhs: float, eps_slack: float = DEFAULT_EPS_SLACK) -> BoundReport:
    """Check the loss of ``theta`` on the TRUE system against an evaluated bound."""
    if not np.isfinite(rhs):
        raise ValueError("rhs must be finite")
    lhs = loss(theta, inst.A, inst.b, inst.M)
    slack = rhs - lhs
    return BoundReport(name, lhs, float(rhs), float(slack), slack >= -eps_slack, eps_slack)


def conditioning(M: WeightMatrix, C) -> tuple[float, float]:
    """Conditioning pair (kappa, tau) of the weight against a second-moment matrix.

    tau is the smallest singular value of M^{1/2} C M^{1/2} and kappa the
    largest singular value of C^{1/2} M C^{1/2} divided by tau; the two
    symmetrized products share a spectrum, so kappa >= 1.
    """
    C = np.asarray(C, dtype=float)
    Chalf = psd_sqrt(C)
    P1 = M.sqrt_cache @ C @ M.sqrt_cache
    P2 = Chalf @ M.entries @ Chalf
    sv1 = np.linalg.svd(0.5 * (P1 + P1.T), compute_uv=False)
    sv2 = np.linalg.svd(0.5 * (P2 + P2.T), compute_uv=False)
    tau = float(sv1[-1])
    kappa = float(sv2[0]) / tau
    return kappa, tau


def transformed_bound(rhs_components: tuple[float, float], kappa: float, tau: float) -> float:
    """Convert an M-loss bound into a C^{-1}-loss bound via the conditioning pair.

    ``rhs_components`` is (oracle_part, regret_part); the result is
    sqrt(kappa) * oracle_part + regret_part / sqrt(tau).
    """
    if not tau > 0:
        raise NonpositiveTau(f"tau must be positive, got {tau}")
    if kappa < 1.0 - 1e-10:
        raise ValueError(f"kappa must be at least 1, got {kappa}")
    oracle_part, regret_part = rhs_components
    return float(np.sqrt(kappa) * oracle_part + regret_part / np.sqrt(tau))
