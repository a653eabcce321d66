"""Matrix-weighted norms, PSD square roots, and penalty norms with their duals.

Everything here is a pure function of its inputs; ``WeightMatrix`` is immutable
after construction, so all operations are safe under concurrent use.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceFailure, DimensionMismatch, NotPsd, NotSymmetric, RankDeficientC

SYMMETRY_RTOL = 1e-12
PSD_RTOL = 1e-10

# Cap and tolerance for the largest-singular-value power iteration.
_POWER_MAX_ITER = 10_000
_POWER_RTOL = 1e-10


class PenaltyNorm(enum.Enum):
    """Norm used in the penalty term: sum of absolute values or Euclidean."""

    L1 = "l1"
    L2 = "l2"


def _as_matrix(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {M.shape}")
    return M


def check_symmetric(M: np.ndarray) -> None:
    """Raise NotSymmetric unless |M_ij - M_ji| <= rtol * (1 + |M_ij|) entrywise."""
    bad = np.abs(M - M.T) > SYMMETRY_RTOL * (1.0 + np.abs(M))
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise NotSymmetric(f"entry ({i}, {j}) differs from its transpose beyond tolerance")


def psd_sqrt(M) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues in [-eps, 0) relative to the spectral radius are clamped to
    zero before rooting; anything more negative raises NotPsd.
    """
    M = _as_matrix(M)
    check_symmetric(M)
    sym = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(sym)
    radius = np.max(np.abs(w)) if w.size else 0.0
    if np.any(w < -PSD_RTOL * max(radius, 1e-300)):
        raise NotPsd(f"eigenvalue {w.min():.3e} below tolerance for spectral radius {radius:.3e}")
    w = np.clip(w, 0.0, None)
    S = (V * np.sqrt(w)) @ V.T
    return 0.5 * (S + S.T)


@dataclass(frozen=True)
class WeightMatrix:
    """Symmetric PSD weight M with its square root computed once at construction."""

    m: int
    entries: np.ndarray
    sqrt_cache: np.ndarray = field(repr=False)

    @classmethod
    def from_matrix(cls, M) -> "WeightMatrix":
        M = _as_matrix(M)
        S = psd_sqrt(M)
        M = M.copy()
        M.flags.writeable = False
        S.flags.writeable = False
        return cls(m=M.shape[0], entries=M, sqrt_cache=S)

    @classmethod
    def identity(cls, m: int) -> "WeightMatrix":
        return cls.from_matrix(np.eye(m))

    @classmethod
    def from_inverse(cls, C, min_eigenvalue: float = 1e-10) -> "WeightMatrix":
        """Weight M = C^{-1} for a strictly positive definite C."""
        C = _as_matrix(C)
        check_symmetric(C)
        w, V = np.linalg.eigh(0.5 * (C + C.T))
        if w.min() < min_eigenvalue:
            raise RankDeficientC(f"smallest eigenvalue {w.min():.3e} below {min_eigenvalue:.0e}")
        inv = (V / w) @ V.T
        return cls.from_matrix(0.5 * (inv + inv.T))


def weighted_norm(x, M: WeightMatrix) -> float:
    """sqrt(x^T M x), computed as the Euclidean norm of M^{1/2} x."""
    x = np.asarray(x, dtype=float)
    if x.shape != (M.m,):
        raise DimensionMismatch(f"vector of length {x.shape} against weight of size {M.m}")
    return float(np.linalg.norm(M.sqrt_cache @ x))


def penalty_norm(theta, p: PenaltyNorm) -> float:
    theta = np.asarray(theta, dtype=float)
    if p is PenaltyNorm.L1:
        return float(np.sum(np.abs(theta)))
    return float(np.linalg.norm(theta))


def dual_vector_norm(w, p: PenaltyNorm) -> float:
    """Dual of the penalty norm on a vector: max-abs for L1, Euclidean for L2."""
    w = np.asarray(w, dtype=float)
    if p is PenaltyNorm.L1:
        return float(np.max(np.abs(w))) if w.size else 0.0
    return float(np.linalg.norm(w))


def dual_operator_norm(X, p: PenaltyNorm) -> float:
    """Operator norm sup_v ||X v||_2 / ||v|| of X against the penalty norm.

    For L1 this is the largest Euclidean column norm (the unit ball's extreme
    points are signed basis vectors).  For L2 it is the largest singular
    value, found by power iteration on X^T X.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.size == 0:
        return 0.0
    if p is PenaltyNorm.L1:
        return float(np.max(np.linalg.norm(X, axis=0)))
    B = X.T @ X if X.shape[1] <= X.shape[0] else X @ X.T
    scale = np.sqrt(np.trace(B))
    if scale == 0.0:
        return 0.0
    rng = np.random.default_rng(0)
    v = rng.standard_normal(B.shape[0])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(_POWER_MAX_ITER):
        Bv = B @ v
        nrm = np.linalg.norm(Bv)
        if nrm == 0.0:
            return 0.0
        v = Bv / nrm
        new_est = float(v @ (B @ v))
        if abs(new_est - est) <= _POWER_RTOL * max(new_est, 1e-300):
            return float(np.sqrt(new_est))
        est = new_est
    raise ConvergenceFailure("singular-value power iteration did not stabilize")


def loss(theta, A, b, M: WeightMatrix) -> float:
    """Weighted residual norm ||A theta - b||_M of a candidate solution."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if A.ndim != 2 or b.shape != (A.shape[0],) or theta.shape != (A.shape[1],):
        raise DimensionMismatch(
            f"loss shapes A={A.shape}, b={b.shape}, theta={theta.shape} do not agree"
        )
    return weighted_norm(A @ theta - b, M)
