"""Minimizers for the two penalized objectives and the grid-based selection rule.

The two estimators are

    unsquared:  argmin_theta ||A theta - b||_M + lam * ||theta||
    squared:    argmin_theta ||A theta - b||_M^2 + rho * ||theta||

with the penalty norm either l1 or l2 (the penalty itself is never squared).
Both are small cone programs, solved here by the interior-point engine in
``coneipm`` to a certified duality gap.  The gap certificate matters: the
downstream bound-verification suites amplify estimator suboptimality by
error-to-penalty ratios that can reach 1e4, so objectives must be exact to
~1e-11, far beyond what a first-order stall test can guarantee.

``brute_force_minimize`` is the independent test oracle: exhaustive grid
search, kept deliberately free of any shared code path with the solvers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import coneipm
from .errors import DimensionMismatch, DimensionTooLarge, UnattainedInfimum
from .geometry import PenaltyNorm, WeightMatrix, dual_vector_norm, loss, penalty_norm


@dataclass(frozen=True)
class SolveConfig:
    """Optimality target and iteration limits for the penalized solvers.

    ``objective_tolerance`` is an absolute-plus-relative duality-gap target:
    a solve is converged when gap <= tol * (1 + |objective|).  ``stall_window``
    is the number of consecutive iterations without measurable progress after
    which the solver gives up and reports its best iterate.
    """

    objective_tolerance: float = 1e-8
    max_iterations: int = 200_000
    stall_window: int = 100

    def __post_init__(self):
        if not self.objective_tolerance > 0:
            raise ValueError("objective_tolerance must be positive")
        if self.max_iterations < self.stall_window:
            raise ValueError("max_iterations must be at least stall_window")


@dataclass
class SolveResult:
    theta: np.ndarray
    objective: float
    iterations: int
    converged: bool


@dataclass
class RhoSelection:
    """Outcome of the geometric-grid selection for the squared-loss estimator."""

    rho_hat: float
    grid: list[float]
    selector_values: list[float]
    result: SolveResult
    results: list[SolveResult] = field(repr=False, default_factory=list)


def _check_instance(A, b, M: WeightMatrix):
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2:
        raise DimensionMismatch(f"coefficient matrix must be 2-d, got shape {A.shape}")
    m, d = A.shape
    if b.shape != (m,) or M.m != m:
        raise DimensionMismatch(f"shapes A={A.shape}, b={b.shape}, M={M.m} do not agree")
    return A, b, m, d


def _ipm_params(cfg: SolveConfig):
    gap_tol = cfg.objective_tolerance
    feas_tol = max(gap_tol, 1e-11)
    max_iter = min(cfg.max_iterations, 100)
    stall = max(3, min(cfg.stall_window, 15))
    return gap_tol, feas_tol, max_iter, stall


def _unsquared_program(K, y, lam, p: PenaltyNorm):
    m, d = K.shape
    if p is PenaltyNorm.L1:
        # x = (theta, w, t): minimize t + lam 1'w, |theta| <= w, ||K theta - y|| <= t
        n = 2 * d + 1
        c = np.r_[np.zeros(d), lam * np.ones(d), 1.0]
        G = np.zeros((2 * d + m + 1, n))
        h = np.zeros(2 * d + m + 1)
        G[:d, :d] = np.eye(d)
        G[:d, d : 2 * d] = -np.eye(d)
        G[d : 2 * d, :d] = -np.eye(d)
        G[d : 2 * d, d : 2 * d] = -np.eye(d)
        G[2 * d, 2 * d] = -1.0
        G[2 * d + 1 :, :d] = -K
        h[2 * d + 1 :] = -y
        return c, G, h, 2 * d, [m + 1]
    # x = (theta, t, u): minimize t + lam u, ||K theta - y|| <= t, ||theta|| <= u
    n = d + 2
    c = np.r_[np.zeros(d), 1.0, lam]
    G = np.zeros((m + 1 + d + 1, n))
    h = np.zeros(m + 1 + d + 1)
    G[0, d] = -1.0
    G[1 : m + 1, :d] = -K
    h[1 : m + 1] = -y
    G[m + 1, d + 1] = -1.0
    G[m + 2 :, :d] = -np.eye(d)
    return c, G, h, 0, [m + 1, d + 1]


def _squared_program(K, y, rho, p: PenaltyNorm):
    # ||K theta - y||^2 <= v is encoded as the cone constraint
    # (v + 1, 2(K theta - y), v - 1) in Q_{m+2}.
    m, d = K.shape
    if p is PenaltyNorm.L1:
        n = 2 * d + 1  # (theta, w, v)
        c = np.r_[np.zeros(d), rho * np.ones(d), 1.0]
        G = np.zeros((2 * d + m + 2, n))
        h = np.zeros(2 * d + m + 2)
        G[:d, :d] = np.eye(d)
        G[:d, d : 2 * d] = -np.eye(d)
        G[d : 2 * d, :d] = -np.eye(d)
        G[d : 2 * d, d : 2 * d] = -np.eye(d)
        r0 = 2 * d
        G[r0, 2 * d] = -1.0
        h[r0] = 1.0
        G[r0 + 1 : r0 + 1 + m, :d] = -2.0 * K
        h[r0 + 1 : r0 + 1 + m] = -2.0 * y
        G[r0 + 1 + m, 2 * d] = -1.0
        h[r0 + 1 + m] = -1.0
        return c, G, h, 2 * d, [m + 2]
    n = d + 2  # (theta, u, v)
    c = np.r_[np.zeros(d), rho, 1.0]
    G = np.zeros((d + 1 + m + 2, n))
    h = np.zeros(d + 1 + m + 2)
    G[0, d] = -1.0
    G[1 : d + 1, :d] = -np.eye(d)
    r0 = d + 1
    G[r0, d + 1] = -1.0
    h[r0] = 1.0
    G[r0 + 1 : r0 + 1 + m, :d] = -2.0 * K
    h[r0 + 1 : r0 + 1 + m] = -2.0 * y
    G[r0 + 1 + m, d + 1] = -1.0
    h[r0 + 1 + m] = -1.0
    return c, G, h, 0, [d + 1, m + 2]


def solve_unsquared(A_obs, b_obs, M: WeightMatrix, lam: float, p: PenaltyNorm, cfg: SolveConfig = SolveConfig()) -> SolveResult:
    """Minimize the unsquared weighted loss plus ``lam`` times the penalty norm."""
    if not lam > 0:
        raise ValueError("lam must be positive")
    A_obs, b_obs, m, d = _check_instance(A_obs, b_obs, M)
    # theta = 0 is optimal exactly when the dual norm of the loss gradient at
    # zero is at most lam; returning it exactly keeps downstream selector
    # comparisons free of interior-point noise.
    grad_scale = dual_vector_norm(A_obs.T @ (M.entries @ b_obs), p)
    b_weighted = float(np.linalg.norm(M.sqrt_cache @ b_obs))
    if grad_scale <= lam * b_weighted:
        return SolveResult(np.zeros(d), b_weighted, 0, True)
    K = M.sqrt_cache @ A_obs
    y = M.sqrt_cache @ b_obs
    c, G, h, l, socs = _unsquared_program(K, y, lam, p)
    gap_tol, feas_tol, max_iter, stall = _ipm_params(cfg)
    sol = coneipm.solve_cone(c, G, h, l, socs, gap_tol, feas_tol, max_iter, stall)
    theta = sol.x[:d]
    obj = loss(theta, A_obs, b_obs, M) + lam * penalty_norm(theta, p)
    return SolveResult(theta, obj, sol.iterations, sol.converged)


def _polish_squared_l1(K, y, rho, theta):
    """Refine an approximate l1-penalized least-squares solution to the exact
    minimizer via its active set; returns None unless the full KKT conditions
    verify (which certifies global optimality)."""
    scale = max(float(np.max(np.abs(theta))), 1e-30)
    support = np.abs(theta) > 1e-6 * max(scale, 1.0)
    if not support.any():
        return None
    signs = np.sign(theta[support])
    Ks = K[:, support]
    try:
        theta_s = np.linalg.solve(2.0 * Ks.T @ Ks, 2.0 * Ks.T @ y - rho * signs)
    except np.linalg.LinAlgError:
        return None
    if np.any(np.sign(theta_s) != signs):
        return None
    out = np.zeros_like(theta)
    out[support] = theta_s
    grad = 2.0 * K.T @ (K @ out - y)
    tol = rho * 1e-9 + 1e-12
    if np.any(np.abs(grad[support] + rho * signs) > tol):
        return None
    if np.any(np.abs(grad[~support]) > rho + tol):
        return None
    return out


def _polish_squared_l2(K, y, rho, theta):
    """Refine toward the exact l2-penalized solution by solving the scalar
    stationarity equation for the solution norm."""
    w, V = np.linalg.eigh(K.T @ K)
    beta = V.T @ (2.0 * K.T @ y)

    def norm_at(s):
        return float(np.linalg.norm(beta * s / (2.0 * w * s + rho)))

    lo = hi = max(float(np.linalg.norm(theta)), 1e-12)
    for _ in range(200):
        if norm_at(lo) < lo:
            lo /= 2.0
        else:
            break
    else:
        return None
    for _ in range(200):
        if norm_at(hi) > hi:
            hi *= 2.0
        else:
            break
    else:
        return None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if norm_at(mid) > mid:
            lo = mid
        else:
            hi = mid
    s = 0.5 * (lo + hi)
    return V @ (beta * s / (2.0 * w * s + rho))


def solve_squared(A_obs, b_obs, M: WeightMatrix, rho: float, p: PenaltyNorm, cfg: SolveConfig = SolveConfig()) -> SolveResult:
    """Minimize the squared weighted loss plus ``rho`` times the (unsquared) penalty norm.

    The interior-point solve certifies the objective to the configured gap, but
    the squared loss is quadratically flat around its minimizer, so the
    returned point is additionally polished onto the exact stationarity
    conditions (active-set solve for l1, scalar norm equation for l2) whenever
    those conditions verify.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    A_obs, b_obs, m, d = _check_instance(A_obs, b_obs, M)
    # 0 in the subdifferential at zero: dual norm of 2 A' M b at most rho.
    if 2.0 * dual_vector_norm(A_obs.T @ (M.entries @ b_obs), p) <= rho:
        obj = float(np.linalg.norm(M.sqrt_cache @ b_obs)) ** 2
        return SolveResult(np.zeros(d), obj, 0, True)
    K = M.sqrt_cache @ A_obs
    y = M.sqrt_cache @ b_obs
    c, G, h, l, socs = _squared_program(K, y, rho, p)
    gap_tol, feas_tol, max_iter, stall = _ipm_params(cfg)
    sol = coneipm.solve_cone(c, G, h, l, socs, gap_tol, feas_tol, max_iter, stall)
    theta = sol.x[:d]

    def objective(t):
        return loss(t, A_obs, b_obs, M) ** 2 + rho * penalty_norm(t, p)

    polish = _polish_squared_l1(K, y, rho, theta) if p is PenaltyNorm.L1 else _polish_squared_l2(K, y, rho, theta)
    if polish is not None and objective(polish) <= objective(theta) + gap_tol * (1.0 + abs(sol.primal_objective)):
        theta = polish
    return SolveResult(theta, objective(theta), sol.iterations, sol.converged)


GRID_CAP = 60


def select_rho(A_obs, b_obs, M: WeightMatrix, lam: float, c: float, p: PenaltyNorm, cfg: SolveConfig = SolveConfig()) -> RhoSelection:
    """Pick the squared-loss penalty weight from the geometric grid {2^k * 2*c*lam}.

    Each grid point is solved with the squared objective and scored by the
    unsquared empirical loss plus ``lam`` times the penalty norm of its
    solution.  The scan stops at the first grid point beyond twice the dual
    norm of A'Mb, where the zero vector is optimal and the score can no
    longer change, or after ``GRID_CAP`` doublings.  Ties go to the smallest
    grid point.
    """
    if not lam > 0 or not c > 0:
        raise ValueError("lam and c must be positive")
    A_obs = np.asarray(A_obs, dtype=float)
    b_obs = np.asarray(b_obs, dtype=float)
    kill = 2.0 * dual_vector_norm(A_obs.T @ (M.entries @ b_obs), p)
    grid: list[float] = []
    selector: list[float] = []
    results: list[SolveResult] = []
    for k in range(GRID_CAP + 1):
        rho = (2.0**k) * 2.0 * c * lam
        res = solve_squared(A_obs, b_obs, M, rho, p, cfg)
        grid.append(rho)
        results.append(res)
        selector.append(loss(res.theta, A_obs, b_obs, M) + lam * penalty_norm(res.theta, p))
        if rho > kill:
            break
    idx = int(np.argmin(selector))
    return RhoSelection(grid[idx], grid, selector, results[idx], results)


def oracle_infimum(
    A,
    b,
    M: WeightMatrix,
    weight: float,
    p: PenaltyNorm,
    cfg: SolveConfig = SolveConfig(),
    search_radius: float | None = None,
) -> float:
    """Evaluate inf_theta ||A theta - b||_M + weight * ||theta||.

    For positive weight this is an unsquared solve on the given system.  At
    weight zero the unpenalized infimum is computed by least squares when the
    weighted coefficient matrix has full column rank, or by a ball-constrained
    least-squares solve when a search radius is supplied.
    """
    if weight < 0:
        raise ValueError("weight must be nonnegative")
    if weight > 0:
        return solve_unsquared(A, b, M, weight, p, cfg).objective
    A, b, m, d = _check_instance(A, b, M)
    K = M.sqrt_cache @ A
    y = M.sqrt_cache @ b
    sv = np.linalg.svd(K, compute_uv=False)
    full_rank = K.shape[0] >= d and sv.size > 0 and sv[-1] > 1e-10 * max(sv[0], 1e-300)
    if full_rank:
        theta = np.linalg.lstsq(K, y, rcond=None)[0]
        return float(np.linalg.norm(K @ theta - y))
    if search_radius is None:
        raise UnattainedInfimum("rank-deficient system with weight 0 and no search radius")
    # minimize t subject to ||K theta - y|| <= t, ||theta|| <= search_radius
    n = d + 1
    c = np.r_[np.zeros(d), 1.0]
    G = np.zeros((m + 1 + d + 1, n))
    h = np.zeros(m + 1 + d + 1)
    G[0, d] = -1.0
    G[1 : m + 1, :d] = -K
    h[1 : m + 1] = -y
    h[m + 1] = search_radius
    G[m + 2 :, :d] = -np.eye(d)
    gap_tol, feas_tol, max_iter, stall = _ipm_params(cfg)
    sol = coneipm.solve_cone(c, G, h, 0, [m + 1, d + 1], gap_tol, feas_tol, max_iter, stall)
    return float(np.linalg.norm(K @ sol.x[:d] - y))


def brute_force_minimize(objective, dim: int, box_radius: float, resolution: float, vectorized: bool = False, chunk: int = 1 << 22):
    """Exhaustive grid minimization over [-box_radius, box_radius]^dim.

    The grid is symmetric around the origin with exact spacing ``resolution``
    (zero is always a grid point).  ``objective`` takes a length-``dim``
    vector, or an (n, dim) batch when ``vectorized`` is set.  Returns the best
    grid point and its value.  Guarded to dim <= 3: the grid explodes beyond
    that, and the callers only need desk-scale certification.
    """
    if dim > 3:
        raise DimensionTooLarge(f"exhaustive search limited to 3 dimensions, got {dim}")
    if not (box_radius > 0 and resolution > 0):
        raise ValueError("box_radius and resolution must be positive")
    half = int(np.floor(box_radius / resolution + 1e-12))
    axis = np.arange(-half, half + 1, dtype=float) * resolution
    n_axis = axis.size

    best_val = np.inf
    best_theta = np.zeros(dim)
    if dim == 1:
        pts = axis[:, None]
        if vectorized:
            vals = np.asarray(objective(pts), dtype=float)
        else:
            vals = np.array([objective(pt) for pt in pts], dtype=float)
        i = int(np.argmin(vals))
        return pts[i].copy(), float(vals[i])

    rows_per_block = max(1, chunk // (n_axis ** (dim - 1)))
    for start in range(0, n_axis, rows_per_block):
        ax0 = axis[start : start + rows_per_block]
        n_block = ax0.size * n_axis ** (dim - 1)
        # Fortran order keeps each coordinate column contiguous, which is what
        # vectorized objectives slice.
        pts = np.empty((n_block, dim), order="F")
        if dim == 2:
            pts[:, 0] = np.repeat(ax0, n_axis)
            pts[:, 1] = np.tile(axis, ax0.size)
        else:
            pts[:, 0] = np.repeat(ax0, n_axis * n_axis)
            pts[:, 1] = np.tile(np.repeat(axis, n_axis), ax0.size)
            pts[:, 2] = np.tile(axis, ax0.size * n_axis)
        if vectorized:
            vals = np.asarray(objective(pts), dtype=float)
        else:
            vals = np.array([objective(pt) for pt in pts], dtype=float)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val = float(vals[i])
            best_theta = pts[i].copy()
    return best_theta, best_val
