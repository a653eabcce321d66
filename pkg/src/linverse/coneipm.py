"""Dense primal-dual interior-point solver for small cone programs.

Solves
    minimize    c'x
    subject to  G x + s = h,   s in K,
where K is a product of a nonnegative orthant of dimension ``l`` followed by
second-order cones of dimensions ``socs`` (each cone is
``{(u0, u1) : u0 >= ||u1||_2}``).  The dual variable z lives in the same cone.

The implementation is a standard Nesterov-Todd scaled predictor-corrector
method with dense block scaling matrices and one step of iterative refinement
per KKT solve.  Problem sizes here are tiny (tens of variables), so all linear
algebra is dense and the per-iteration cost is negligible; what matters is
reaching duality gaps near 1e-12 reliably, which the refinement step buys.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor as _lu_factor, lu_solve as _lu_solve


@dataclass
class ConeSolution:
    x: np.ndarray
    s: np.ndarray
    z: np.ndarray
    iterations: int
    gap: float
    primal_residual: float
    dual_residual: float
    primal_objective: float
    dual_objective: float
    converged: bool


def _blocks(l: int, socs: list[int]):
    out = []
    start = l
    for q in socs:
        out.append((start, start + q))
        start += q
    return out


def _jdot(u: np.ndarray) -> float:
    return u[0] * u[0] - float(u[1:] @ u[1:])


def _cone_margin(v: np.ndarray, l: int, soc_blocks) -> float:
    """Smallest slack to the cone boundary; positive means strictly interior."""
    m = np.inf
    if l:
        m = min(m, float(np.min(v[:l])))
    for a, b in soc_blocks:
        m = min(m, v[a] - float(np.linalg.norm(v[a + 1 : b])))
    return m


def _initial_shift(v: np.ndarray, l: int, soc_blocks) -> np.ndarray:
    v = v.copy()
    margin = _cone_margin(v, l, soc_blocks)
    if margin <= 0:
        shift = 1.0 - margin
        if l:
            v[:l] += shift
        for a, _ in soc_blocks:
            v[a] += shift
    return v


def _scaling(s: np.ndarray, z: np.ndarray, l: int, soc_blocks):
    """Nesterov-Todd scaling: returns dense (W, Winv, lambda) with lambda = W z."""
    p = s.size
    W = np.zeros((p, p))
    Winv = np.zeros((p, p))
    if l:
        w = np.sqrt(s[:l] / z[:l])
        W[:l, :l] = np.diag(w)
        Winv[:l, :l] = np.diag(1.0 / w)
    for a, b in soc_blocks:
        sb, zb = s[a:b], z[a:b]
        sj = np.sqrt(max(_jdot(sb), 1e-300))
        zj = np.sqrt(max(_jdot(zb), 1e-300))
        sbar, zbar = sb / sj, zb / zj
        gamma = np.sqrt((1.0 + float(sbar @ zbar)) / 2.0)
        wbar = sbar.copy()
        wbar[0] += zbar[0]
        wbar[1:] -= zbar[1:]
        wbar /= 2.0 * gamma
        # Jordan square root of the (unit-determinant) scaling point.
        v = wbar.copy()
        v[0] += 1.0
        v /= np.sqrt(2.0 * (wbar[0] + 1.0))
        eta = np.sqrt(sj / zj)
        q = b - a
        J = np.diag(np.r_[1.0, -np.ones(q - 1)])
        W[a:b, a:b] = eta * (2.0 * np.outer(v, v) - J)
        jv = v.copy()
        jv[1:] *= -1.0
        Winv[a:b, a:b] = (2.0 * np.outer(jv, jv) - J) / eta
    lam = W @ z
    return W, Winv, lam


def _jordan_mul(u: np.ndarray, v: np.ndarray, l: int, soc_blocks) -> np.ndarray:
    out = np.empty_like(u)
    out[:l] = u[:l] * v[:l]
    for a, b in soc_blocks:
        ub, vb = u[a:b], v[a:b]
        out[a] = float(ub @ vb)
        out[a + 1 : b] = ub[0] * vb[1:] + vb[0] * ub[1:]
    return out


def _jordan_div(lam: np.ndarray, d: np.ndarray, l: int, soc_blocks) -> np.ndarray:
    """Solve lam o u = d in the Jordan algebra of the cone."""
    u = np.empty_like(d)
    u[:l] = d[:l] / lam[:l]
    for a, b in soc_blocks:
        lb, db = lam[a:b], d[a:b]
        det = _jdot(lb)
        u0 = (lb[0] * db[0] - float(lb[1:] @ db[1:])) / det
        u[a] = u0
        u[a + 1 : b] = (db[1:] - u0 * lb[1:]) / lb[0]
    return u


def _identity_element(p: int, l: int, soc_blocks) -> np.ndarray:
    e = np.zeros(p)
    e[:l] = 1.0
    for a, _ in soc_blocks:
        e[a] = 1.0
    return e


def _max_step(v: np.ndarray, dv: np.ndarray, l: int, soc_blocks) -> float:
    """Largest t with v + t*dv in the cone, for v strictly interior."""
    t = np.inf
    if l:
        neg = dv[:l] < 0
        if neg.any():
            t = min(t, float(np.min(-v[:l][neg] / dv[:l][neg])))
    for a, b in soc_blocks:
        vb, db = v[a:b], dv[a:b]
        aa = _jdot(db)
        bb = 2.0 * (vb[0] * db[0] - float(vb[1:] @ db[1:]))
        cc = _jdot(vb)
        if aa > 1e-300:
            disc = bb * bb - 4.0 * aa * cc
            if disc >= 0.0:
                r1 = (-bb - np.sqrt(disc)) / (2.0 * aa)
                if r1 > 0.0:
                    t = min(t, r1)
        elif aa < -1e-300:
            disc = bb * bb - 4.0 * aa * cc
            r = (-bb - np.sqrt(disc)) / (2.0 * aa)
            t = min(t, r)
        else:
            if bb < 0.0:
                t = min(t, -cc / bb)
    return t


def solve_cone(
    c: np.ndarray,
    G: np.ndarray,
    h: np.ndarray,
    l: int,
    socs: list[int],
    gap_tol: float = 1e-10,
    feas_tol: float = 1e-10,
    max_iter: int = 100,
    stall_window: int = 10,
) -> ConeSolution:
    """Run the predictor-corrector iteration to the requested duality gap.

    ``converged`` is set when the absolute-plus-relative gap criterion
    ``s'z <= gap_tol * (1 + |c'x|)`` and both feasibility residuals are met.
    """
    c = np.asarray(c, dtype=float)
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    n = c.size
    p = h.size
    soc_blocks = _blocks(l, socs)
    nu = l + len(socs)
    e = _identity_element(p, l, soc_blocks)

    x = np.linalg.lstsq(G, h, rcond=None)[0]
    s = _initial_shift(h - G @ x, l, soc_blocks)
    z = _initial_shift(np.linalg.lstsq(G.T, -c, rcond=None)[0], l, soc_blocks)

    hnorm = max(1.0, float(np.linalg.norm(h)))
    cnorm = max(1.0, float(np.linalg.norm(c)))

    best = None
    best_score = np.inf
    stall = 0
    iters_done = 0

    for it in range(max_iter):
        iters_done = it
        rx = G.T @ z + c
        rs = G @ x + s - h
        gap = float(s @ z)
        pobj = float(c @ x)
        dobj = -float(h @ z)
        pres = float(np.linalg.norm(rs)) / hnorm
        dres = float(np.linalg.norm(rx)) / cnorm

        score = max(pres, dres, gap / max(1.0, abs(pobj)))
        if score < best_score * 0.9:
            best_score = score
            stall = 0
        else:
            stall += 1
        if best is None or score <= best_score:
            best = (x.copy(), s.copy(), z.copy(), it, gap, pres, dres, pobj, dobj)

        if gap <= gap_tol * (1.0 + abs(pobj)) and pres <= feas_tol and dres <= feas_tol:
            return ConeSolution(x, s, z, it, gap, pres, dres, pobj, dobj, True)
        if stall >= stall_window:
            break

        W, Winv, lam = _scaling(s, z, l, soc_blocks)
        # Reduced KKT in (dx, dz), eliminating ds = rst - G dx.  Solving this
        # unsymmetric form with pivoting keeps the dual equation accurate near
        # the boundary, where forming G' W^-2 G would square the scaling's
        # condition number.
        kkt_mat = np.zeros((n + p, n + p))
        kkt_mat[:n, n:] = G.T
        kkt_mat[n:, :n] = -Winv @ G
        kkt_mat[n:, n:] = W
        try:
            lu_piv = _lu_factor(kkt_mat)
        except np.linalg.LinAlgError:
            break

        def kkt(rxt, rst, dl, _lu=lu_piv):
            rhs = np.r_[rxt, dl - Winv @ rst]
            sol = _lu_solve(_lu, rhs)
            dx, dz = sol[:n], sol[n:]
            ds = rst - G @ dx
            return dx, ds, dz

        def kkt_refined(rxt, rst, dl):
            dx, ds, dz = kkt(rxt, rst, dl)
            for _ in range(2):
                r1 = rxt - G.T @ dz
                r2 = rst - (G @ dx + ds)
                r3 = dl - (Winv @ ds + W @ dz)
                ex, es, ez = kkt(r1, r2, r3)
                dx, ds, dz = dx + ex, ds + es, dz + ez
            return dx, ds, dz

        mu = gap / nu
        lam_lam = _jordan_mul(lam, lam, l, soc_blocks)

        # Predictor: pure Newton step toward the boundary.
        dl_aff = _jordan_div(lam, -lam_lam, l, soc_blocks)
        dx_a, ds_a, dz_a = kkt_refined(-rx, -rs, dl_aff)
        alpha_aff = min(1.0, _max_step(s, ds_a, l, soc_blocks), _max_step(z, dz_a, l, soc_blocks))
        mu_aff = float((s + alpha_aff * ds_a) @ (z + alpha_aff * dz_a)) / nu
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3))

        # Corrector: recenters and compensates the predictor's curvature.
        corr = _jordan_mul(Winv @ ds_a, W @ dz_a, l, soc_blocks)
        d_comb = sigma * mu * e - lam_lam - corr
        dl = _jordan_div(lam, d_comb, l, soc_blocks)
        dx, ds, dz = kkt_refined(-rx, -rs, dl)

        alpha = min(1.0, 0.99 * _max_step(s, ds, l, soc_blocks), 0.99 * _max_step(z, dz, l, soc_blocks))
        if alpha <= 1e-14:
            break
        x += alpha * dx
        s += alpha * ds
        z += alpha * dz

    x, s, z, it, gap, pres, dres, pobj, dobj = best
    ok = gap <= gap_tol * (1.0 + abs(pobj)) and pres <= feas_tol and dres <= feas_tol
    return ConeSolution(x, s, z, iters_done, gap, pres, dres, pobj, dobj, ok)
