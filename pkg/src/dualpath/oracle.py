"""Independent desk-scale reference answers.

A full-space barrier method on the coupled problem provides the optimum
phi*, the smoothed reference d*(t), and a vertex-enumeration evaluation
of the nonsmooth dual d0(y).  It shares only the barrier evaluators with
the decomposition path: feasibility comes from a max-min-slack LP over
the linear constraint rows (epigraph slacks that do not enter any
coupling are lifted analytically), and optimization is feasible-start
equality-constrained Newton with a geometric t -> 0 schedule.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product as _iproduct

import numpy as np
import scipy.linalg
import scipy.optimize

from ._kernels.tables import (COORD_HI, COORD_LO, ENT_EPI, HALFSPACE, LOG_EPI,
                              QUAD_EPI)

__all__ = [
    "OracleResult", "OracleError", "solve_coupled", "smoothed_value",
    "dual_d0", "block_vertices", "interior_feasible_point",
]

_MAX_COUPLED_DIM = 200


class OracleError(RuntimeError):
    pass


@dataclass
class OracleResult:
    phi_star: float
    x_star: list          # per-block full coordinates
    gap: float            # certified optimality gap
    t_end: float
    newton_iters: int


def _stack(problem):
    """Stacked coupling plus block-diagonal local equalities."""
    m = problem.m
    n = problem.n
    offs = np.cumsum([0] + [blk.n for blk in problem.blocks])
    rows_E = sum(blk.E.shape[0] for blk in problem.blocks if blk.has_equality)
    C = np.zeros((m + rows_E, n))
    rhs = np.zeros(m + rows_E)
    rhs[:m] = problem.b
    r = m
    for i, blk in enumerate(problem.blocks):
        C[:m, offs[i]:offs[i + 1]] = blk.A
        if blk.has_equality:
            p = blk.E.shape[0]
            C[r:r + p, offs[i]:offs[i + 1]] = blk.E
            rhs[r:r + p] = blk.f
            r += p
    return C, rhs, offs


def _split(problem, offs, x):
    return [x[offs[i]:offs[i + 1]] for i in range(problem.M)]


def _barrier_eval(problem, offs, x):
    val = 0.0
    g = np.zeros_like(x)
    H = np.zeros((x.shape[0], x.shape[0]))
    for i, blk in enumerate(problem.blocks):
        sl = slice(offs[i], offs[i + 1])
        xi = x[sl]
        val += blk.barrier.value(xi)
        g[sl] = blk.barrier.grad(xi)
        H[sl, sl] = blk.barrier.hess(xi)
    return val, g, H


def _interior(problem, offs, x):
    return all(blk.barrier.contains(x[offs[i]:offs[i + 1]])
               for i, blk in enumerate(problem.blocks))


def interior_feasible_point(problem, tau_cap=1e3):
    """Strictly interior point of the coupled constraint slice.

    Maximizes the smallest slack of the linear domain rows subject to all
    coupling/local equalities (a Chebyshev-center style LP).  Epigraph
    slack coordinates never enter the constraints for the shipped block
    families; they are lifted onto the interior of their nonlinear terms
    afterwards.
    """
    C, rhs, offs, = _stack(problem)
    n = problem.n
    lifts = []        # (kind, cols...) processed after the LP
    s_cols = set()
    rows_ub = []      # (coeffs dict, upper bound, tau coefficient)
    for i, blk in enumerate(problem.blocks):
        table = blk.barrier.table
        if table is None:
            raise OracleError("coupled oracle needs term-table barriers")
        off = offs[i]
        for j in range(table.n_terms):
            k = table.kind[j]
            p = table.po[j]
            if k == LOG_EPI or k == ENT_EPI:
                iv, is_ = off + table.ia[j], off + table.ib[j]
                lifts.append((int(k), iv, is_, i))
                s_cols.add(is_)
                rows_ub.append(({iv: -1.0}, 0.0, 1.0))  # v >= tau
            elif k == QUAD_EPI:
                kq = int(table.params[p])
                i0, is_ = off + table.ia[j], off + table.ib[j]
                lifts.append((int(k), i0, is_, i, j))
                s_cols.add(is_)
    for i, blk in enumerate(problem.blocks):
        table = blk.barrier.table
        off = offs[i]
        for j in range(table.n_terms):
            k = table.kind[j]
            p = table.po[j]
            if k == COORD_LO:
                col = off + table.ia[j]
                if col in s_cols:
                    continue
                rows_ub.append(({col: -1.0}, -float(table.params[p]), 1.0))
            elif k == COORD_HI:
                col = off + table.ia[j]
                if col in s_cols:
                    continue
                rows_ub.append(({col: 1.0}, float(table.params[p]), 1.0))
            elif k == HALFSPACE:
                a = np.asarray(table.params[p + 1:p + 1 + table.dim])
                coeffs = {off + jj: a[jj] for jj in range(table.dim)
                          if a[jj] != 0.0}
                if any(c in s_cols for c in coeffs):
                    raise OracleError("epigraph slack appears in a halfspace")
                rows_ub.append((coeffs, float(table.params[p]),
                                float(np.linalg.norm(a))))
    for col in s_cols:
        if np.any(C[:, col] != 0.0):
            raise OracleError("epigraph slack enters a coupling/local row; "
                              "LP lifting unsupported")
    A_ub = np.zeros((len(rows_ub), n + 1))
    b_ub = np.zeros(len(rows_ub))
    for r, (coeffs, ub, tau_coef) in enumerate(rows_ub):
        for col, cv in coeffs.items():
            A_ub[r, col] = cv
        A_ub[r, n] = tau_coef
        b_ub[r] = ub
    A_eq = np.hstack([C, np.zeros((C.shape[0], 1))])
    cobj = np.zeros(n + 1)
    cobj[n] = -1.0
    res = scipy.optimize.linprog(cobj, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq,
                                 b_eq=rhs, bounds=[(None, None)] * n
                                 + [(0.0, tau_cap)], method="highs")
    if not res.success or res.x[n] <= 1e-9:
        raise OracleError("no strictly interior feasible point found "
                          f"(LP status: {res.message}, slack {res.x[n] if res.success else 'n/a'})")
    x = np.array(res.x[:n])
    # repair the LP's loose equality tolerance
    corr = C.T @ np.linalg.solve(C @ C.T, rhs - C @ x)
    x = x + corr
    # lift epigraph slacks strictly inside their terms
    for lift in lifts:
        if lift[0] in (LOG_EPI, ENT_EPI):
            _, iv, is_, i = lift
            v = x[iv]
            gv = -np.log(v) if lift[0] == LOG_EPI else v * np.log(v)
            cap = _s_cap_of(problem.blocks[i], is_ - offs[i])
            slack = 1.0 if cap is None else min(1.0, 0.5 * (cap - gv))
            if slack <= 0.0:
                raise OracleError("epigraph cap leaves no room above g(v)")
            x[is_] = gv + slack
        else:
            _, i0, is_, i, j = lift
            table = problem.blocks[i].barrier.table
            p = table.po[j]
            kq = int(table.params[p])
            r0 = table.params[p + 1]
            q = np.asarray(table.params[p + 2:p + 2 + kq])
            Q = np.asarray(table.params[p + 2 + kq:p + 2 + kq + kq * kq]).reshape(kq, kq)
            xs = x[i0:i0 + kq]
            phi = float(xs @ Q @ xs + q @ xs + r0)
            floor = _s_floor_of(problem.blocks[i], is_ - offs[i])
            if floor is not None and phi <= floor:
                raise OracleError("quadratic epigraph floor excludes the LP point")
            slack = 1.0 if floor is None else min(1.0, 0.25 * (phi - floor))
            x[is_] = phi - slack
    if not _interior(problem, offs, x):
        raise OracleError("lifted LP point is not strictly interior")
    return x


def _s_cap_of(block, s_local):
    table = block.barrier.table
    for j in range(table.n_terms):
        if table.kind[j] == COORD_HI and table.ia[j] == s_local:
            return float(table.params[table.po[j]])
    return None


def _s_floor_of(block, s_local):
    table = block.barrier.table
    for j in range(table.n_terms):
        if table.kind[j] == COORD_LO and table.ia[j] == s_local:
            return float(table.params[table.po[j]])
    return None


def _center_slice(problem, offs, C, rhs, c_full, t, x, tol=1e-6,
                  max_iter=500):
    """Damped Newton on t F(x) - c^T x over the slice {C x = rhs}.

    The barrier Hessian is diagonally equilibrated before the null-space
    projection: near a binding nonlinear constraint its condition number
    grows like 1/t^2, which is structural (coordinate-aligned) and the
    scaling reduces it to about 1/t so the reduced factorization stays
    meaningful in double precision.  The scaled null basis is recomputed
    each step (desk-scale SVD).  Returns (x, decrement, iters) with the
    decrement in the standard self-concordant scaling.
    """
    lam = np.inf
    best = (np.inf, x, 0)  # (lam, x, iteration found)
    for it in range(max_iter):
        val, g, H = _barrier_eval(problem, offs, x)
        psi = t * val - float(c_full @ x)
        d = 1.0 / np.sqrt(np.maximum(np.diag(H), 1e-300))
        Ns = scipy.linalg.null_space(C * d[np.newaxis, :])
        if Ns.shape[1] == 0:
            raise OracleError("coupled constraints leave no degrees of freedom")
        Hs = (H * d[np.newaxis, :]) * d[:, np.newaxis]
        gz = Ns.T @ (d * (t * g - c_full))
        Hz = Ns.T @ ((t * Hs) @ Ns)
        try:
            Lz = np.linalg.cholesky(Hz)
        except np.linalg.LinAlgError as exc:
            raise OracleError(f"reduced Hessian factorization failed: {exc}")
        dz = -scipy.linalg.cho_solve((Lz, True), gz)
        dx = d * (Ns @ dz)
        lam2 = max(-(gz @ dz), 0.0)
        lam = float(np.sqrt(lam2 / t))
        if lam <= tol:
            return x, lam, it
        if lam < 0.9 * best[0]:
            best = (lam, x, it)
        # decrement pinned at the rounding floor: accept the best iterate
        # (its decrement is folded into the caller's gap certificate)
        if it - best[2] >= 8 and best[0] <= 0.25:
            return best[1], best[0], it
        alpha = 1.0 if lam <= 0.25 else 1.0 / (1.0 + lam)
        slack = 1e-12 * (1.0 + abs(psi))
        ok = False
        for _ in range(80):
            xt = x + alpha * dx
            # demand genuine descent: the barrier blow-up then repels the
            # iterate from the boundary before the Hessian degenerates
            if _interior(problem, offs, xt):
                val_t = sum(problem.blocks[i].barrier.value(
                    xt[offs[i]:offs[i + 1]]) for i in range(problem.M))
                if t * val_t - float(c_full @ xt) <= psi - 0.1 * alpha * lam2 + slack:
                    ok = True
                    break
            alpha *= 0.5
        if not ok:
            # rounding floor: no productive step exists from here
            if best[0] <= 0.25:
                return best[1], best[0], it
            raise OracleError("coupled Newton line search stalled")
        x = xt
    raise OracleError(f"coupled centering did not converge in {max_iter} "
                      f"steps (decrement {lam:.2e})")


def _project_feasible(problem, offs, C, rhs, x):
    """Least-squares snap back onto {C x = rhs}; the correction is at
    rounding scale and must keep the point interior."""
    mu = np.linalg.solve(C @ C.T, C @ x - rhs)
    xp = x - C.T @ mu
    if not _interior(problem, offs, xp):
        raise OracleError("feasibility projection left the domain")
    if np.linalg.norm(C @ xp - rhs) > 1e-8 * (1.0 + np.linalg.norm(rhs)):
        raise OracleError("could not reach machine-level feasibility")
    return xp


def _prepare_coupled(problem):
    problem.prepare()
    if problem.n > _MAX_COUPLED_DIM:
        raise OracleError(f"coupled oracle is desk-scale only (n <= "
                          f"{_MAX_COUPLED_DIM}, got {problem.n})")
    C, rhs, offs = _stack(problem)
    c_full = np.concatenate([blk.c for blk in problem.blocks])
    x0 = interior_feasible_point(problem)
    x0 = _project_feasible(problem, offs, C, rhs, x0)
    return C, rhs, offs, c_full, x0


def solve_coupled(problem, tol=1e-6) -> OracleResult:
    """Certified maximum of sum_i c_i^T x_i over the coupled feasible set.

    Follows the central path of the coupled barrier problem down to
    t_end = tol / (2 nu); at an inexact center with decrement lam the
    optimality gap is at most nu t + t sqrt(nu) lam / (1 - lam).
    """
    C, rhs, offs, c_full, x = _prepare_coupled(problem)
    nu = problem.nu_total
    # start where the barrier dominates the linear term, then anneal
    t = max(1.0, abs(float(c_full @ x)))
    t_end = tol / (2.0 * nu)
    iters = 0
    while True:
        x, lam, its = _center_slice(problem, offs, C, rhs, c_full, t, x)
        x = _project_feasible(problem, offs, C, rhs, x)
        iters += its
        if t <= t_end:
            break
        t = max(t_end, 0.15 * t)
    if lam >= 0.5:
        raise OracleError(f"final centering too loose (decrement {lam:.2e})")
    phi = float(c_full @ x)
    # at an inexact center: phi* - phi(x) <= nu t + t sqrt(nu) lam/(1-lam)
    gap = nu * t + t * np.sqrt(nu) * lam / (1.0 - lam) + 1e-12 * (1.0 + abs(phi))
    return OracleResult(phi_star=phi, x_star=_split(problem, offs, x), gap=gap,
                        t_end=t, newton_iters=iters)


def smoothed_value(problem, t, tol=1e-10):
    """Reference d*(t) = max { phi(x) - t [F(x) - F(x^c)] : coupled feasible }.

    Strong duality makes this the minimum of the smoothed dual at the
    same t, using the problem's stored per-block center values as the
    references.
    """
    C, rhs, offs, c_full, x = _prepare_coupled(problem)
    t = float(t)
    cur = max(t, 1.0, abs(float(c_full @ x)))
    while True:
        x, lam, _ = _center_slice(problem, offs, C, rhs, c_full, cur, x,
                                  tol=max(tol, 1e-8))
        x = _project_feasible(problem, offs, C, rhs, x)
        if cur <= t:
            break
        cur = max(t, 0.15 * cur)
    fref = sum(blk.workspace.center_val for blk in problem.blocks)
    fval = sum(blk.barrier.value(x[offs[i]:offs[i + 1]])
               for i, blk in enumerate(problem.blocks))
    return float(c_full @ x) - t * (fval - fref)


# -- nonsmooth dual by vertex enumeration ----------------------------------

def _box_from_table(table):
    """Extract per-coordinate bounds; reject non-polytope terms."""
    lo = np.full(table.dim, -np.inf)
    hi = np.full(table.dim, np.inf)
    halfspaces = []
    for j in range(table.n_terms):
        k = table.kind[j]
        p = table.po[j]
        if k == COORD_LO:
            lo[table.ia[j]] = max(lo[table.ia[j]], table.params[p])
        elif k == COORD_HI:
            hi[table.ia[j]] = min(hi[table.ia[j]], table.params[p])
        elif k == HALFSPACE:
            a = np.array(table.params[p + 1:p + 1 + table.dim])
            halfspaces.append((a, float(table.params[p])))
        else:
            raise OracleError("block set is not a polytope (nonlinear barrier "
                              "term); vertex enumeration unsupported")
    return lo, hi, halfspaces


def block_vertices(block, max_vertices=4096):
    """Vertices of the closed block set.

    Supports interval products, optionally cut by one local equality row
    (vertices found on box edges).  Desk-scale deliberately.
    """
    if block.barrier.table is None:
        raise OracleError("custom barrier without a term table")
    lo, hi, halfspaces = _box_from_table(block.barrier.table)
    if halfspaces:
        raise OracleError("halfspace-cut blocks unsupported in vertex "
                          "enumeration")
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise OracleError("block set is unbounded; no vertex enumeration")
    n = block.n
    if block.has_equality:
        if block.E.shape[0] != 1:
            raise OracleError("vertex enumeration supports one equality row")
        a = block.E[0]
        f = float(block.f[0])
        verts = []
        bounds = [(lo[i], hi[i]) for i in range(n)]
        for free in range(n):
            if a[free] == 0.0:
                continue
            others = [i for i in range(n) if i != free]
            for corner in _iproduct(*[bounds[i] for i in others]):
                xs = np.empty(n)
                acc = f
                for i, v in zip(others, corner):
                    xs[i] = v
                    acc -= a[i] * v
                xi = acc / a[free]
                if lo[free] - 1e-12 <= xi <= hi[free] + 1e-12:
                    xs[free] = min(max(xi, lo[free]), hi[free])
                    verts.append(xs)
        if not verts:
            raise OracleError("equality slice misses the box")
        V = np.unique(np.round(np.array(verts), 12), axis=0)
    else:
        if 2 ** n > max_vertices:
            raise OracleError("too many box vertices for desk scale")
        V = np.array([list(c) for c in _iproduct(*[(lo[i], hi[i])
                                                   for i in range(n)])])
    return V


def dual_d0(problem, y):
    """d0(y) = sum_i max_{x_i in cl X_i} (c_i + A_i^T y)^T x_i - b^T y."""
    y = np.asarray(y, dtype=float)
    total = -float(problem.b @ y)
    for blk in problem.blocks:
        g = blk.c + blk.A.T @ y
        V = block_vertices(blk)
        total += float(np.max(V @ g))
    return total
