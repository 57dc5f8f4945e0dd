"""Pure-Python (numpy) evaluation backend.

Semantics must match `cy_backend` exactly: same iteration order, same
stopping rules.  The compiled twin only changes speed.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from .tables import COORD_HI, COORD_LO, ENT_EPI, HALFSPACE, LOG_EPI, QUAD_EPI

NAME = "python"

# kernel statuses
OK = 0
MAXITER = 1
NOT_INTERIOR = 2
LINESEARCH_FAIL = 3
NUMERICAL = 4


def contains(table, x):
    """Strict interior test: every log argument positive."""
    kind, ia, ib, po, params = table.kind, table.ia, table.ib, table.po, table.params
    for j in range(table.n_terms):
        k = kind[j]
        p = po[j]
        if k == COORD_LO:
            if not x[ia[j]] - params[p] > 0.0:
                return False
        elif k == COORD_HI:
            if not params[p] - x[ia[j]] > 0.0:
                return False
        elif k == HALFSPACE:
            if not params[p] - float(params[p + 1:p + 1 + table.dim] @ x) > 0.0:
                return False
        elif k == LOG_EPI:
            v = x[ia[j]]
            if not v > 0.0:
                return False
            if not np.log(v) + x[ib[j]] > 0.0:
                return False
        elif k == ENT_EPI:
            v = x[ia[j]]
            if not v > 0.0:
                return False
            if not x[ib[j]] - v * np.log(v) > 0.0:
                return False
        elif k == QUAD_EPI:
            kq = int(params[p])
            r = params[p + 1]
            q = params[p + 2:p + 2 + kq]
            Q = params[p + 2 + kq:p + 2 + kq + kq * kq].reshape(kq, kq)
            xs = x[ia[j]:ia[j] + kq]
            if not xs @ Q @ xs + q @ xs + r - x[ib[j]] > 0.0:
                return False
    return True


def value(table, x):
    """Barrier value; +inf outside the domain."""
    kind, ia, ib, po, params = table.kind, table.ia, table.ib, table.po, table.params
    total = 0.0
    for j in range(table.n_terms):
        k = kind[j]
        p = po[j]
        if k == COORD_LO:
            arg = x[ia[j]] - params[p]
        elif k == COORD_HI:
            arg = params[p] - x[ia[j]]
        elif k == HALFSPACE:
            arg = params[p] - float(params[p + 1:p + 1 + table.dim] @ x)
        elif k == LOG_EPI:
            v = x[ia[j]]
            if not v > 0.0:
                return np.inf
            w = np.log(v) + x[ib[j]]
            if not w > 0.0:
                return np.inf
            total += -np.log(v) - np.log(w)
            continue
        elif k == ENT_EPI:
            v = x[ia[j]]
            if not v > 0.0:
                return np.inf
            w = x[ib[j]] - v * np.log(v)
            if not w > 0.0:
                return np.inf
            total += -np.log(v) - np.log(w)
            continue
        else:  # QUAD_EPI
            kq = int(params[p])
            r = params[p + 1]
            q = params[p + 2:p + 2 + kq]
            Q = params[p + 2 + kq:p + 2 + kq + kq * kq].reshape(kq, kq)
            xs = x[ia[j]:ia[j] + kq]
            arg = xs @ Q @ xs + q @ xs + r - x[ib[j]]
        if not arg > 0.0:
            return np.inf
        total += -np.log(arg)
    return total


def grad(table, x, out=None):
    kind, ia, ib, po, params = table.kind, table.ia, table.ib, table.po, table.params
    g = out if out is not None else np.zeros(table.dim)
    g[:] = 0.0
    for j in range(table.n_terms):
        k = kind[j]
        p = po[j]
        if k == COORD_LO:
            g[ia[j]] += -1.0 / (x[ia[j]] - params[p])
        elif k == COORD_HI:
            g[ia[j]] += 1.0 / (params[p] - x[ia[j]])
        elif k == HALFSPACE:
            a = params[p + 1:p + 1 + table.dim]
            w = params[p] - float(a @ x)
            g += a / w
        elif k == LOG_EPI:
            v = x[ia[j]]
            w = np.log(v) + x[ib[j]]
            g[ia[j]] += -(1.0 + 1.0 / w) / v
            g[ib[j]] += -1.0 / w
        elif k == ENT_EPI:
            v = x[ia[j]]
            lv = np.log(v)
            w = x[ib[j]] - v * lv
            g[ia[j]] += -1.0 / v + (lv + 1.0) / w
            g[ib[j]] += -1.0 / w
        else:  # QUAD_EPI
            kq = int(params[p])
            r = params[p + 1]
            q = params[p + 2:p + 2 + kq]
            Q = params[p + 2 + kq:p + 2 + kq + kq * kq].reshape(kq, kq)
            xs = x[ia[j]:ia[j] + kq]
            gphi = 2.0 * (Q @ xs) + q
            w = xs @ Q @ xs + q @ xs + r - x[ib[j]]
            g[ia[j]:ia[j] + kq] += -gphi / w
            g[ib[j]] += 1.0 / w
    return g


def hess(table, x, out=None):
    kind, ia, ib, po, params = table.kind, table.ia, table.ib, table.po, table.params
    H = out if out is not None else np.zeros((table.dim, table.dim))
    H[:] = 0.0
    for j in range(table.n_terms):
        k = kind[j]
        p = po[j]
        if k == COORD_LO:
            d = x[ia[j]] - params[p]
            H[ia[j], ia[j]] += 1.0 / (d * d)
        elif k == COORD_HI:
            d = params[p] - x[ia[j]]
            H[ia[j], ia[j]] += 1.0 / (d * d)
        elif k == HALFSPACE:
            a = params[p + 1:p + 1 + table.dim]
            w = params[p] - float(a @ x)
            H += np.outer(a, a) / (w * w)
        elif k == LOG_EPI:
            v = x[ia[j]]
            w = np.log(v) + x[ib[j]]
            iv, is_ = ia[j], ib[j]
            H[iv, iv] += (1.0 + 1.0 / w + 1.0 / (w * w)) / (v * v)
            H[iv, is_] += 1.0 / (v * w * w)
            H[is_, iv] += 1.0 / (v * w * w)
            H[is_, is_] += 1.0 / (w * w)
        elif k == ENT_EPI:
            v = x[ia[j]]
            lv = np.log(v)
            w = x[ib[j]] - v * lv
            L = lv + 1.0
            iv, is_ = ia[j], ib[j]
            H[iv, iv] += 1.0 / (v * v) + 1.0 / (v * w) + L * L / (w * w)
            H[iv, is_] += -L / (w * w)
            H[is_, iv] += -L / (w * w)
            H[is_, is_] += 1.0 / (w * w)
        else:  # QUAD_EPI
            kq = int(params[p])
            r = params[p + 1]
            q = params[p + 2:p + 2 + kq]
            Q = params[p + 2 + kq:p + 2 + kq + kq * kq].reshape(kq, kq)
            sl = slice(ia[j], ia[j] + kq)
            xs = x[sl]
            gphi = 2.0 * (Q @ xs) + q
            w = xs @ Q @ xs + q @ xs + r - x[ib[j]]
            H[sl, sl] += np.outer(gphi, gphi) / (w * w) - 2.0 * Q / w
            H[sl, ib[j]] += -gphi / (w * w)
            H[ib[j], sl] += -gphi / (w * w)
            H[ib[j], ib[j]] += 1.0 / (w * w)
    return H


class KernelResult:
    __slots__ = ("z", "x", "status", "iters", "lam", "e_loc", "e_c", "fval")

    def __init__(self, z, x, status, iters, lam, e_loc, e_c, fval):
        self.z = z
        self.x = x
        self.status = status
        self.iters = iters
        self.lam = lam
        self.e_loc = e_loc
        self.e_c = e_c
        self.fval = fval


def newton_solve(table, glin, t, Z, xpart, z0, eps, use_center, Lc,
                 beta_full, max_iter, trace=None):
    """Damped/full Newton on psi(z) = F(x(z)) - glin^T x(z) / t.

    x(z) = xpart + Z z when Z is given (null-space reduced block), else
    x = z.  Stops when the dual-norm residual (local norm at the iterate,
    or at the analytic center when `use_center`) falls below eps.
    Residual units: e_loc = t * lambda_psi.
    """
    reduced = Z is not None
    z = np.array(z0, dtype=float)
    x = xpart + Z @ z if reduced else z.copy()
    if not contains(table, x):
        return KernelResult(z, x, NOT_INTERIOR, 0, np.nan, np.nan, np.nan, np.inf)
    gl = glin / t
    iters = 0
    status = MAXITER
    lam = np.nan
    lam_prev = np.inf
    stalled = 0
    e_loc = np.nan
    e_c = np.nan
    while True:
        g = grad(table, x) - gl
        H = hess(table, x)
        if reduced:
            gz = Z.T @ g
            Hz = Z.T @ H @ Z
        else:
            gz = g
            Hz = H
        try:
            L = np.linalg.cholesky(Hz)
        except np.linalg.LinAlgError:
            status = NUMERICAL
            break
        w = solve_triangular(L, gz, lower=True, check_finite=False)
        lam = float(np.sqrt(w @ w))
        e_loc = t * lam
        if Lc is not None:
            wc = solve_triangular(Lc, gz, lower=True, check_finite=False)
            e_c = t * float(np.sqrt(wc @ wc))
        if trace is not None:
            trace.append((value(table, x) - float(gl @ x), lam))
        crit = e_c if use_center else e_loc
        if crit <= eps:
            status = OK
            break
        # a decrement pinned at the rounding floor cannot improve further;
        # accept it (only reachable with near-machine eps targets)
        if lam <= 1e-8 and lam > 0.5 * lam_prev:
            stalled += 1
            if stalled >= 2:
                status = OK
                break
        else:
            stalled = 0
        lam_prev = lam
        if iters >= max_iter:
            status = MAXITER
            break
        dz = -solve_triangular(L.T, w, lower=False, check_finite=False)
        alpha = 1.0 if lam <= beta_full else 1.0 / (1.0 + lam)
        ok = False
        for _ in range(64):
            zt = z + alpha * dz
            xt = xpart + Z @ zt if reduced else zt
            if contains(table, xt):
                ok = True
                break
            alpha *= 0.5
        if not ok:
            status = LINESEARCH_FAIL
            break
        z = zt
        x = xt
        iters += 1
    fval = value(table, x)
    return KernelResult(z, x, status, iters, lam, e_loc, e_c, fval)
