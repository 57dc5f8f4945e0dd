"""Self-concordant function toolkit.

Scalar estimate pair omega/omega_star, local norms, a barrier interface
with the concrete log-barriers used by the solver, and damped-Newton
analytic centering.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from ._kernels import impl as _impl
from ._kernels.tables import TermTable

__all__ = [
    "omega", "omega_star", "local_norm", "dual_local_norm",
    "Barrier", "TermBarrier", "OrthantBarrier", "IntervalBarrier",
    "HalfspaceBarrier", "LogCongestionEpigraphBarrier",
    "EntropyEpigraphBarrier", "QuadraticEpigraphBarrier",
    "ProductBarrier", "ReducedBarrier",
    "AnalyticCenter", "CenteringError", "analytic_center",
    "barrier_from_descriptor",
]


def omega(tau):
    """omega(tau) = tau - ln(1 + tau), tau >= 0."""
    tau = float(tau)
    if tau < 0.0:
        raise ValueError("omega is defined for nonnegative arguments")
    return tau - np.log1p(tau)


def omega_star(tau):
    """omega*(tau) = -tau - ln(1 - tau), 0 <= tau < 1."""
    tau = float(tau)
    if tau < 0.0 or tau >= 1.0:
        raise ValueError("omega_star is defined on [0, 1)")
    return -tau - np.log1p(-tau)


def _chol(H):
    return np.linalg.cholesky(np.asarray(H, dtype=float))


def local_norm(H, u):
    """||u||_H = (u^T H u)^(1/2); H must be symmetric positive definite."""
    L = _chol(H)
    return float(np.linalg.norm(L.T @ np.asarray(u, dtype=float)))


def dual_local_norm(H, u):
    """||u||*_H = (u^T H^{-1} u)^(1/2); H must be symmetric positive definite."""
    L = _chol(H)
    w = solve_triangular(L, np.asarray(u, dtype=float), lower=True, check_finite=False)
    return float(np.linalg.norm(w))


class Barrier(ABC):
    """Self-concordant barrier over an open convex domain.

    Evaluators are pure and safe for concurrent use; instances are
    immutable after construction.
    """

    dim: int
    nu: float
    table: TermTable | None = None

    @abstractmethod
    def contains(self, x) -> bool: ...

    @abstractmethod
    def value(self, x) -> float: ...

    @abstractmethod
    def grad(self, x) -> np.ndarray: ...

    @abstractmethod
    def hess(self, x) -> np.ndarray: ...

    def descriptor(self) -> dict:
        raise NotImplementedError(f"{type(self).__name__} is not serializable")


class TermBarrier(Barrier):
    """Barrier backed by a flat term table, evaluated by the active kernel."""

    def __init__(self, table: TermTable, nu=None):
        self.table = table
        self.dim = table.dim
        self.nu = float(nu) if nu is not None else table.nu

    def contains(self, x):
        return _impl.contains(self.table, np.asarray(x, dtype=float))

    def value(self, x):
        return float(_impl.value(self.table, np.asarray(x, dtype=float)))

    def grad(self, x):
        return _impl.grad(self.table, np.asarray(x, dtype=float))

    def hess(self, x):
        return _impl.hess(self.table, np.asarray(x, dtype=float))


class OrthantBarrier(TermBarrier):
    """-sum ln(x_i) on the positive orthant; nu = n."""

    def __init__(self, n):
        super().__init__(TermTable.build(n, [("coord_lo", i, 0.0) for i in range(n)]))

    def descriptor(self):
        return {"kind": "orthant", "n": self.dim}


class IntervalBarrier(TermBarrier):
    """-ln(x_i - l_i) - ln(u_i - x_i) per coordinate; nu = 2 per coordinate."""

    def __init__(self, lower, upper):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if lower.shape != upper.shape or np.any(upper <= lower):
            raise ValueError("interval bounds must satisfy l < u componentwise")
        n = lower.shape[0]
        terms = []
        for i in range(n):
            terms.append(("coord_lo", i, lower[i]))
            terms.append(("coord_hi", i, upper[i]))
        super().__init__(TermTable.build(n, terms))
        self.lower = lower
        self.upper = upper

    def descriptor(self):
        return {"kind": "interval", "lower": self.lower.tolist(),
                "upper": self.upper.tolist()}


class HalfspaceBarrier(TermBarrier):
    """-ln(d - a^T x); nu = 1.

    The Hessian is rank one for dim > 1; use inside a product with other
    terms when positive definiteness is required.
    """

    def __init__(self, a, d):
        a = np.atleast_1d(np.asarray(a, dtype=float))
        super().__init__(TermTable.build(a.shape[0], [("halfspace", a, float(d))]))
        self.a = a
        self.d = float(d)

    def descriptor(self):
        return {"kind": "halfspace", "a": self.a.tolist(), "d": self.d}


class LogCongestionEpigraphBarrier(TermBarrier):
    """Barrier for {(v, s): v > 0, -ln(v) <= s}: -ln v - ln(ln v + s); nu = 2.

    An optional upper cap on s (one extra log term, nu += 1) makes the set
    bounded in s so the analytic center exists.
    """

    def __init__(self, s_cap=None):
        terms = [("log_epi", 0, 1)]
        if s_cap is not None:
            terms.append(("coord_hi", 1, float(s_cap)))
        super().__init__(TermTable.build(2, terms))
        self.s_cap = None if s_cap is None else float(s_cap)

    def descriptor(self):
        d = {"kind": "log_epigraph"}
        if self.s_cap is not None:
            d["s_cap"] = self.s_cap
        return d


class EntropyEpigraphBarrier(TermBarrier):
    """Barrier for {(v, s): v > 0, v ln v <= s}: -ln v - ln(s - v ln v); nu = 2."""

    def __init__(self, s_cap=None):
        terms = [("ent_epi", 0, 1)]
        if s_cap is not None:
            terms.append(("coord_hi", 1, float(s_cap)))
        super().__init__(TermTable.build(2, terms))
        self.s_cap = None if s_cap is None else float(s_cap)

    def descriptor(self):
        d = {"kind": "entropy_epigraph"}
        if self.s_cap is not None:
            d["s_cap"] = self.s_cap
        return d


class QuadraticEpigraphBarrier(TermBarrier):
    """Barrier -ln(phi(x) - s) for concave quadratic phi(x) = x'Qx + q'x + r.

    Variables are (x, s) with s last; nu = 1 (+1 when a floor s >= s_floor
    is included).
    """

    def __init__(self, Q, q, r, s_floor=None):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        q = np.atleast_1d(np.asarray(q, dtype=float))
        k = q.shape[0]
        if Q.shape != (k, k):
            raise ValueError("Q and q dimensions disagree")
        Q = 0.5 * (Q + Q.T)
        if np.max(np.linalg.eigvalsh(Q)) > 1e-10 * (1.0 + np.abs(Q).max()):
            raise ValueError("phi must be concave (Q negative semidefinite)")
        terms = [("quad_epi", 0, k, k, Q, q, float(r))]
        if s_floor is not None:
            terms.append(("coord_lo", k, float(s_floor)))
        super().__init__(TermTable.build(k + 1, terms))
        self.Q = Q
        self.q = q
        self.r = float(r)
        self.s_floor = None if s_floor is None else float(s_floor)

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        return float(x @ self.Q @ x + self.q @ x + self.r)

    def descriptor(self):
        d = {"kind": "quad_epigraph", "Q": self.Q.ravel().tolist(),
             "q": self.q.tolist(), "r": self.r}
        if self.s_floor is not None:
            d["s_floor"] = self.s_floor
        return d


class ProductBarrier(TermBarrier):
    """Sum of factor barriers over index ranges of one block.

    With the default consecutive ranges the factors are disjoint and the
    Hessian is exactly block diagonal.  Explicit (start, stop) ranges may
    overlap, e.g. a halfspace cap over coordinates that also carry an
    orthant barrier.
    """

    def __init__(self, factors, ranges=None):
        factors = list(factors)
        if ranges is None:
            ranges = []
            off = 0
            for f in factors:
                ranges.append((off, off + f.dim))
                off += f.dim
            dim = off
        else:
            ranges = [tuple(r) for r in ranges]
            dim = max(stop for _, stop in ranges)
        for f, (start, stop) in zip(factors, ranges):
            if f.table is None:
                raise ValueError("product factors must be term-table barriers")
            if stop - start != f.dim:
                raise ValueError("factor range does not match its dimension")
        table = TermTable.concat(dim, [(f.table, start)
                                       for f, (start, _) in zip(factors, ranges)])
        super().__init__(table)
        self.factors = factors
        self.ranges = ranges

    def descriptor(self):
        return {"kind": "product",
                "factors": [{"start": start, "stop": stop, **f.descriptor()}
                            for f, (start, stop) in zip(self.factors, self.ranges)]}


class ReducedBarrier(Barrier):
    """F(z) = F_base(x_part + Z z): affine restriction onto a null space.

    Self-concordant with the same nu as the base barrier.
    """

    def __init__(self, base: Barrier, Z, x_part):
        self.base = base
        self.Z = np.asarray(Z, dtype=float)
        self.x_part = np.asarray(x_part, dtype=float)
        self.dim = self.Z.shape[1]
        self.nu = base.nu
        self.table = None  # kernels consume (base.table, Z, x_part) directly

    def to_full(self, z):
        return self.x_part + self.Z @ np.asarray(z, dtype=float)

    def contains(self, z):
        return self.base.contains(self.to_full(z))

    def value(self, z):
        return self.base.value(self.to_full(z))

    def grad(self, z):
        return self.Z.T @ self.base.grad(self.to_full(z))

    def hess(self, z):
        return self.Z.T @ self.base.hess(self.to_full(z)) @ self.Z


@dataclass
class AnalyticCenter:
    xc: np.ndarray
    grad_norm: float
    iterations: int


class CenteringError(RuntimeError):
    pass


def analytic_center(barrier: Barrier, x0, tol=1e-10, max_iter=500) -> AnalyticCenter:
    """Minimize the barrier by damped Newton until ||grad||*_x <= tol.

    The damped step (1 + lam)^{-1} keeps the iterate inside the Dikin
    ellipsoid; the trial point is halved back into the domain if roundoff
    ever lands it outside.
    """
    x = np.array(x0, dtype=float)
    if not barrier.contains(x):
        raise CenteringError("starting point is not strictly interior")
    lam = np.inf
    for it in range(max_iter):
        g = barrier.grad(x)
        H = barrier.hess(x)
        try:
            L = np.linalg.cholesky(H)
        except np.linalg.LinAlgError as exc:
            raise CenteringError(f"Hessian factorization failed: {exc}") from exc
        w = solve_triangular(L, g, lower=True, check_finite=False)
        lam = float(np.linalg.norm(w))
        if lam <= tol:
            return AnalyticCenter(x, lam, it)
        dx = -solve_triangular(L.T, w, lower=False, check_finite=False)
        alpha = 1.0 / (1.0 + lam)
        for _ in range(64):
            xt = x + alpha * dx
            if barrier.contains(xt):
                break
            alpha *= 0.5
        else:
            raise CenteringError("could not keep the iterate interior")
        x = xt
    raise CenteringError(
        f"no convergence within {max_iter} iterations (lambda={lam:.3e}); "
        "the barrier may be unbounded below (no analytic center)")


def barrier_from_descriptor(desc: dict) -> Barrier:
    kind = desc["kind"]
    if kind == "orthant":
        return OrthantBarrier(int(desc["n"]))
    if kind == "interval":
        return IntervalBarrier(desc["lower"], desc["upper"])
    if kind == "halfspace":
        return HalfspaceBarrier(desc["a"], desc["d"])
    if kind == "log_epigraph":
        return LogCongestionEpigraphBarrier(desc.get("s_cap"))
    if kind == "entropy_epigraph":
        return EntropyEpigraphBarrier(desc.get("s_cap"))
    if kind == "quad_epigraph":
        q = np.asarray(desc["q"], dtype=float)
        k = q.shape[0]
        Q = np.asarray(desc["Q"], dtype=float).reshape(k, k)
        return QuadraticEpigraphBarrier(Q, q, desc["r"], desc.get("s_floor"))
    if kind == "product":
        factors = []
        ranges = []
        for fd in desc["factors"]:
            fd = dict(fd)
            ranges.append((int(fd.pop("start")), int(fd.pop("stop"))))
            factors.append(barrier_from_descriptor(fd))
        return ProductBarrier(factors, ranges)
    raise ValueError(f"unknown barrier kind {kind!r}")
