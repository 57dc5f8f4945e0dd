"""Per-block primal subproblem solver.

For prices y and barrier parameter t > 0 each block solves

    max  (c_i + A_i^T y)^T x - t [F_i(x) - F_i(x_i^c)]   over int(X_i),

equivalently damped/full Newton on psi(x) = F_i(x) - (c_i + A_i^T y)^T x / t
in null-space-reduced coordinates.  Termination certifies a bound on the
local-norm distance to the exact minimizer.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import impl as _impl
from ._kernels import py_backend as _py

__all__ = [
    "SubproblemResult", "SubproblemError",
    "primal_accuracy", "local_accuracy", "split_tolerance",
    "certificate_from_center_residual", "certificate_from_local_residual",
    "exact_floor", "solve_block", "BETA_SUB",
]

BETA_SUB = (3.0 - np.sqrt(5.0)) / 2.0  # full-step threshold of the inner Newton
MAX_INNER_ITER = 200

_LOCAL_CERT_MAX = 3.0 - 2.0 * np.sqrt(2.0)  # largest invertible residual ratio


class SubproblemError(RuntimeError):
    def __init__(self, msg, status=None):
        super().__init__(msg)
        self.status = status


@dataclass
class SubproblemResult:
    """Approximate block solution with a verifiable accuracy certificate."""

    x_bar: np.ndarray          # full block coordinates
    z_bar: np.ndarray          # reduced coordinates (== x_bar without equality)
    residual_c: float | None   # dual-norm residual at the analytic center
    residual_local: float      # dual-norm residual at x_bar itself
    newton_iters: int
    delta_cert: float          # certified bound on ||x_bar - x*||_{x*}
    psi_lambda: float          # Newton decrement of psi at x_bar
    barrier_value: float       # F(x_bar) in reduced coordinates
    nu: float


def primal_accuracy(delta_bar, t, nu):
    """Residual threshold in the center metric that certifies accuracy
    delta_bar: eps_p = delta t / ((nu + 2 sqrt(nu)) (1 + delta))."""
    delta_bar = float(delta_bar)
    t = float(t)
    if t <= 0.0:
        raise ValueError("t must be positive")
    if not 0.0 <= delta_bar < 1.0:
        raise ValueError("delta_bar must lie in [0, 1)")
    kappa = nu + 2.0 * np.sqrt(nu)
    return delta_bar * t / (kappa * (1.0 + delta_bar))


def local_accuracy(delta_bar, t):
    """Residual threshold in the local metric at the iterate itself:
    eps_hat = delta (1 - delta) t / (1 + delta)."""
    delta_bar = float(delta_bar)
    t = float(t)
    if t <= 0.0:
        raise ValueError("t must be positive")
    if not 0.0 <= delta_bar < 1.0:
        raise ValueError("delta_bar must lie in [0, 1)")
    return delta_bar * (1.0 - delta_bar) * t / (1.0 + delta_bar)


def split_tolerance(eps_total, n_blocks, weights=None):
    """Distribute a total residual budget over blocks (uniform by default)."""
    if eps_total < 0.0:
        raise ValueError("eps_total must be nonnegative")
    if weights is None:
        return np.full(n_blocks, eps_total / n_blocks)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n_blocks,):
        raise ValueError("weights must have one entry per block")
    if np.any(w < 0.0):
        raise ValueError("weights must be nonnegative")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must sum to 1")
    return eps_total * w


def certificate_from_center_residual(e_c, t, nu):
    """||x_bar - x*||_{x*} <= k E^c / (t - k E^c) with k = nu + 2 sqrt(nu),
    valid while the denominator is positive."""
    kappa = nu + 2.0 * np.sqrt(nu)
    a = kappa * e_c
    if t <= a:
        return np.inf
    return a / (t - a)


def certificate_from_local_residual(e_loc, t):
    """Invert rho = delta (1 - delta) / (1 + delta) on its increasing branch.

    Gives the certified delta for a residual measured in the local metric
    at the iterate; valid for rho < 3 - 2 sqrt(2).
    """
    rho = e_loc / t
    if rho >= _LOCAL_CERT_MAX:
        return np.inf
    disc = (1.0 - rho) ** 2 - 4.0 * rho
    return 0.5 * ((1.0 - rho) - np.sqrt(max(disc, 0.0)))


def exact_floor(t, glin):
    """Practical residual floor replacing an exact (zero-residual) solve."""
    scale = 1.0 + abs(t) + float(np.linalg.norm(glin))
    return max(1e-12, 64.0 * np.finfo(float).eps * scale)


def solve_block(block, y, t, eps, warm=None, use_center_norm=False,
                beta_sub=BETA_SUB, max_iter=MAX_INNER_ITER, trace=None):
    """Solve one block subproblem at (y, t) to residual target eps.

    eps is compared against the local-metric residual by default, or the
    center-metric residual when `use_center_norm` (requires the block's
    analytic center).  `warm` restarts from a previous reduced solution.
    """
    if t <= 0.0:
        raise ValueError("t must be positive")
    ws = block.workspace
    base = block.barrier
    if base.table is None and ws.Z is None:
        raise SubproblemError("block barrier has no term table; only shipped "
                              "barrier kinds are supported by the solver")
    table = base.table if ws.Z is None else ws.barrier_red.base.table
    if table is None:
        raise SubproblemError("reduced block's base barrier has no term table")
    if use_center_norm and not ws.has_center:
        raise SubproblemError("center-metric stopping requires an analytic "
                              "center; this block has none")
    glin = block.c + block.A.T @ np.asarray(y, dtype=float)
    z0 = ws.z_start if warm is None else np.asarray(warm, dtype=float)
    Lc = ws.center_chol if ws.has_center else None
    res = _impl.newton_solve(table, glin, t, ws.Z, ws.x_part, z0, float(eps),
                             bool(use_center_norm), Lc, float(beta_sub),
                             int(max_iter), trace)
    if res.status == _py.NOT_INTERIOR:
        raise SubproblemError("warm start is not strictly interior", res.status)
    if res.status == _py.MAXITER:
        raise SubproblemError(
            f"inner Newton did not reach eps={eps:.3e} within {max_iter} "
            f"iterations (lambda={res.lam:.3e}); the subproblem may be "
            "unbounded for these prices", res.status)
    if res.status == _py.LINESEARCH_FAIL:
        raise SubproblemError("interior backtracking failed (bug-class error: "
                              "the damped step should stay feasible)", res.status)
    if res.status == _py.NUMERICAL:
        raise SubproblemError("block Hessian factorization failed", res.status)
    e_c = res.e_c if ws.has_center else None
    cert = certificate_from_local_residual(res.e_loc, t)
    if e_c is not None and e_c >= 0:
        cert = min(cert, certificate_from_center_residual(e_c, t, block.nu))
    return SubproblemResult(
        x_bar=block.to_full(res.z),
        z_bar=res.z,
        residual_c=e_c,
        residual_local=res.e_loc,
        newton_iters=res.iters,
        delta_cert=cert,
        psi_lambda=res.lam,
        barrier_value=res.fval,
        nu=block.nu,
    )
