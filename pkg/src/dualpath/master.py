"""Master-level dual assembly.

Collects block solutions into the smoothed dual value, the gradient and
Hessian surrogates, the Newton decrement and the feasibility gap, and
provides the Newton direction solve plus diagnostic gap brackets.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from . import subproblem
from .scfun import dual_local_norm, local_norm, omega, omega_star

__all__ = [
    "DualIterate", "BlockFailure", "eval_dual", "newton_direction",
    "GapBrackets", "exact_dual_bounds", "choose_t_bar",
]


class BlockFailure(RuntimeError):
    def __init__(self, index, cause):
        super().__init__(f"block {index} failed: {cause}")
        self.index = index
        self.cause = cause


@dataclass
class DualIterate:
    """Smoothed dual surrogate quantities at (y, t) from inexact block
    solutions."""

    y: np.ndarray
    t: float
    d_val: float                      # c^T xb + y^T (A xb - b) - t [F(xb) - F(xc)]
    grad: np.ndarray                  # A xb - b
    hess: np.ndarray                  # (1/t) sum_i A_i Hz_i^{-1} A_i^T
    hess_chol: np.ndarray
    lambda_bar: float                 # t^{-1/2} (grad^T hess^{-1} grad)^{1/2}
    feas_gap: float                   # ||A xb - b||*_y  (= t * lambda_bar)
    block_results: list = field(default_factory=list, repr=False)
    inner_iters: int = 0

    @property
    def delta_cert_total(self):
        return float(np.sqrt(sum(r.delta_cert ** 2 for r in self.block_results)))

    @property
    def x_blocks(self):
        return [r.x_bar for r in self.block_results]


def _default_eps_total(problem, delta_bar, t, use_center_norm):
    if use_center_norm:
        return subproblem.primal_accuracy(delta_bar, t, problem.nu_total)
    return subproblem.local_accuracy(delta_bar, t)


def eval_dual(problem, y, t, delta_bar=0.0, eps_total=None, warm=None,
              use_center_norm=False, weights=None, threads=1):
    """Solve every block at (y, t) and assemble the dual surrogate.

    With delta_bar = 0 (exact mode) each block is solved down to a
    machine-level residual floor.  Blocks run on a worker pool when
    threads > 1; results are reduced in block-index order either way, so
    the assembled quantities do not depend on the pool size.
    """
    problem.prepare()
    y = np.asarray(y, dtype=float)
    t = float(t)
    M = problem.M
    if eps_total is not None:
        eps_blocks = subproblem.split_tolerance(eps_total, M, weights)
    elif delta_bar > 0.0:
        eps_blocks = subproblem.split_tolerance(
            _default_eps_total(problem, delta_bar, t, use_center_norm), M, weights)
    else:
        eps_blocks = None  # per-block exact floor

    warms = warm if warm is not None else [None] * M

    def solve_one(i):
        blk = problem.blocks[i]
        eps_i = eps_blocks[i] if eps_blocks is not None else subproblem.exact_floor(
            t, blk.c + blk.A.T @ y)
        try:
            return subproblem.solve_block(blk, y, t, eps_i, warm=warms[i],
                                          use_center_norm=use_center_norm)
        except subproblem.SubproblemError as exc:
            raise BlockFailure(i, exc) from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(solve_one, range(M)))
    else:
        results = [solve_one(i) for i in range(M)]

    d_val = -float(y @ problem.b)
    grad = -problem.b.copy()
    hess = np.zeros((problem.m, problem.m))
    inner = 0
    for blk, res in zip(problem.blocks, results):
        ws = blk.workspace
        d_val += float(blk.c @ res.x_bar) + float(y @ (blk.A @ res.x_bar))
        d_val -= t * (res.barrier_value - ws.center_val)
        grad += blk.A @ res.x_bar
        Hz = ws.barrier_red.hess(res.z_bar)
        Lz = np.linalg.cholesky(Hz)
        V = scipy.linalg.solve_triangular(Lz, ws.A_red.T, lower=True,
                                          check_finite=False)
        hess += V.T @ V
        inner += res.newton_iters
    hess /= t
    try:
        hess_chol = np.linalg.cholesky(hess)
    except np.linalg.LinAlgError as exc:
        raise BlockFailure(-1, f"dual Hessian not positive definite: {exc}")
    w = scipy.linalg.solve_triangular(hess_chol, grad, lower=True,
                                      check_finite=False)
    q = float(w @ w)  # grad^T hess^{-1} grad
    lambda_bar = float(np.sqrt(q / t))
    feas_gap = float(np.sqrt(t * q))
    return DualIterate(y=y, t=t, d_val=d_val, grad=grad, hess=hess,
                       hess_chol=hess_chol, lambda_bar=lambda_bar,
                       feas_gap=feas_gap, block_results=results,
                       inner_iters=inner)


def newton_direction(it: DualIterate, method="cholesky", cg_rtol=1e-12):
    """Solve hess * dy = -grad.

    Dense Cholesky by default; optional Jacobi-preconditioned conjugate
    gradients (residual <= cg_rtol * ||grad||).
    """
    if method == "cholesky":
        w = scipy.linalg.solve_triangular(it.hess_chol, -it.grad, lower=True,
                                          check_finite=False)
        return scipy.linalg.solve_triangular(it.hess_chol.T, w, lower=False,
                                             check_finite=False)
    if method == "cg":
        d = np.diag(it.hess).copy()
        M = scipy.sparse.linalg.LinearOperator(
            it.hess.shape, matvec=lambda v: v / d)
        dy, info = scipy.sparse.linalg.cg(it.hess, -it.grad, M=M,
                                          rtol=cg_rtol, atol=0.0)
        if info != 0:
            raise RuntimeError(f"conjugate gradients did not converge (info={info})")
        return dy
    raise ValueError(f"unknown method {method!r}")


@dataclass
class GapBrackets:
    """Bracket on d0(y) - d(y, t) from near-exact block solves."""

    lower: float
    upper_local: float | None     # valid when every block's lambda_F < 1
    upper_global: float | None    # needs center-metric constants K_i
    lambda_F: np.ndarray          # per-block ||grad F(x*)||*_{x*}
    center_dist: np.ndarray       # per-block ||x* - xc||_{xc}


def exact_dual_bounds(problem, y, t, y_samples=None):
    """Evaluate the local (and, with y samples spanning Y, global) bounds
    on the smoothing gap d0(y) - d(y, t).  Diagnostic; solves blocks to
    the exact floor."""
    problem.prepare()
    it = eval_dual(problem, y, t, delta_bar=0.0)
    lam_F = []
    dist = []
    lower = 0.0
    upper_local = 0.0
    local_ok = True
    for blk, res in zip(problem.blocks, it.block_results):
        ws = blk.workspace
        if not ws.has_center:
            raise ValueError("gap bounds require analytic centers for all blocks")
        Hc = ws.center_chol @ ws.center_chol.T
        dz = res.z_bar - ws.center_z
        dist_i = local_norm(Hc, dz)
        g = ws.barrier_red.grad(res.z_bar)
        H = ws.barrier_red.hess(res.z_bar)
        lam_i = dual_local_norm(H, g)
        lam_F.append(lam_i)
        dist.append(dist_i)
        lower += omega(dist_i)
        if lam_i < 1.0:
            upper_local += omega_star(lam_i) + blk.nu
        else:
            local_ok = False
    lower *= t
    upper_local = t * upper_local if local_ok else None
    upper_global = None
    if y_samples is not None:
        K = estimate_center_constants(problem, y_samples)
        total = 0.0
        for blk, K_i in zip(problem.blocks, K):
            total += zeta_bar(K_i, blk.nu, t)
        upper_global = t * total
    return GapBrackets(lower=lower, upper_local=upper_local,
                       upper_global=upper_global,
                       lambda_F=np.asarray(lam_F), center_dist=np.asarray(dist))


def zeta_bar(tau, a, t):
    """a (1 + max(0, ln(tau / (a t))))."""
    return a * (1.0 + max(0.0, np.log(tau / (a * t))))


def estimate_center_constants(problem, y_samples):
    """K_i = (nu_i + 2 sqrt(nu_i)) max_y ||c_i + A_i^T y||*_{xc_i} over the
    supplied price samples (the bounded dual region is caller knowledge)."""
    problem.prepare()
    K = []
    for blk in problem.blocks:
        ws = blk.workspace
        if not ws.has_center:
            raise ValueError("center constants require an analytic center")
        best = 0.0
        for y in y_samples:
            g = ws.c_red + ws.A_red.T @ np.asarray(y, dtype=float)
            w = scipy.linalg.solve_triangular(ws.center_chol, g, lower=True,
                                              check_finite=False)
            best = max(best, float(np.linalg.norm(w)))
        K.append((blk.nu + 2.0 * np.sqrt(blk.nu)) * best)
    return np.asarray(K)


def choose_t_bar(K, nu, eps_d, kappa):
    """Barrier parameter guaranteeing an eps_d-accurate smoothing:

    t_bar = min_i { (K_i/nu_i) kappa^(1/kappa),
                    eps_d^(1/(1-kappa)) (sum_i [nu_i + (K_i/nu_i)^kappa])^(-1/(1-kappa)) }.
    """
    K = np.atleast_1d(np.asarray(K, dtype=float))
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    if np.any(K <= 0.0) or np.any(nu <= 0.0) or eps_d <= 0.0:
        raise ValueError("K, nu and eps_d must be positive")
    if not 0.0 < kappa < 1.0:
        raise ValueError("kappa must lie in (0, 1)")
    ratios = K / nu
    head = np.min(ratios) * kappa ** (1.0 / kappa)
    s = float(np.sum(nu + ratios ** kappa))
    tail = eps_d ** (1.0 / (1.0 - kappa)) * s ** (-1.0 / (1.0 - kappa))
    return float(min(head, tail))
