"""Two-phase path-following on the barrier-smoothed dual.

Phase 1 runs damped Newton-type steps at fixed t0 until the inexact
Newton decrement enters the beta-neighborhood; Phase 2 shrinks t
geometrically, one full Newton-type step per value, until
t <= eps_d / omega*(vartheta).  Setting the subproblem accuracy to zero
(exact mode) reproduces the classical exact variant; the parameter
calculus below degenerates to it continuously.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import master, subproblem
from .scfun import omega, omega_star

__all__ = [
    "DELTA_BAR_MAX", "PathParams", "IterRow", "SolveReport",
    "ParameterError", "NumericalFailure",
    "beta_roots", "cubic_coefficients", "cubic_discriminant", "delta_bar_max",
    "derive_params", "phase1", "phase2", "solve", "solve_exact",
    "iteration_bounds",
]

DELTA_BAR_MAX = 0.0432863855
BETA_STAR_EXACT = (3.0 - np.sqrt(5.0)) / 2.0


class ParameterError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


def cubic_coefficients(delta_bar):
    """Coefficients (c0, c1, c2, c3) of the centering cubic whose two
    small roots bracket the admissible neighborhood radius beta."""
    d = float(delta_bar)
    p = d * ((1.0 - d) ** -2 + 2.0 / (1.0 - d))
    c0 = -2.0 * d * (1.0 - d) ** 2
    c1 = (1.0 - d) * ((1.0 + d) ** 2 - p)
    c2 = p - 3.0 - 2.0 * d * d + 2.0 * d
    c3 = 1.0 - d
    return c0, c1, c2, c3


def cubic_discriminant(delta_bar):
    c0, c1, c2, c3 = cubic_coefficients(delta_bar)
    return (18.0 * c0 * c1 * c2 * c3 - 4.0 * c2 ** 3 * c0 + c2 ** 2 * c1 ** 2
            - 4.0 * c3 * c1 ** 3 - 27.0 * c3 ** 2 * c0 ** 2)


def beta_roots(delta_bar):
    """Three nonnegative roots (beta_lo, beta_hi, beta_3) of the centering
    cubic, via companion-matrix eigenvalues.  Requires the discriminant to
    be nonnegative, i.e. delta_bar <= DELTA_BAR_MAX."""
    d = float(delta_bar)
    if d < 0.0:
        raise ParameterError("delta_bar must be nonnegative")
    if cubic_discriminant(d) < -1e-12:
        raise ParameterError(
            f"delta_bar={d} exceeds the largest admissible subproblem accuracy "
            f"{DELTA_BAR_MAX} (negative cubic discriminant: complex roots)")
    c0, c1, c2, c3 = cubic_coefficients(d)
    roots = np.roots([c3, c2, c1, c0])  # companion-matrix eigenvalues
    roots = np.sort(np.real(roots))
    return float(roots[0]), float(roots[1]), float(roots[2])


def delta_bar_max(tol=1e-9):
    """Locate the discriminant sign change by bisection."""
    lo, hi = 0.0, 0.2
    while cubic_discriminant(hi) > 0.0:
        hi *= 1.5
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if cubic_discriminant(mid) >= 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class PathParams:
    """All derived constants of the path-following iteration."""

    delta_bar: float
    beta_lo: float
    beta_hi: float
    beta: float
    p: float
    q: float
    theta: float
    Delta_bar: float
    Delta_bar_star: float
    sigma: float
    gamma: float
    vartheta: float
    delta_hat_star: float
    delta_hat_bar: float
    eta_lower: float
    nu: float
    mode: str  # "inexact" | "exact"

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _eta_lower(beta, delta_hat_bar):
    disc = (1.0 - delta_hat_bar) ** 2 * beta ** 2 - 4.0 * delta_hat_bar * beta
    if disc < 0.0:
        raise ParameterError("delta_hat_bar too large for the damped step size")
    root = np.sqrt(disc)
    num = beta * ((1.0 - delta_hat_bar) * beta - 2.0 * delta_hat_bar + root)
    den = (1.0 + delta_hat_bar) * beta + root
    return num / den


def derive_params(delta_bar, beta=None, nu=2.0, mode="inexact",
                  delta_hat_frac=0.5) -> PathParams:
    """Derive every algorithm constant from (delta_bar, beta, nu).

    In exact mode delta_bar is forced to 0, for which the calculus
    below degenerates to the classical constants (beta_hi = (3-sqrt5)/2,
    Delta* = sqrt(beta)(1-sqrt(beta)-beta)/(1+2 sqrt(beta))).
    """
    if mode not in ("inexact", "exact"):
        raise ParameterError(f"unknown mode {mode!r}")
    if mode == "exact":
        delta_bar = 0.0
    d = float(delta_bar)
    if nu <= 0.0:
        raise ParameterError("nu must be positive")
    beta_lo, beta_hi, _ = beta_roots(d)
    if beta is None:
        beta = beta_hi / 4.0
    beta = float(beta)
    if mode == "exact":
        if not 0.0 < beta < BETA_STAR_EXACT:
            raise ParameterError(
                f"exact mode requires 0 < beta < (3-sqrt5)/2 = {BETA_STAR_EXACT:.6f}")
    elif not beta_lo < beta < beta_hi:
        raise ParameterError(
            f"beta={beta:.6f} outside the admissible interval "
            f"({beta_lo:.6f}, {beta_hi:.6f}) for delta_bar={d}")
    p = d * ((1.0 - d) ** -2 + 2.0 / (1.0 - d))
    q = (1.0 - d) * beta - 2.0 * d
    theta = 0.5 * (np.sqrt(p * p + 4.0 * q) - p)
    Delta_bar = (theta * (1.0 - d - beta) - beta) / (1.0 + 2.0 * theta)
    if Delta_bar <= 0.0:
        raise ParameterError("derived step radius is nonpositive; beta is too "
                             "close to the interval ends")
    if d > Delta_bar / (1.0 + Delta_bar):
        raise ParameterError("delta_bar is incompatible with the derived "
                             "step radius (delta_bar <= Delta/(1+Delta) required)")
    u = (1.0 - d) * Delta_bar - d
    Delta_bar_star = 0.5 * (u + 1.0 - np.sqrt((u - 1.0) ** 2 + 4.0 * d))
    sqrt_nu = np.sqrt(nu)
    sigma = Delta_bar_star / (sqrt_nu + (sqrt_nu + 1.0) * Delta_bar_star)
    kappa = nu + 2.0 * sqrt_nu
    gamma = d / (kappa * (1.0 + d))
    vartheta = (beta + d) / (1.0 - d)
    delta_hat_star = beta / (2.0 + beta + 2.0 * np.sqrt(1.0 + beta))
    delta_hat_bar = 0.0 if mode == "exact" else delta_hat_frac * delta_hat_star
    eta_lower = beta if delta_hat_bar == 0.0 else _eta_lower(beta, delta_hat_bar)
    return PathParams(delta_bar=d, beta_lo=beta_lo, beta_hi=beta_hi, beta=beta,
                      p=p, q=q, theta=theta, Delta_bar=Delta_bar,
                      Delta_bar_star=Delta_bar_star, sigma=sigma, gamma=gamma,
                      vartheta=vartheta, delta_hat_star=delta_hat_star,
                      delta_hat_bar=delta_hat_bar, eta_lower=eta_lower,
                      nu=float(nu), mode=mode)


@dataclass
class IterRow:
    phase: int
    k: int
    t: float
    lambda_bar: float
    d_delta: float
    feas_gap: float
    inner_iters: int
    elapsed_ms: float


@dataclass
class SolveReport:
    status: str                      # converged | phase1_cap | phase2_cap | block_failure
    y: np.ndarray
    x_blocks: list
    t_final: float
    d_final: float
    feas_final: float
    lambda_final: float
    phase1_iters: int
    phase2_iters: int
    k_max: int
    params: PathParams
    rows: list = field(default_factory=list)
    guard_events: int = 0

    @property
    def converged(self):
        return self.status == "converged"


def damped_step_size(lam, delta_hat_bar):
    """Step size of the inexact damped Newton iteration; 1/(1+lam) when
    the subproblems are exact."""
    if delta_hat_bar == 0.0:
        return 1.0 / (1.0 + lam)
    disc = (1.0 - delta_hat_bar) ** 2 * lam ** 2 - 4.0 * delta_hat_bar * lam
    if disc < 0.0:
        raise NumericalFailure(
            f"damped step size undefined at lambda={lam:.3e} with "
            f"delta_hat_bar={delta_hat_bar:.3e} (decrement fell between the "
            "target neighborhood and the step-size validity region)")
    return ((1.0 - delta_hat_bar) * lam - 2.0 * delta_hat_bar + np.sqrt(disc)) \
        / (2.0 * lam * (1.0 + lam))


def _phase1_eps(params: PathParams, t0):
    """Subproblem tolerance of the start-up phase (note the extra 1/2)."""
    d = params.delta_hat_bar
    if d == 0.0:
        return None  # exact floor per block
    kappa = params.nu + 2.0 * np.sqrt(params.nu)
    return t0 * d / (2.0 * kappa * (1.0 + d))


def _phase1_eps_local(params: PathParams, t0):
    d = params.delta_hat_bar
    if d == 0.0:
        return None
    return 0.5 * subproblem.local_accuracy(d, t0)


def phase1(problem, params: PathParams, t0, y00=None, use_center_norm=False,
           threads=1, max_iter=500, log=None, t_start=None):
    """Damped Newton-type iterations at fixed t0 until lambda_bar <= beta.

    Returns (y0, final DualIterate, iterations); the final iterate is
    reused to warm-start the path-following phase.
    """
    problem.prepare()
    t0 = float(t0)
    if t0 <= 0.0:
        raise ParameterError("t0 must be positive")
    y = np.zeros(problem.m) if y00 is None else np.asarray(y00, dtype=float).copy()
    if use_center_norm:
        eps = _phase1_eps(params, t0)
    else:
        eps = _phase1_eps_local(params, t0)
    start = time.perf_counter() if t_start is None else t_start
    it = master.eval_dual(problem, y, t0, delta_bar=params.delta_hat_bar,
                          eps_total=eps, use_center_norm=use_center_norm,
                          threads=threads)
    j = 0
    if log is not None:
        log(IterRow(1, j, t0, it.lambda_bar, it.d_val, it.feas_gap,
                    it.inner_iters, 1e3 * (time.perf_counter() - start)))
    while it.lambda_bar > params.beta:
        if j >= max_iter:
            return y, it, j, False
        alpha = damped_step_size(it.lambda_bar, params.delta_hat_bar)
        y = y + alpha * master.newton_direction(it)
        warm = [r.z_bar for r in it.block_results]
        it = master.eval_dual(problem, y, t0, delta_bar=params.delta_hat_bar,
                              eps_total=eps, use_center_norm=use_center_norm,
                              warm=warm, threads=threads)
        j += 1
        if log is not None:
            log(IterRow(1, j, t0, it.lambda_bar, it.d_val, it.feas_gap,
                        it.inner_iters, 1e3 * (time.perf_counter() - start)))
    return y, it, j, True


def _phase2_eps(problem, params: PathParams, t_k, t_next, use_center_norm):
    """Subproblem tolerance for the solve at (y_k, t_{k+1}).

    The center-metric budget gamma * t_k follows the printed update rule;
    the default local-metric rule is evaluated at the t actually being
    solved, which is the conservative reading.
    """
    if params.delta_bar == 0.0:
        return None
    if use_center_norm:
        return params.gamma * t_k
    return subproblem.local_accuracy(params.delta_bar, t_next)


def _adaptive_t_next(problem, params: PathParams, t, it):
    """Optional adaptive decrease using the measured ||grad F(xb)||*_{xb}
    instead of its sqrt(nu) bound."""
    d = params.delta_bar
    total = 0.0
    for blk, res in zip(problem.blocks, it.block_results):
        ws = blk.workspace
        g = ws.barrier_red.grad(res.z_bar)
        H = ws.barrier_red.hess(res.z_bar)
        L = np.linalg.cholesky(H)
        w = np.linalg.solve(L, g)
        total += float(w @ w)
    R = (d / (1.0 - d) + np.sqrt(total)) / (1.0 - d)
    dt = params.Delta_bar_star * t / (R + (R + 1.0) * params.Delta_bar_star)
    return t - dt


def phase2(problem, params: PathParams, t0, y0, eps_d, it0=None,
           use_center_norm=False, threads=1, adaptive=False, max_iter=None,
           log=None, guard_tol=1e-6, t_start=None):
    """Path-following loop: geometric t decrease with one full Newton-type
    step per value."""
    problem.prepare()
    eps_d = float(eps_d)
    if eps_d <= 0.0:
        raise ParameterError("eps_d must be positive")
    k_max, _ = iteration_bounds(params, t0, eps_d)
    if max_iter is None:
        max_iter = 10 * k_max
    stop_t = eps_d / omega_star(params.vartheta)
    start = time.perf_counter() if t_start is None else t_start
    y = np.asarray(y0, dtype=float).copy()
    t = float(t0)
    if it0 is None:
        eps0 = _phase2_eps(problem, params, t, t, use_center_norm)
        it0 = master.eval_dual(problem, y, t, delta_bar=params.delta_bar,
                               eps_total=eps0, use_center_norm=use_center_norm,
                               threads=threads)
    it = it0
    rows = []

    def emit(row):
        rows.append(row)
        if log is not None:
            log(row)

    emit(IterRow(2, 0, t, it.lambda_bar, it.d_val, it.feas_gap,
                 it.inner_iters, 1e3 * (time.perf_counter() - start)))
    k = 0
    guard_events = 0
    status = "phase2_cap"
    while True:
        if t <= stop_t:
            status = "converged"
            break
        if k >= max_iter:
            status = "phase2_cap"
            break
        t_next = _adaptive_t_next(problem, params, t, it) if adaptive \
            else (1.0 - params.sigma) * t
        eps_k = _phase2_eps(problem, params, t, t_next, use_center_norm)
        warm = [r.z_bar for r in it.block_results]
        y_prev = y
        step_it = master.eval_dual(problem, y_prev, t_next,
                                   delta_bar=params.delta_bar, eps_total=eps_k,
                                   use_center_norm=use_center_norm, warm=warm,
                                   threads=threads)
        y = y_prev + master.newton_direction(step_it)
        it = master.eval_dual(problem, y, t_next, delta_bar=params.delta_bar,
                              eps_total=eps_k, use_center_norm=use_center_norm,
                              warm=[r.z_bar for r in step_it.block_results],
                              threads=threads)
        if it.lambda_bar > params.beta + guard_tol:
            # loose block certificate can break centrality in floating point:
            # redo the step once from tighter block solves
            guard_events += 1
            tighter = None if eps_k is None else 0.1 * eps_k
            step_it = master.eval_dual(problem, y_prev, t_next,
                                       delta_bar=params.delta_bar,
                                       eps_total=tighter,
                                       use_center_norm=use_center_norm,
                                       warm=warm, threads=threads)
            y = y_prev + master.newton_direction(step_it)
            it = master.eval_dual(problem, y, t_next,
                                  delta_bar=params.delta_bar, eps_total=tighter,
                                  use_center_norm=use_center_norm,
                                  warm=[r.z_bar for r in step_it.block_results],
                                  threads=threads)
            if it.lambda_bar > 1.1 * params.beta:
                raise NumericalFailure(
                    f"centrality lost at k={k + 1}: lambda_bar="
                    f"{it.lambda_bar:.6f} > 1.1 beta after a tightened retry")
        t = t_next
        k += 1
        emit(IterRow(2, k, t, it.lambda_bar, it.d_val, it.feas_gap,
                     it.inner_iters, 1e3 * (time.perf_counter() - start)))
    return SolveReport(status=status, y=y, x_blocks=it.x_blocks, t_final=t,
                       d_final=it.d_val, feas_final=it.feas_gap,
                       lambda_final=it.lambda_bar, phase1_iters=0,
                       phase2_iters=k, k_max=k_max, params=params, rows=rows,
                       guard_events=guard_events)


def solve(problem, params: PathParams, t0=0.25, eps_d=1e-4, y00=None,
          use_center_norm=False, threads=1, adaptive=False, log=None,
          phase1_max_iter=500, phase2_max_iter=None):
    """Run Phase 1 followed by Phase 2 and merge the reports."""
    start = time.perf_counter()
    y0, it0, j, ok = phase1(problem, params, t0, y00=y00,
                            use_center_norm=use_center_norm, threads=threads,
                            max_iter=phase1_max_iter, log=log, t_start=start)
    if not ok:
        k_max, _ = iteration_bounds(params, t0, eps_d)
        return SolveReport(status="phase1_cap", y=y0, x_blocks=it0.x_blocks,
                           t_final=t0, d_final=it0.d_val,
                           feas_final=it0.feas_gap,
                           lambda_final=it0.lambda_bar, phase1_iters=j,
                           phase2_iters=0, k_max=k_max, params=params,
                           guard_events=0)
    # phase-1 exit solves were run at the start-up tolerance; phase 2
    # re-evaluates at its own budget as it iterates
    report = phase2(problem, params, t0, y0, eps_d, it0=it0,
                    use_center_norm=use_center_norm, threads=threads,
                    adaptive=adaptive, max_iter=phase2_max_iter, log=log,
                    t_start=start)
    report.phase1_iters = j
    return report


def solve_exact(problem, beta=None, t0=0.25, eps_d=1e-4, y00=None,
                threads=1, log=None, **kw):
    """Exact variant: subproblems at the machine-accuracy floor, damped
    steps 1/(1+lambda) in Phase 1, stop at t <= eps_d / omega*(beta)."""
    problem.prepare()
    params = derive_params(0.0, beta=beta, nu=problem.nu_total, mode="exact")
    return solve(problem, params, t0=t0, eps_d=eps_d, y00=y00,
                 threads=threads, log=log, **kw)


def iteration_bounds(params: PathParams, t0, eps_d, d_start=None,
                     d_star_t0=None):
    """Worst-case iteration counts.

    k_max bounds Phase 2 always; the Phase-1 bound J_max additionally
    needs d(y_start, t0) and the reference optimum d*(t0), which only an
    oracle run can supply.
    """
    ratio = eps_d / (t0 * omega_star(params.vartheta))
    if ratio >= 1.0:
        k_max = 1
    else:
        k_max = int(np.floor(np.log(ratio) / np.log(1.0 - params.sigma))) + 1
    j_max = None
    if d_start is not None and d_star_t0 is not None:
        extra = omega_star(params.delta_hat_bar) if params.delta_hat_bar > 0 else 0.0
        j_max = int(np.floor((d_start - d_star_t0 + extra)
                             / (t0 * omega(params.eta_lower)))) + 1
    return k_max, j_max
