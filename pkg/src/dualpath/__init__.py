"""Barrier-smoothed dual decomposition for block-separable convex programs.

Maximize a separable linear objective over a product of barrier domains
coupled by linear equality constraints.  The coupling is dualized, the
dual is smoothed with the blocks' self-concordant barriers, and a
two-phase Newton-type path-following method drives the smoothing
parameter to the target accuracy; block subproblems may be solved
inexactly with certified accuracy.
"""
from ._kernels import backend_name
from .master import DualIterate, choose_t_bar, eval_dual, exact_dual_bounds, newton_direction
from .pathfollow import (PathParams, SolveReport, beta_roots, derive_params,
                         iteration_bounds, phase1, phase2, solve, solve_exact)
from .problem import (Block, SeparableProblem, epigraph_transform, load_problem,
                      reduce_block, save_problem, validate)
from .scfun import (AnalyticCenter, Barrier, EntropyEpigraphBarrier,
                    HalfspaceBarrier, IntervalBarrier,
                    LogCongestionEpigraphBarrier, OrthantBarrier,
                    ProductBarrier, QuadraticEpigraphBarrier, analytic_center,
                    dual_local_norm, local_norm, omega, omega_star)
from .subproblem import (SubproblemResult, local_accuracy, primal_accuracy,
                         solve_block, split_tolerance)

__version__ = "0.1.0"

__all__ = [
    "backend_name", "omega", "omega_star", "local_norm", "dual_local_norm",
    "Barrier", "OrthantBarrier", "IntervalBarrier", "HalfspaceBarrier",
    "LogCongestionEpigraphBarrier", "EntropyEpigraphBarrier",
    "QuadraticEpigraphBarrier", "ProductBarrier", "AnalyticCenter",
    "analytic_center", "Block", "SeparableProblem", "validate", "reduce_block",
    "epigraph_transform", "save_problem", "load_problem",
    "SubproblemResult", "primal_accuracy", "local_accuracy", "split_tolerance",
    "solve_block", "DualIterate", "eval_dual", "newton_direction",
    "exact_dual_bounds", "choose_t_bar", "PathParams", "SolveReport",
    "beta_roots", "derive_params", "phase1", "phase2", "solve", "solve_exact",
    "iteration_bounds",
]
