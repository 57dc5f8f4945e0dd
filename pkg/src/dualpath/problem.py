"""Block-separable problem data model.

A problem maximizes sum_i c_i^T x_i over x_i in X_i subject to the
coupling constraint sum_i A_i x_i = b.  Each X_i is the domain of a
self-concordant barrier, optionally intersected with a local equality
E_i x_i = f_i which is eliminated once, up front, through a QR null-space
basis.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import scfun
from .scfun import Barrier, CenteringError, ReducedBarrier, analytic_center

__all__ = [
    "Block", "SeparableProblem", "NullSpaceReduction", "ValidationReport",
    "validate", "reduce_block", "epigraph_transform",
    "problem_to_dict", "problem_from_dict", "save_problem", "load_problem",
]

_RANK_TOL = 1e-10


@dataclass
class NullSpaceReduction:
    """Change of variables x = Z z + x_part eliminating E x = f."""

    Z: np.ndarray
    x_part: np.ndarray
    barrier: ReducedBarrier
    c_red: np.ndarray
    A_red: np.ndarray


class _BlockWorkspace:
    """Per-block solver state, computed once and then read-only."""

    __slots__ = ("Z", "x_part", "z_start", "c_red", "A_red", "barrier_red",
                 "center_z", "center_val", "center_chol", "center_grad_norm",
                 "center_iters", "has_center")

    def __init__(self):
        self.has_center = False
        self.center_z = None
        self.center_val = 0.0
        self.center_chol = None
        self.center_grad_norm = np.nan
        self.center_iters = 0


class Block:
    """One separable component: objective c, coupling A, barrier, optional
    local equality E x = f, and a strictly interior starting point."""

    def __init__(self, c, A, barrier: Barrier, x_start, E=None, f=None):
        self.c = np.asarray(c, dtype=float)
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.barrier = barrier
        self.x_start = np.asarray(x_start, dtype=float)
        self.E = None if E is None else np.atleast_2d(np.asarray(E, dtype=float))
        self.f = None if f is None else np.atleast_1d(np.asarray(f, dtype=float))
        self._ws: _BlockWorkspace | None = None

    @property
    def n(self):
        return self.c.shape[0]

    @property
    def has_equality(self):
        return self.E is not None

    @property
    def nu(self):
        return self.barrier.nu

    # -- solver workspace -------------------------------------------------

    def prepare(self, center_tol=1e-10):
        """Eliminate the local equality and locate the analytic center.

        Idempotent; blocks are immutable afterwards.  A barrier that is
        unbounded below has no analytic center: the block then falls back
        to the starting point as value reference and center-metric
        residuals are unavailable.
        """
        if self._ws is not None:
            return self._ws
        ws = _BlockWorkspace()
        if self.has_equality:
            red, _ = reduce_block(self)
            ws.Z = red.Z
            ws.x_part = red.x_part
            ws.c_red = red.c_red
            ws.A_red = red.A_red
            ws.barrier_red = red.barrier
            ws.z_start = red.Z.T @ (self.x_start - red.x_part)
        else:
            ws.Z = None
            ws.x_part = None
            ws.c_red = self.c
            ws.A_red = self.A
            ws.barrier_red = self.barrier
            ws.z_start = self.x_start.copy()
        try:
            ac = analytic_center(ws.barrier_red, ws.z_start, tol=center_tol)
            ws.center_z = ac.xc
            ws.center_val = ws.barrier_red.value(ac.xc)
            ws.center_chol = np.linalg.cholesky(ws.barrier_red.hess(ac.xc))
            ws.center_grad_norm = ac.grad_norm
            ws.center_iters = ac.iterations
            ws.has_center = True
        except CenteringError:
            ws.center_val = ws.barrier_red.value(ws.z_start)
            ws.has_center = False
        self._ws = ws
        return ws

    @property
    def workspace(self):
        if self._ws is None:
            raise RuntimeError("block not prepared; call problem.prepare() first")
        return self._ws

    def to_full(self, z):
        ws = self.workspace
        if ws.Z is None:
            return np.asarray(z, dtype=float)
        return ws.x_part + ws.Z @ np.asarray(z, dtype=float)


class SeparableProblem:
    """Blocks plus the coupling right-hand side b (length m)."""

    def __init__(self, blocks, b):
        self.blocks = list(blocks)
        self.b = np.asarray(b, dtype=float)
        self._prepared = False

    @property
    def m(self):
        return self.b.shape[0]

    @property
    def M(self):
        return len(self.blocks)

    @property
    def n(self):
        return sum(blk.n for blk in self.blocks)

    @property
    def nu_total(self):
        return sum(blk.nu for blk in self.blocks)

    def prepare(self, center_tol=1e-10):
        if not self._prepared:
            for blk in self.blocks:
                blk.prepare(center_tol=center_tol)
            self._prepared = True
        return self

    def phi(self, x_blocks):
        """Objective value sum_i c_i^T x_i at full-space block points."""
        return float(sum(blk.c @ x for blk, x in zip(self.blocks, x_blocks)))

    def coupling_residual(self, x_blocks):
        r = -self.b.copy()
        for blk, x in zip(self.blocks, x_blocks):
            r += blk.A @ x
        return r


@dataclass
class ValidationReport:
    ok: bool
    errors: list = field(default_factory=list)  # (code, message) pairs

    @property
    def first(self):
        return self.errors[0] if self.errors else None

    def __str__(self):
        if self.ok:
            return "valid"
        return "; ".join(f"{code}: {msg}" for code, msg in self.errors)


def _rank_pivoted_qr(M, tol=_RANK_TOL):
    if M.size == 0:
        return 0
    R = scipy.linalg.qr(M, mode="r", pivoting=True)[0]
    d = np.abs(np.diag(R))
    if d.size == 0:
        return 0
    return int(np.sum(d > tol * max(1.0, d[0])))


def validate(problem: SeparableProblem) -> ValidationReport:
    """Check every structural invariant; deterministic and side-effect free."""
    errors = []

    def fail(code, msg):
        errors.append((code, msg))

    m = problem.m
    for i, blk in enumerate(problem.blocks):
        if blk.A.shape != (m, blk.n):
            fail("coupling_shape", f"block {i}: A is {blk.A.shape}, expected {(m, blk.n)}")
        if blk.barrier.dim != blk.n:
            fail("barrier_dim", f"block {i}: barrier dim {blk.barrier.dim} != n {blk.n}")
        if blk.x_start.shape != (blk.n,):
            fail("start_shape", f"block {i}: x_start has shape {blk.x_start.shape}")
            continue
        if not blk.barrier.contains(blk.x_start):
            fail("start_not_interior", f"block {i}: x_start is not strictly interior")
        if blk.has_equality:
            p = blk.E.shape[0]
            if blk.E.shape[1] != blk.n or blk.f.shape != (p,):
                fail("equality_shape", f"block {i}: E/f dimensions are inconsistent")
                continue
            if _rank_pivoted_qr(blk.E.T) < p:
                fail("equality_rank", f"block {i}: E does not have full row rank")
            if np.max(np.abs(blk.E @ blk.x_start - blk.f)) > 1e-10:
                fail("start_equality", f"block {i}: x_start violates E x = f")
    if not errors:
        A = np.hstack([blk.A for blk in problem.blocks])
        if _rank_pivoted_qr(A.T) < m:
            fail("coupling_rank", f"stacked coupling matrix is rank deficient (m={m})")
    return ValidationReport(ok=not errors, errors=errors)


def reduce_block(block: Block):
    """Eliminate E x = f via a QR null-space basis.

    Full QR of E^T = [Y Z] [R; 0] gives the orthonormal null basis Z and
    the particular solution x_part = Y R^{-T} f.  Local norms are invariant
    under the orthonormal affine reparameterization, so approximation
    certificates carry over unchanged.
    """
    if not block.has_equality:
        raise ValueError("block has no local equality to reduce")
    E = block.E
    p, n = E.shape
    Q, R = np.linalg.qr(E.T, mode="complete")
    Rp = R[:p, :p]
    if np.min(np.abs(np.diag(Rp))) <= _RANK_TOL * max(1.0, np.max(np.abs(np.diag(Rp)))):
        raise ValueError("E is rank deficient; remove redundant local equalities")
    Y = Q[:, :p]
    Z = Q[:, p:]
    w = scipy.linalg.solve_triangular(Rp.T, block.f, lower=True)
    x_part = Y @ w
    barrier_red = ReducedBarrier(block.barrier, Z, x_part)
    c_red = Z.T @ block.c
    A_red = block.A @ Z
    red = NullSpaceReduction(Z=Z, x_part=x_part, barrier=barrier_red,
                             c_red=c_red, A_red=A_red)
    z_start = Z.T @ (block.x_start - x_part)
    reduced_block = Block(c=c_red, A=A_red, barrier=barrier_red, x_start=z_start)
    return red, reduced_block


def epigraph_transform(A, x_barrier: Barrier, Q, q, r, x_start, s_floor=None):
    """Move a concave quadratic objective phi(x) = x'Qx + q'x + r into the
    constraints: variables (x, s), maximize s subject to phi(x) >= s.

    The floor s >= s_floor keeps the lifted set bounded below in s; the
    default is far enough under phi(x_start) to stay inactive.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    x_start = np.asarray(x_start, dtype=float)
    n = x_start.shape[0]
    q = np.atleast_1d(np.asarray(q, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    phi0 = float(x_start @ Q @ x_start + q @ x_start + r)
    if s_floor is None:
        s_floor = phi0 - 10.0 * (1.0 + abs(phi0))
    epi = scfun.QuadraticEpigraphBarrier(Q, q, r, s_floor=s_floor)
    barrier = scfun.ProductBarrier([x_barrier, epi],
                                   ranges=[(0, n), (0, n + 1)])
    c_hat = np.zeros(n + 1)
    c_hat[n] = 1.0
    A_hat = np.hstack([A, np.zeros((A.shape[0], 1))])
    s0 = phi0 - 1.0
    if s0 <= s_floor:
        s0 = 0.5 * (phi0 + s_floor)
    x_hat_start = np.concatenate([x_start, [s0]])
    return Block(c=c_hat, A=A_hat, barrier=barrier, x_start=x_hat_start)


# -- instance file format -------------------------------------------------

def _block_to_dict(blk: Block):
    d = {
        "n": blk.n,
        "c": blk.c.tolist(),
        "A": blk.A.ravel().tolist(),  # dense, row-major
        "barrier": blk.barrier.descriptor(),
        "x_start": blk.x_start.tolist(),
    }
    if blk.has_equality:
        d["E"] = blk.E.ravel().tolist()
        d["p"] = blk.E.shape[0]
        d["f"] = blk.f.tolist()
    return d


def problem_to_dict(problem: SeparableProblem) -> dict:
    return {
        "m": problem.m,
        "b": problem.b.tolist(),
        "blocks": [_block_to_dict(blk) for blk in problem.blocks],
    }


def problem_from_dict(doc: dict) -> SeparableProblem:
    m = int(doc["m"])
    blocks = []
    for bd in doc["blocks"]:
        n = int(bd["n"])
        A = np.asarray(bd["A"], dtype=float).reshape(m, n)
        barrier = scfun.barrier_from_descriptor(bd["barrier"])
        E = f = None
        if "E" in bd:
            p = int(bd.get("p", len(bd["f"])))
            E = np.asarray(bd["E"], dtype=float).reshape(p, n)
            f = np.asarray(bd["f"], dtype=float)
        blocks.append(Block(c=bd["c"], A=A, barrier=barrier,
                            x_start=bd["x_start"], E=E, f=f))
    return SeparableProblem(blocks, np.asarray(doc["b"], dtype=float))


def save_problem(problem: SeparableProblem, path):
    with open(path, "w") as fh:
        json.dump(problem_to_dict(problem), fh, indent=1)
        fh.write("\n")


def load_problem(path) -> SeparableProblem:
    with open(path) as fh:
        return problem_from_dict(json.load(fh))
