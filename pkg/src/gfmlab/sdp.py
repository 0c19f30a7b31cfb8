"""Small dense semidefinite programming layer.

Problems are posed in the canonical linear form

    minimize    c^T x
    subject to  const_k + sum_i x_i * coeff_{k,i}  >= 0   (PSD, per block k)
                G x <= h                                   (optional, scalar)

which is what the gain-design LMIs reduce to once the complex-number block
structure is encoded directly in the coefficient matrices (structure by
construction, not by projection).  The heavy lifting is done by cvxopt's
primal-dual interior-point cone solver; this module owns problem assembly,
status mapping, and residual checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from cvxopt import matrix as cvxmat
from cvxopt import solvers as cvxsolvers

from .errors import DimensionError, SolverFailure

_SOLVER_OPTS = {
    "show_progress": False,
    "maxiters": 200,
    "abstol": 1e-9,
    "reltol": 1e-9,
    "feastol": 1e-9,
}


@dataclass(frozen=True)
class SdpBlock:
    """One PSD constraint: const + sum_i x_i coeffs[i] >= 0."""

    const: np.ndarray
    coeffs: np.ndarray  # (n_vars, m, m)

    def __post_init__(self):
        m = self.const.shape[0]
        if self.const.shape != (m, m):
            raise DimensionError("block constant must be square")
        if self.coeffs.ndim != 3 or self.coeffs.shape[1:] != (m, m):
            raise DimensionError("coefficient stack shape mismatch")

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return self.const + np.tensordot(x, self.coeffs, axes=1)


@dataclass(frozen=True)
class SdpProblem:
    c: np.ndarray
    blocks: tuple[SdpBlock, ...]
    g_lin: np.ndarray | None = None  # G x <= h
    h_lin: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.c)
        for b in self.blocks:
            if b.coeffs.shape[0] != n:
                raise DimensionError("block variable count mismatch")


@dataclass(frozen=True)
class SdpSolution:
    status: str  # optimal | infeasible | numerical-failure
    x: np.ndarray | None
    value: float | None
    gap: float | None
    certificate: dict
    residual: float | None

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _equilibrate(problem: SdpProblem, iters: int = 10):
    """Ruiz-style equilibration: per-block congruence + variable scaling.

    Returns (scaled problem, variable scale vector sigma) such that a solution
    y of the scaled problem maps back as x = sigma * y.  Congruence scaling of
    a PSD block by a positive diagonal preserves the cone exactly, so the two
    problems are equivalent; only the numerical ranges seen by the solver
    change.  Interior-point solvers fail outright on the raw gain LMIs, whose
    entries span ~10 decades (1/C_f against unit integrator weights).
    """
    n = len(problem.c)
    sigma = np.ones(n)
    e_blocks = [np.ones(b.const.shape[0]) for b in problem.blocks]

    def _entry_max(blk_idx: int) -> np.ndarray:
        b = problem.blocks[blk_idx]
        e = e_blocks[blk_idx]
        stack = np.abs(b.const) * np.outer(e, e)
        for i in range(n):
            stack = np.maximum(stack, np.abs(b.coeffs[i]) * sigma[i] * np.outer(e, e))
        return stack

    for _ in range(iters):
        # rows of each block (congruence scales)
        for k in range(len(problem.blocks)):
            row_max = _entry_max(k).max(axis=1)
            row_max[row_max == 0.0] = 1.0
            e_blocks[k] /= np.sqrt(row_max)
        # variable columns (largest scaled coefficient over all blocks)
        col_max = np.zeros(n)
        for k, b in enumerate(problem.blocks):
            e = e_blocks[k]
            for i in range(n):
                m = (np.abs(b.coeffs[i]) * np.outer(e, e)).max()
                col_max[i] = max(col_max[i], m * sigma[i])
        col_max[col_max == 0.0] = 1.0
        sigma /= np.sqrt(col_max)

    blocks = []
    for k, b in enumerate(problem.blocks):
        e = np.diag(e_blocks[k])
        const = e @ b.const @ e
        coeffs = np.stack([sigma[i] * (e @ b.coeffs[i] @ e) for i in range(n)])
        blocks.append(SdpBlock(const, coeffs))
    g_lin = None if problem.g_lin is None else problem.g_lin * sigma[None, :]
    scaled = SdpProblem(
        c=problem.c * sigma,
        blocks=tuple(blocks),
        g_lin=g_lin,
        h_lin=problem.h_lin,
    )
    return scaled, sigma


def _scale_about(problem: SdpProblem, x0: np.ndarray, iters: int = 8):
    """Diagonal rescaling anchored at a reference point.

    Variables are scaled by sigma = max(|x0|, 1e-2) so the reference point
    becomes O(1), then each block is congruence-scaled by iterated row-max
    square roots.  Returns (scaled problem, sigma, y0 = x0/sigma).  Anchoring
    at a feasible interior point conditions the problem far better than
    coefficient-only equilibration when the solution itself spans many
    decades (it does here: the regularization scalars sit at 1e5 while the
    scaling-certificate coordinates sit at 1e-5).
    """
    n = len(problem.c)
    sigma = np.maximum(np.abs(np.asarray(x0, dtype=float)), 1e-2)
    blocks = []
    for b in problem.blocks:
        const = b.const.copy()
        coeffs = np.stack([b.coeffs[i] * sigma[i] for i in range(n)])
        for _ in range(iters):
            row_max = np.abs(const).max(axis=1)
            for i in range(n):
                row_max = np.maximum(row_max, np.abs(coeffs[i]).max(axis=1))
            row_max[row_max == 0.0] = 1.0
            e = 1.0 / np.sqrt(row_max)
            scale = np.outer(e, e)
            const *= scale
            coeffs *= scale[None, :, :]
        blocks.append(SdpBlock(const, coeffs))
    g_lin = None if problem.g_lin is None else problem.g_lin * sigma[None, :]
    scaled = SdpProblem(
        c=problem.c * sigma,
        blocks=tuple(blocks),
        g_lin=g_lin,
        h_lin=problem.h_lin,
    )
    return scaled, sigma, np.asarray(x0, dtype=float) / sigma


def _run_cvxopt(problem: SdpProblem, y0: np.ndarray | None = None, tol: float | None = None):
    """One cvxopt call on an already-scaled problem; returns (sol, error)."""
    c = cvxmat(np.asarray(problem.c, dtype=float))
    gs, hs = [], []
    starts = []
    for blk in problem.blocks:
        m = blk.const.shape[0]
        cols = np.stack([-_symmetrize(a).reshape(m * m) for a in blk.coeffs], axis=1)
        gs.append(cvxmat(cols))
        hs.append(cvxmat(_symmetrize(blk.const)))
        if y0 is not None:
            slack = _symmetrize(blk.evaluate(y0))
            if np.linalg.eigvalsh(slack).min() <= 0.0:
                y0 = None  # start not strictly interior; drop it
            else:
                starts.append(cvxmat(slack))
    gl = hl = None
    primalstart = None
    if y0 is not None:
        primalstart = {"x": cvxmat(y0), "ss": starts}
    if problem.g_lin is not None:
        gl = cvxmat(np.asarray(problem.g_lin, dtype=float))
        hl = cvxmat(np.asarray(problem.h_lin, dtype=float))
        if primalstart is not None:
            sl = np.asarray(problem.h_lin, dtype=float) - problem.g_lin @ y0
            if sl.min() <= 0.0:
                primalstart = None
            else:
                primalstart["sl"] = cvxmat(sl)

    old = dict(cvxsolvers.options)
    cvxsolvers.options.update(_SOLVER_OPTS)
    if tol is not None:
        cvxsolvers.options.update({"abstol": tol, "reltol": tol, "feastol": tol})
    try:
        return cvxsolvers.sdp(c, Gl=gl, hl=hl, Gs=gs, hs=hs, primalstart=primalstart), None
    except (ValueError, ArithmeticError, ZeroDivisionError) as exc:
        return None, exc
    finally:
        cvxsolvers.options.clear()
        cvxsolvers.options.update(old)


def sdp_solve(
    problem: SdpProblem,
    equilibrate: bool = True,
    primal_start: np.ndarray | None = None,
) -> SdpSolution:
    """Solve the canonical-form SDP; never raises on infeasibility.

    Returns status "infeasible" with the dual certificate when the solver
    proves primal infeasibility, and "numerical-failure" (SolverFailure is
    *not* raised; callers decide) when no conclusion was reached.  When
    `primal_start` is a strictly feasible point, the problem is rescaled
    around it and the point is handed to the solver as the initial iterate.
    """
    original = problem
    sigma = np.ones(len(problem.c))
    y0 = None
    if primal_start is not None:
        problem, sigma, y0 = _scale_about(problem, primal_start)
    elif equilibrate:
        problem, sigma = _equilibrate(problem)

    # Interior-point progress near the requested accuracy is scaling
    # sensitive, so walk a small tolerance ladder before giving up.
    sol = err = None
    for tol in (None, 1e-8, 1e-7):
        sol, err = _run_cvxopt(problem, y0, tol=tol)
        if sol is None and y0 is not None:
            # warm-started path crashed; retry cold on the same scaling
            sol, err = _run_cvxopt(problem, None, tol=tol)
        if sol is not None and sol["status"] in ("optimal", "primal infeasible"):
            break
    if sol is None:
        return SdpSolution("numerical-failure", None, None, None, {"error": str(err)}, None)

    status = sol["status"]
    if status == "optimal":
        x = sigma * np.array(sol["x"]).ravel()
        residual = 0.0
        for blk in original.blocks:
            lam = np.linalg.eigvalsh(_symmetrize(blk.evaluate(x)))
            residual = max(residual, max(0.0, -lam.min()))
        return SdpSolution(
            "optimal",
            x,
            float(original.c @ x),
            float(sol["gap"]) if sol["gap"] is not None else None,
            {"zs": sol.get("zs"), "y": sol.get("y")},
            residual,
        )
    if status == "primal infeasible":
        return SdpSolution("infeasible", None, None, None, {"zs": sol.get("zs"), "zl": sol.get("zl")}, None)
    if status == "dual infeasible":
        # unbounded below for us
        return SdpSolution("numerical-failure", None, None, None, {"status": status}, None)
    return SdpSolution("numerical-failure", None, None, None, {"status": status}, None)
