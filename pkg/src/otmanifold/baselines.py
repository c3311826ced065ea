"""Reference transport solvers used as oracles and comparators.

``sinkhorn_entropic`` solves the entropy-regularized problem by diagonal
scaling of the Gibbs kernel, deliberately in the plain scaling domain so
that the small-regularizer breakdown is visible (a log-domain variant
exists for diagnostics).  ``lp_exact`` is a dependency-free transportation
simplex that certifies optimality through nonnegative reduced costs, and
``north_west_corner`` builds the greedy feasible plan that seeds it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .geometry import MarginalError, PositivityError, ShapeError

__all__ = [
    "SinkhornResult",
    "LPResult",
    "sinkhorn_entropic",
    "lp_exact",
    "north_west_corner",
]


@dataclass(frozen=True)
class SinkhornResult:
    """Scaled plan ``diag(u) K diag(v)`` plus convergence information.

    ``status`` is ``converged``, ``unstable`` (the kernel underflowed to
    exact zeros, or non-finite/zero values appeared while scaling) or
    ``max_iter``.  ``kernel_underflow`` is also set separately because a
    run can converge on the surviving support even after underflow.
    """

    plan: np.ndarray
    u: np.ndarray
    v: np.ndarray
    status: str
    kernel_underflow: bool
    iterations: int
    residual: float

    @property
    def ok(self) -> bool:
        return self.status == "converged" and not self.kernel_underflow


def _check_marginals(p, q, tol=1e-8):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.ndim != 1 or q.ndim != 1:
        raise ShapeError("marginals must be 1-d arrays")
    if np.any(p < 0) or np.any(q < 0):
        raise PositivityError("marginals must be nonnegative")
    if abs(p.sum() - q.sum()) > tol * max(1.0, p.sum()):
        raise MarginalError(
            f"marginals are not coupled: sums {p.sum():g} vs {q.sum():g}"
        )
    return p, q


def sinkhorn_entropic(C, p, q, lam: float, tol: float = 1e-10,
                      max_iter: int = 10000,
                      log_domain: bool = False) -> SinkhornResult:
    """Entropy-regularized transport via Sinkhorn scaling of ``exp(-C/lam)``.

    Returns the plan ``diag(u) K diag(v)`` with marginal residuals below
    ``tol`` (infinity norm) on success.  For very small ``lam`` the kernel
    underflows and the iteration divides by zero; the result is flagged
    ``unstable`` rather than raised, since the breakdown itself is the
    observable of interest.  ``log_domain=True`` switches to stabilized
    log-sum-exp updates for diagnostic comparisons only.
    """
    C = np.asarray(C, dtype=float)
    p, q = _check_marginals(p, q)
    if C.shape != (p.size, q.size):
        raise ShapeError(f"cost has shape {C.shape}, expected {(p.size, q.size)}")
    if lam <= 0:
        raise ValueError("lam must be positive")
    if log_domain:
        return _sinkhorn_log(C, p, q, lam, tol, max_iter)
    with np.errstate(over="ignore", under="ignore", divide="ignore",
                     invalid="ignore"):
        K = np.exp(-C / lam)
        underflow = bool((K == 0.0).any())
        u = np.ones(p.size)
        v = np.ones(q.size)
        status = "max_iter"
        residual = np.inf
        it = 0
        for it in range(1, max_iter + 1):
            Kv = K @ v
            if not np.all(np.isfinite(Kv)) or np.any(Kv == 0.0):
                status = "unstable"
                break
            u = p / Kv
            Ku = K.T @ u
            if not np.all(np.isfinite(Ku)) or np.any(Ku == 0.0):
                status = "unstable"
                break
            v = q / Ku
            plan = (u[:, None] * K) * v[None, :]
            residual = max(
                np.abs(plan.sum(axis=1) - p).max(),
                np.abs(plan.sum(axis=0) - q).max(),
            )
            if not np.isfinite(residual):
                status = "unstable"
                break
            if residual < tol:
                status = "converged"
                break
        plan = (u[:, None] * K) * v[None, :]
    if status == "converged" and underflow:
        status = "unstable"
    return SinkhornResult(plan=plan, u=u, v=v, status=status,
                          kernel_underflow=underflow, iterations=it,
                          residual=float(residual))


def _sinkhorn_log(C, p, q, lam, tol, max_iter):
    """Log-domain Sinkhorn; diagnostics-only stabilized variant."""
    logK = -C / lam
    underflow = bool((np.exp(logK) == 0.0).any())
    logp, logq = np.log(p), np.log(q)
    a = np.zeros(p.size)
    b = np.zeros(q.size)
    status = "max_iter"
    residual = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        a = logp - _lse(logK + b[None, :], axis=1)
        b = logq - _lse(logK + a[:, None], axis=0)
        plan = np.exp(logK + a[:, None] + b[None, :])
        residual = max(
            np.abs(plan.sum(axis=1) - p).max(),
            np.abs(plan.sum(axis=0) - q).max(),
        )
        if residual < tol:
            status = "converged"
            break
    with np.errstate(over="ignore"):
        u, v = np.exp(a), np.exp(b)
    return SinkhornResult(plan=np.exp(logK + a[:, None] + b[None, :]), u=u, v=v,
                          status=status, kernel_underflow=underflow,
                          iterations=it, residual=float(residual))


def _lse(A, axis):
    mx = A.max(axis=axis, keepdims=True)
    return (mx + np.log(np.exp(A - mx).sum(axis=axis, keepdims=True))).squeeze(axis)


# -- exact transportation solver ----------------------------------------


@dataclass(frozen=True)
class LPResult:
    """Vertex solution of the transportation polytope.

    ``plan`` is a basic feasible solution with at most ``n + m - 1``
    nonzero entries; ``u`` and ``v`` are the dual potentials of the final
    basis, whose reduced costs ``C - u 1^T - 1 v^T`` are nonnegative at
    optimality (the optimality certificate).
    """

    plan: Optional[np.ndarray]
    cost: float
    status: str
    u: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    pivots: int = 0


def north_west_corner(p, q) -> np.ndarray:
    """Greedy top-left feasible plan for coupled marginals."""
    p, q = _check_marginals(p, q)
    plan, _ = _north_west_basis(p, q)
    return plan


def _north_west_basis(p, q) -> Tuple[np.ndarray, List[Tuple[int, int]]]:
    """North-west corner plan plus a spanning basis of n + m - 1 cells."""
    n, m = p.size, q.size
    plan = np.zeros((n, m))
    basis: List[Tuple[int, int]] = []
    a = p.astype(float).copy()
    b = q.astype(float).copy()
    i = j = 0
    while True:
        t = min(a[i], b[j])
        plan[i, j] = t
        basis.append((i, j))
        a[i] -= t
        b[j] -= t
        if i == n - 1 and j == m - 1:
            break
        if a[i] <= 0 and i < n - 1:
            i += 1
        else:
            j += 1
    return plan, basis


def _tree_duals(C, basis, n, m):
    """Dual potentials from the basis tree (u[0] anchored at 0)."""
    adj = [[] for _ in range(n + m)]
    for (i, j) in basis:
        adj[i].append((n + j, (i, j)))
        adj[n + j].append((i, (i, j)))
    u = np.full(n, np.nan)
    v = np.full(m, np.nan)
    u[0] = 0.0
    stack = [0]
    seen = [False] * (n + m)
    seen[0] = True
    while stack:
        node = stack.pop()
        for nxt, (i, j) in adj[node]:
            if seen[nxt]:
                continue
            seen[nxt] = True
            if nxt >= n:
                v[nxt - n] = C[i, j] - u[i]
            else:
                u[nxt] = C[i, j] - v[j]
            stack.append(nxt)
    return u, v


def _basis_cycle(basis, entering, n, m):
    """Alternating cycle created by the entering cell in the basis tree."""
    i0, j0 = entering
    adj = [[] for _ in range(n + m)]
    for (i, j) in basis:
        adj[i].append((n + j, (i, j)))
        adj[n + j].append((i, (i, j)))
    # path from the entering column node back to the entering row node
    start, goal = n + j0, i0
    parent = {start: (None, None)}
    stack = [start]
    while stack:
        node = stack.pop()
        if node == goal:
            break
        for nxt, cell in adj[node]:
            if nxt not in parent:
                parent[nxt] = (node, cell)
                stack.append(nxt)
    path_cells = []
    node = goal
    while parent[node][0] is not None:
        node, cell = parent[node][0], parent[node][1]
        path_cells.append(cell)
    path_cells.reverse()  # from column node j0 towards row node i0
    minus = path_cells[0::2]
    plus = [entering] + path_cells[1::2]
    return plus, minus


def lp_exact(C, p, q, tol: float = 1e-9,
             max_pivots: Optional[int] = None) -> LPResult:
    """Exact transportation LP by the primal simplex on the basis tree.

    Seeds with the north-west corner basis and pivots with Bland's rule
    (first negative reduced cost in row-major order), which guarantees
    termination under degeneracy at desk scale.  Returns ``infeasible``
    when the marginals are not coupled.
    """
    C = np.asarray(C, dtype=float)
    try:
        p, q = _check_marginals(p, q, tol=tol)
    except (MarginalError, PositivityError):
        return LPResult(plan=None, cost=np.nan, status="infeasible")
    n, m = p.size, q.size
    if C.shape != (n, m):
        raise ShapeError(f"cost has shape {C.shape}, expected {(n, m)}")
    plan, basis = _north_west_basis(p, q)
    if max_pivots is None:
        max_pivots = 1000 + 20 * n * m
    pivot_tol = tol * max(1.0, float(np.abs(C).max()))
    pivots = 0
    while True:
        u, v = _tree_duals(C, basis, n, m)
        reduced = C - u[:, None] - v[None, :]
        mask = reduced < -pivot_tol
        in_basis = np.zeros((n, m), dtype=bool)
        for (i, j) in basis:
            in_basis[i, j] = True
        mask &= ~in_basis
        if not mask.any():
            break
        if pivots >= max_pivots:
            raise RuntimeError(f"transportation simplex exceeded {max_pivots} pivots")
        flat = int(np.flatnonzero(mask.ravel())[0])
        entering = (flat // m, flat % m)
        plus, minus = _basis_cycle(basis, entering, n, m)
        theta = min(plan[c] for c in minus)
        leaving = next(c for c in minus if plan[c] == theta)
        for c in plus:
            plan[c] += theta
        for c in minus:
            plan[c] -= theta
        plan[leaving] = 0.0
        basis[basis.index(leaving)] = entering
        pivots += 1
    cost = float(np.sum(C * plan))
    return LPResult(plan=plan, cost=cost, status="optimal", u=u, v=v,
                    pivots=pivots)
