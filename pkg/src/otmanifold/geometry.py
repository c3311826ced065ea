"""Geometry of the manifold of positive coupling matrices.

A coupling matrix for marginals ``p`` (length n) and ``q`` (length m) is a
strictly positive n-by-m matrix whose row sums equal ``p`` and whose column
sums equal ``q``.  For coupled marginals (equal total mass) these matrices
form a smooth manifold of dimension ``(n-1)(m-1)`` embedded in the positive
orthant.  This module provides the building blocks needed to run first- and
second-order optimization on that manifold:

- point and tangent-vector containers with validation
  (:class:`CouplingSpace`, :class:`CouplingPoint`, :class:`TangentVector`),
- the Fisher-information Riemannian metric :func:`metric`,
- the orthogonal projection :func:`project_tangent` onto the tangent space
  ``{Y : Y 1 = 0, Y^T 1 = 0}``,
- Euclidean-to-Riemannian gradient conversion :func:`riemannian_gradient`,
- the diagonal-scaling projection :func:`sinkhorn_knopp_project` and the
  multiplicative retraction :func:`retract` built on it,
- the Riemannian Hessian operator :func:`riemannian_hessian`.

All operations are pure functions of their inputs; no state is shared
between calls.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "CouplingError",
    "ShapeError",
    "PositivityError",
    "MarginalError",
    "ProjectionError",
    "RetractionError",
    "CouplingSpace",
    "CouplingPoint",
    "TangentVector",
    "ProjectionCoefficients",
    "HessianWorkspace",
    "SinkhornProjection",
    "validate_point",
    "independence_point",
    "random_tangent",
    "metric",
    "project_tangent",
    "riemannian_gradient",
    "sinkhorn_knopp_project",
    "retract",
    "hessian_workspace",
    "riemannian_hessian",
]

# Exponent clamp for the multiplicative retraction; the scaling projection
# absorbs the distortion while overflow at tiny entries is prevented.
RETRACTION_EXP_CLAMP = 50.0

# Relative cutoff for discarded spectrum in the pseudo-inverse; the matrix
# (P - X Q^{-1} X^T) always has the all-ones vector in its kernel.
PINV_RCOND = 1e-12


class CouplingError(ValueError):
    """Base class for coupling-matrix validation failures."""


class ShapeError(CouplingError):
    """An array does not have the expected shape."""


class PositivityError(CouplingError):
    """An entry violates strict positivity (or the positivity floor)."""


class MarginalError(CouplingError):
    """Row/column sums deviate from the prescribed marginals."""


class ProjectionError(RuntimeError):
    """The pseudo-inverse solve inside the tangent projection failed."""


class RetractionError(RuntimeError):
    """The retraction could not produce a feasible point."""


def _as_vector(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ShapeError(f"{name} must be a nonempty 1-d array, got shape {x.shape}")
    return x


def _as_matrix(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.size == 0:
        raise ShapeError(f"{name} must be a nonempty 2-d array, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class CouplingSpace:
    """The pair of coupled marginals defining a coupling-matrix manifold.

    Parameters
    ----------
    p : array, shape (n,)
        Source mass, strictly positive.
    q : array, shape (m,)
        Target mass, strictly positive.  Must satisfy the coupling
        condition ``|sum(p) - sum(q)| <= coupling_tol * max(1, sum(p))``.
    coupling_tol : float
        Slack allowed on the equality of total masses.
    positivity_floor : float
        Entries of a candidate point below this threshold are rejected
        (never silently clamped).  Problems whose optima legitimately carry
        astronomically small mass on some routes should construct a space
        with a smaller floor.
    feasibility_tol : float
        Marginal residual allowed for a point, relative to
        ``max(1, |p|_inf)`` resp. ``max(1, |q|_inf)``.
    metric_scale : float
        Constant multiplier of the Fisher metric.  The default 1.0 is the
        plain information metric; setting it to the total mass gives the
        mass-normalized variant.
    """

    p: np.ndarray
    q: np.ndarray
    coupling_tol: float = 1e-8
    positivity_floor: float = 1e-15
    feasibility_tol: float = 1e-8
    metric_scale: float = 1.0

    def __post_init__(self):
        p = _as_vector(self.p, "p")
        q = _as_vector(self.q, "q")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        if np.any(p <= 0) or np.any(q <= 0):
            raise PositivityError("marginals must be strictly positive")
        if self.coupling_tol < 0:
            raise ValueError("coupling_tol must be nonnegative")
        if self.positivity_floor <= 0:
            raise ValueError("positivity_floor must be positive")
        if self.metric_scale <= 0:
            raise ValueError("metric_scale must be positive")
        gap = abs(p.sum() - q.sum())
        if gap > self.coupling_tol * max(1.0, p.sum()):
            raise MarginalError(
                f"marginals are not coupled: |sum(p) - sum(q)| = {gap:g} "
                f"exceeds tolerance {self.coupling_tol:g} * max(1, sum(p))"
            )

    @property
    def n(self) -> int:
        return self.p.size

    @property
    def m(self) -> int:
        return self.q.size

    @property
    def shape(self) -> tuple:
        return (self.n, self.m)

    @property
    def mass(self) -> float:
        return float(self.p.sum())

    @property
    def dim(self) -> int:
        """Manifold dimension, ``(n-1)(m-1)``."""
        return (self.n - 1) * (self.m - 1)


@dataclass(frozen=True)
class CouplingPoint:
    """A validated point on the manifold: plan matrix plus its space."""

    X: np.ndarray
    space: CouplingSpace

    @property
    def shape(self) -> tuple:
        return self.space.shape


@dataclass(frozen=True)
class TangentVector:
    """A matrix with zero row and column sums attached to a base point."""

    Y: np.ndarray
    base: CouplingPoint

    def norm(self) -> float:
        """Riemannian norm at the base point."""
        return float(np.sqrt(metric(self.base, self, self)))

    def __neg__(self) -> "TangentVector":
        return TangentVector(-self.Y, self.base)

    def scaled(self, c: float) -> "TangentVector":
        return TangentVector(c * self.Y, self.base)


@dataclass(frozen=True)
class ProjectionCoefficients:
    """Multipliers of the normal component removed by the projection.

    The normal space at ``X`` consists of matrices
    ``(alpha 1^T + 1 beta^T) * X``; ``alpha`` and ``beta`` are the solved
    multipliers.  The remaining fields are diagnostics of the
    pseudo-inverse solve (the system matrix is singular by construction,
    with the constant vector in its kernel).
    """

    alpha: np.ndarray
    beta: np.ndarray
    rank: int
    eig_max: float
    eig_min_kept: float
    truncated: int


@dataclass
class HessianWorkspace:
    """Intermediate quantities of the Hessian operator at a point.

    The direction-independent part (``mu`` through ``gamma``) is computed
    once per base point and Euclidean gradient; the directional derivatives
    (``*_dot``) are filled in for the most recent direction by
    :func:`riemannian_hessian`.  ``gamma`` equals the Riemannian gradient
    and therefore has zero row and column sums.
    """

    point: CouplingPoint
    egrad: np.ndarray
    mu: np.ndarray
    eta: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    rhs: np.ndarray
    mu_dot: Optional[np.ndarray] = None
    eta_dot: Optional[np.ndarray] = None
    alpha_dot: Optional[np.ndarray] = None
    beta_dot: Optional[np.ndarray] = None
    gamma_dot: Optional[np.ndarray] = None


@dataclass(frozen=True)
class SinkhornProjection:
    """Result of the diagonal-scaling projection onto the manifold.

    ``plan`` equals ``diag(d1) @ M @ diag(d2)`` exactly; ``converged``
    records whether both marginal residuals dropped below the requested
    tolerance within the iteration budget.
    """

    plan: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    converged: bool
    iterations: int
    residual: float

    def point(self, space: CouplingSpace) -> CouplingPoint:
        """Validate the scaled matrix as a coupling point."""
        return validate_point(space, self.plan)


def validate_point(space: CouplingSpace, X) -> CouplingPoint:
    """Check a candidate plan against all point invariants.

    Raises :class:`ShapeError`, :class:`PositivityError` or
    :class:`MarginalError` depending on which invariant fails; entries
    below the space's positivity floor are rejected, not repaired.
    """
    X = _as_matrix(X, "X")
    if X.shape != space.shape:
        raise ShapeError(f"plan has shape {X.shape}, expected {space.shape}")
    if not np.all(np.isfinite(X)):
        raise PositivityError("plan contains non-finite entries")
    if X.min() < space.positivity_floor:
        raise PositivityError(
            f"plan entry {X.min():g} is below the positivity floor "
            f"{space.positivity_floor:g}"
        )
    row_res = np.abs(X.sum(axis=1) - space.p).max()
    col_res = np.abs(X.sum(axis=0) - space.q).max()
    row_tol = space.feasibility_tol * max(1.0, np.abs(space.p).max())
    col_tol = space.feasibility_tol * max(1.0, np.abs(space.q).max())
    if row_res > row_tol or col_res > col_tol:
        raise MarginalError(
            f"marginal residuals (row {row_res:g}, col {col_res:g}) exceed "
            f"tolerances (row {row_tol:g}, col {col_tol:g})"
        )
    return CouplingPoint(X, space)


def independence_point(space: CouplingSpace) -> CouplingPoint:
    """The rank-one coupling ``p q^T / mass``, the default initializer."""
    X = np.outer(space.p, space.q) / space.mass
    return CouplingPoint(X, space)


def random_tangent(X: CouplingPoint, rng: np.random.Generator) -> TangentVector:
    """Gaussian tangent direction via double-centering.

    Double-centering (removing row means, column means and adding back the
    grand mean) zeroes all row and column sums without touching the metric
    machinery, so it is also used as an independent construction in tests.
    """
    W = rng.standard_normal(X.shape)
    W = W - W.mean(axis=1, keepdims=True) - W.mean(axis=0, keepdims=True) + W.mean()
    return TangentVector(W, X)


def _tangent_array(v, name: str) -> np.ndarray:
    if isinstance(v, TangentVector):
        return v.Y
    return _as_matrix(v, name)


def metric(X: CouplingPoint, xi, eta) -> float:
    """Fisher-information inner product ``sum_ij xi_ij eta_ij / X_ij``.

    ``xi`` and ``eta`` may be :class:`TangentVector` instances (their base
    point must match ``X``) or plain arrays.
    """
    for v in (xi, eta):
        if isinstance(v, TangentVector) and v.base.X is not X.X:
            if not np.array_equal(v.base.X, X.X):
                raise ValueError("tangent vector is based at a different point")
    a = _tangent_array(xi, "xi")
    b = _tangent_array(eta, "eta")
    if a.shape != X.X.shape or b.shape != X.X.shape:
        raise ShapeError("tangent vectors must match the plan shape")
    return X.space.metric_scale * float(np.sum(a * b / X.X))


def _pinv_psd(A: np.ndarray, rcond: float = PINV_RCOND):
    """Pseudo-inverse of a symmetric PSD matrix via eigendecomposition.

    Returns the pseudo-inverse together with spectral diagnostics; raises
    :class:`ProjectionError` when the factorization fails or produces
    non-finite values.
    """
    try:
        w, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - numpy internal
        raise ProjectionError(f"eigendecomposition failed: {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise ProjectionError("eigendecomposition produced non-finite eigenvalues")
    wmax = float(np.abs(w).max()) if w.size else 0.0
    cutoff = rcond * wmax
    keep = np.abs(w) > cutoff
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / w[keep]
    pinv = (V * inv) @ V.T
    kept = w[keep]
    diag = {
        "rank": int(keep.sum()),
        "eig_max": wmax,
        "eig_min_kept": float(np.abs(kept).min()) if kept.size else 0.0,
        "truncated": int((~keep).sum()),
    }
    return pinv, diag


def _projection_system(X: np.ndarray, q: np.ndarray, p: np.ndarray):
    """System matrix ``P - X Q^{-1} X^T`` and its pseudo-inverse."""
    A = np.diag(p) - (X / q) @ X.T
    return _pinv_psd(A)


def _project_raw(X: np.ndarray, p: np.ndarray, q: np.ndarray, Y: np.ndarray,
                 pinv: Optional[np.ndarray] = None):
    """Projection onto zero row/col sums, returning (tangent, alpha, beta)."""
    diag = None
    if pinv is None:
        pinv, diag = _projection_system(X, q, p)
    rhs = Y.sum(axis=1) - X @ (Y.sum(axis=0) / q)
    alpha = pinv @ rhs
    beta = (Y.sum(axis=0) - X.T @ alpha) / q
    T = Y - (alpha[:, None] + beta[None, :]) * X
    return T, alpha, beta, diag


def project_tangent(X: CouplingPoint, Y):
    """Orthogonally project an arbitrary matrix onto the tangent space.

    The projection removes the normal component
    ``(alpha 1^T + 1 beta^T) * X``; orthogonality is with respect to the
    Fisher metric.  Returns the projected tangent vector and the solved
    multipliers with conditioning diagnostics.
    """
    Y = _tangent_array(Y, "Y")
    if Y.shape != X.space.shape:
        raise ShapeError(f"matrix has shape {Y.shape}, expected {X.space.shape}")
    T, alpha, beta, diag = _project_raw(X.X, X.space.p, X.space.q, Y)
    if not np.all(np.isfinite(T)):
        raise ProjectionError(
            "projection produced non-finite values "
            f"(rank {diag['rank']}, eig_max {diag['eig_max']:g})"
        )
    coeffs = ProjectionCoefficients(alpha=alpha, beta=beta, **diag)
    return TangentVector(T, X), coeffs


def riemannian_gradient(X: CouplingPoint, egrad) -> TangentVector:
    """Convert a Euclidean gradient to the Riemannian gradient.

    The Fisher metric turns the Euclidean gradient ``G`` into ``G * X``
    before projection, so that ``g(grad, xi) = <G, xi>`` for every tangent
    direction ``xi``.
    """
    egrad = _as_matrix(egrad, "egrad")
    if egrad.shape != X.space.shape:
        raise ShapeError(f"gradient has shape {egrad.shape}, expected {X.space.shape}")
    tv, _ = project_tangent(X, egrad * X.X)
    if X.space.metric_scale != 1.0:
        tv = tv.scaled(1.0 / X.space.metric_scale)
    return tv


def sinkhorn_knopp_project(space: CouplingSpace, M, eps: float = 1e-10,
                           max_iter: int = 10000) -> SinkhornProjection:
    """Alternating diagonal scaling of a positive matrix onto the manifold.

    Starting from the column scaling ``d2 = q / (M^T 1)`` and the row
    scaling ``d1 = p / (M d2)``, rows and columns are rescaled in turn
    until both marginal residuals (infinity norm) fall below ``eps``.
    Returns the scaled plan together with the two scaling vectors, which
    reproduce it exactly as ``d1[:, None] * M * d2[None, :]``.

    The one-parameter freedom ``(c d1, d2 / c)`` is fixed by rescaling so
    that ``d2[0]`` keeps its initialization value; the plan itself is not
    affected.
    """
    M = _as_matrix(M, "M")
    if M.shape != space.shape:
        raise ShapeError(f"matrix has shape {M.shape}, expected {space.shape}")
    if M.min() <= 0 or not np.all(np.isfinite(M)):
        raise PositivityError(
            "matrix to project must be strictly positive and finite "
            f"(min entry {M.min():g})"
        )
    p, q = space.p, space.q
    d2 = q / M.sum(axis=0)
    d2_init0 = d2[0]
    d1 = p / (M @ d2)
    Mtd1 = M.T @ d1
    residual = np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        d2 = q / Mtd1
        Md2 = M @ d2
        d1 = p / Md2
        Mtd1 = M.T @ d1
        # rows were rescaled last, so their residual is at rounding level;
        # the column residual drives convergence
        residual = max(np.abs(d1 * Md2 - p).max(),
                       np.abs(d2 * Mtd1 - q).max())
        if residual < eps:
            converged = True
            break
    c = d2[0] / d2_init0
    d1, d2 = d1 * c, d2 / c
    plan = (d1[:, None] * M) * d2[None, :]
    return SinkhornProjection(
        plan=plan, d1=d1, d2=d2,
        converged=converged, iterations=it, residual=float(residual),
    )


def retract(X: CouplingPoint, xi, eps: float = 1e-10,
            max_iter: int = 10000) -> CouplingPoint:
    """Multiplicative retraction ``X * exp(xi / X)`` followed by rescaling.

    The element-wise exponent is clamped to ``[-50, 50]`` before
    exponentiation; the scaling projection absorbs the distortion, which
    preserves the first-order behaviour for admissible steps while
    preventing overflow at tiny entries.  Raises :class:`RetractionError`
    if the scaling projection does not converge, and propagates validation
    errors if the result is not a feasible point.
    """
    xi = _tangent_array(xi, "xi")
    if xi.shape != X.space.shape:
        raise ShapeError(f"step has shape {xi.shape}, expected {X.space.shape}")
    Z = np.clip(xi / X.X, -RETRACTION_EXP_CLAMP, RETRACTION_EXP_CLAMP)
    M = X.X * np.exp(Z)
    res = sinkhorn_knopp_project(X.space, M, eps=eps, max_iter=max_iter)
    if not res.converged:
        # a stalled projection may still sit within the space's feasibility
        # tolerance; only a genuinely infeasible result is an error
        try:
            return validate_point(X.space, res.plan)
        except MarginalError as exc:
            raise RetractionError(
                f"scaling projection stalled at residual {res.residual:g} "
                f"after {res.iterations} iterations"
            ) from exc
    return validate_point(X.space, res.plan)


def hessian_workspace(X: CouplingPoint, egrad) -> HessianWorkspace:
    """Direction-independent part of the Hessian operator at ``X``.

    Computes the pseudo-inverse ``mu`` of ``P - X Q^{-1} X^T``, the scaled
    gradient ``eta``, the projection multipliers and the Riemannian
    gradient ``gamma``.  Reuse the workspace to apply the Hessian to many
    directions at the same point.
    """
    egrad = _as_matrix(egrad, "egrad")
    if egrad.shape != X.space.shape:
        raise ShapeError(f"gradient has shape {egrad.shape}, expected {X.space.shape}")
    p, q = X.space.p, X.space.q
    mu, _ = _projection_system(X.X, q, p)
    eta = egrad * X.X
    rhs = eta.sum(axis=1) - X.X @ (eta.sum(axis=0) / q)
    alpha = mu @ rhs
    beta = (eta.sum(axis=0) - X.X.T @ alpha) / q
    gamma = eta - (alpha[:, None] + beta[None, :]) * X.X
    return HessianWorkspace(
        point=X, egrad=egrad, mu=mu, eta=eta,
        alpha=alpha, beta=beta, gamma=gamma, rhs=rhs,
    )


def riemannian_hessian(X: CouplingPoint, egrad, ehess_xi, xi,
                       workspace: Optional[HessianWorkspace] = None) -> TangentVector:
    """Apply the Riemannian Hessian of an objective to a direction.

    ``ehess_xi`` is the Euclidean Hessian of the objective applied to the
    direction ``xi`` (a matrix).  The operator differentiates the gradient
    field through the chain of multipliers and applies the metric
    connection correction ``-(gamma * xi) / (2 X)`` before projecting back
    onto the tangent space.  The directional derivatives are recorded on
    the returned workspace fields when one is supplied.
    """
    xi_arr = _tangent_array(xi, "xi")
    ehess_xi = _as_matrix(ehess_xi, "ehess_xi") if np.ndim(ehess_xi) else \
        np.full(X.space.shape, float(ehess_xi))
    ws = workspace if workspace is not None else hessian_workspace(X, egrad)
    Xa, p, q = X.X, X.space.p, X.space.q
    mu, eta, alpha, beta, gamma = ws.mu, ws.eta, ws.alpha, ws.beta, ws.gamma

    mu_dot = mu @ ((Xa / q) @ xi_arr.T + (xi_arr / q) @ Xa.T) @ mu
    eta_dot = ehess_xi * Xa + ws.egrad * xi_arr
    alpha_dot = mu_dot @ ws.rhs + mu @ (
        eta_dot.sum(axis=1)
        - xi_arr @ (eta.sum(axis=0) / q)
        - Xa @ (eta_dot.sum(axis=0) / q)
    )
    beta_dot = (eta_dot.sum(axis=0) - xi_arr.T @ alpha - Xa.T @ alpha_dot) / q
    gamma_dot = (
        eta_dot
        - (alpha_dot[:, None] + beta_dot[None, :]) * Xa
        - (alpha[:, None] + beta[None, :]) * xi_arr
    )
    ws.mu_dot, ws.eta_dot = mu_dot, eta_dot
    ws.alpha_dot, ws.beta_dot, ws.gamma_dot = alpha_dot, beta_dot, gamma_dot

    H, _, _, _ = _project_raw(Xa, p, q, gamma_dot - 0.5 * (gamma * xi_arr) / Xa,
                              pinv=mu)
    if not np.all(np.isfinite(H)):
        raise ProjectionError("Hessian application produced non-finite values")
    if X.space.metric_scale != 1.0:
        H = H / X.space.metric_scale
    return TangentVector(H, X)
