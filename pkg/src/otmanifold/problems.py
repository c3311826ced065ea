"""Objective zoo for optimal-transport problems on the coupling manifold.

Every variant exposes the objective value, the Euclidean gradient and the
Euclidean Hessian-vector product; the solvers turn these into Riemannian
quantities through the geometry module.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import (
    CouplingPoint,
    CouplingSpace,
    PositivityError,
    ShapeError,
    _as_matrix,
)

__all__ = [
    "ProblemInstance",
    "EntropicParams",
    "SquaredParams",
    "TsallisParams",
    "OrderPreservingParams",
    "LaplacianDAParams",
    "make_classic",
    "make_entropic",
    "make_squared",
    "make_tsallis",
    "make_order_preserving",
    "make_laplacian_da",
    "VARIANTS",
]

VARIANTS = ("classic", "entropic", "squared", "tsallis", "order_preserving",
            "laplacian_da")


@dataclass(frozen=True)
class EntropicParams:
    lam: float


@dataclass(frozen=True)
class SquaredParams:
    lam: float


@dataclass(frozen=True)
class TsallisParams:
    lam: float
    qexp: float


@dataclass(frozen=True)
class OrderPreservingParams:
    lambda1: float
    lambda2: float
    sigma: float
    order_prior: np.ndarray      # reward for matching relative positions
    similarity: np.ndarray       # Gaussian similarity of relative positions
    log_similarity: np.ndarray


@dataclass(frozen=True)
class LaplacianDAParams:
    lam: float
    laplacian_weight: float
    laplacian_mix: float
    L_s: np.ndarray
    L_t: np.ndarray
    P_s: np.ndarray              # d x n source features (columns are points)
    P_t: np.ndarray              # d x m target features
    labels_s: Optional[np.ndarray] = None


def _plan_array(X) -> np.ndarray:
    if isinstance(X, CouplingPoint):
        return X.X
    return np.asarray(X, dtype=float)


def _positive_plan(X: np.ndarray) -> np.ndarray:
    if X.min() <= 0:
        raise PositivityError(
            f"objective requires strictly positive plan entries, got min {X.min():g}"
        )
    return X


@dataclass(frozen=True)
class ProblemInstance:
    """An OT objective over a coupling space.

    ``variant`` selects the functional form; ``params`` carries the
    variant-specific record.  Instances are immutable and their evaluation
    methods are pure.
    """

    space: CouplingSpace
    cost: np.ndarray
    variant: str
    params: Optional[object] = None

    def __post_init__(self):
        cost = _as_matrix(self.cost, "cost")
        if cost.shape != self.space.shape:
            raise ShapeError(
                f"cost has shape {cost.shape}, expected {self.space.shape}"
            )
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        object.__setattr__(self, "cost", cost)

    # -- evaluation ----------------------------------------------------

    def objective(self, X) -> float:
        X = _plan_array(X)
        base = float(np.sum(self.cost * X))
        v, pr = self.variant, self.params
        if v == "classic":
            return base
        if v == "entropic":
            Xp = _positive_plan(X)
            return base + pr.lam * float(np.sum(Xp * np.log(Xp)))
        if v == "squared":
            return base + pr.lam * float(np.sum(X * X))
        if v == "tsallis":
            Xp = _positive_plan(X)
            return base - pr.lam / (1.0 - pr.qexp) * float(
                np.sum(Xp ** pr.qexp - Xp))
        if v == "order_preserving":
            Xp = _positive_plan(X)
            lin = float(np.sum((self.cost - pr.lambda1 * pr.order_prior) * X))
            kl = float(np.sum(Xp * (np.log(Xp) - pr.log_similarity)))
            return lin + pr.lambda2 * kl
        # laplacian_da
        Xp = _positive_plan(X)
        val = base + pr.lam * float(np.sum(Xp * np.log(Xp)))
        if pr.laplacian_weight:
            w, mix = pr.laplacian_weight, pr.laplacian_mix
            if mix < 1.0:
                XT = X @ pr.P_t.T                     # n x d
                val += 0.5 * w * (1 - mix) * float(np.sum(XT * (pr.L_s @ XT)))
            if mix > 0.0:
                XS = X.T @ pr.P_s.T                   # m x d
                val += 0.5 * w * mix * float(np.sum(XS * (pr.L_t @ XS)))
        return val

    def egrad(self, X) -> np.ndarray:
        X = _plan_array(X)
        v, pr = self.variant, self.params
        if v == "classic":
            return self.cost.copy()
        if v == "entropic":
            return self.cost + pr.lam * (1.0 + np.log(_positive_plan(X)))
        if v == "squared":
            return self.cost + 2.0 * pr.lam * X
        if v == "tsallis":
            Xp = _positive_plan(X)
            return self.cost - pr.lam / (1.0 - pr.qexp) * (
                pr.qexp * Xp ** (pr.qexp - 1.0) - 1.0)
        if v == "order_preserving":
            Xp = _positive_plan(X)
            return (self.cost - pr.lambda1 * pr.order_prior) + pr.lambda2 * (
                1.0 + np.log(Xp) - pr.log_similarity)
        g = self.cost + pr.lam * (1.0 + np.log(_positive_plan(X)))
        if pr.laplacian_weight:
            w, mix = pr.laplacian_weight, pr.laplacian_mix
            if mix < 1.0:
                g = g + w * (1 - mix) * (pr.L_s @ X @ (pr.P_t.T @ pr.P_t))
            if mix > 0.0:
                g = g + w * mix * ((pr.P_s.T @ pr.P_s) @ X @ pr.L_t)
        return g

    def ehess(self, X, xi) -> np.ndarray:
        X = _plan_array(X)
        xi = np.asarray(xi, dtype=float)
        v, pr = self.variant, self.params
        if v == "classic":
            return np.zeros_like(xi)
        if v == "entropic":
            return pr.lam * xi / _positive_plan(X)
        if v == "squared":
            return 2.0 * pr.lam * xi
        if v == "tsallis":
            Xp = _positive_plan(X)
            return pr.qexp * pr.lam * (Xp ** (pr.qexp - 2.0) * xi)
        if v == "order_preserving":
            return pr.lambda2 * xi / _positive_plan(X)
        h = pr.lam * xi / _positive_plan(X)
        if pr.laplacian_weight:
            w, mix = pr.laplacian_weight, pr.laplacian_mix
            if mix < 1.0:
                h = h + w * (1 - mix) * (pr.L_s @ xi @ (pr.P_t.T @ pr.P_t))
            if mix > 0.0:
                h = h + w * mix * ((pr.P_s.T @ pr.P_s) @ xi @ pr.L_t)
        return h


# -- factories ---------------------------------------------------------


def make_classic(space: CouplingSpace, C) -> ProblemInstance:
    """Linear transport cost ``sum_ij C_ij X_ij``."""
    return ProblemInstance(space, C, "classic")


def make_entropic(space: CouplingSpace, C, lam: float) -> ProblemInstance:
    """Transport cost minus ``lam`` times the plan entropy.

    Strictly convex for ``lam > 0``; its unique minimizer is the diagonal
    rescaling of ``exp(-C / lam)`` onto the marginals.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    return ProblemInstance(space, C, "entropic", EntropicParams(lam))


def make_squared(space: CouplingSpace, C, lam: float) -> ProblemInstance:
    """Transport cost plus the squared penalty ``lam * sum X_ij^2``.

    The zero-truncation guard of the squared penalty is vacuous on the
    manifold (points are strictly positive), which construction asserts.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    return ProblemInstance(space, C, "squared", SquaredParams(lam))


def make_tsallis(space: CouplingSpace, C, lam: float, qexp: float) -> ProblemInstance:
    """Power-function generalization of the entropy penalty.

    The regularizer is ``-lam / (1 - q) * sum(X^q - X)`` with exponent
    ``q > 0``, ``q != 1``; the ``q -> 1`` limit is the entropic problem and
    is rejected here (use :func:`make_entropic`).
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    if qexp <= 0:
        raise ValueError("qexp must be positive")
    if qexp == 1.0:
        raise ValueError("qexp = 1 is the entropic limit; use make_entropic")
    return ProblemInstance(space, C, "tsallis", TsallisParams(lam, qexp))


def order_preserving_matrices(n: int, m: int, sigma: float):
    """Order prior ``D`` and position-similarity ``P`` for two sequences.

    Indices are 1-based in the relative positions ``i/n`` and ``j/m``, so
    the diagonal of ``D`` equals 1 when ``n == m``.
    """
    i = np.arange(1, n + 1)[:, None] / n
    j = np.arange(1, m + 1)[None, :] / m
    rel = i - j
    D = 1.0 / (rel ** 2 + 1.0)
    ell = np.abs(rel) / np.sqrt(1.0 / n ** 2 + 1.0 / m ** 2)
    P = np.exp(-(ell ** 2) / (2.0 * sigma ** 2)) / (sigma * np.sqrt(2.0 * np.pi))
    return D, P


def make_order_preserving(U, V, sigma: float = 1.0, lambda1: float = 50.0,
                          lambda2: float = 0.1,
                          positivity_floor: float = 1e-300) -> ProblemInstance:
    """Sequence-alignment transport between step sequences ``U`` and ``V``.

    ``U`` and ``V`` are arrays whose rows are the d-dimensional steps of
    each sequence.  The cost is the squared Euclidean distance between
    steps; a temporal-alignment reward ``lambda1 * D`` and a KL term
    against the position-similarity matrix ``P`` (non-normalized form,
    ``sum X (log X - log P)``) shape the plan.  Marginals are uniform.

    With the default hyperparameters the optimal plan concentrates sharply
    near the diagonal, so the space is built with a tiny positivity floor
    to keep legitimately small routes feasible.
    """
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    if V.ndim == 1:
        V = V[:, None]
    if U.size == 0 or V.size == 0:
        raise ShapeError("sequences must be nonempty")
    if U.shape[1] != V.shape[1]:
        raise ShapeError(
            f"sequences have different feature dimensions: {U.shape[1]} vs {V.shape[1]}"
        )
    if sigma <= 0 or lambda1 <= 0 or lambda2 <= 0:
        raise ValueError("sigma, lambda1 and lambda2 must be positive")
    n, m = U.shape[0], V.shape[0]
    diff = U[:, None, :] - V[None, :, :]
    C = np.sum(diff * diff, axis=2)
    D, P = order_preserving_matrices(n, m, sigma)
    space = CouplingSpace(np.full(n, 1.0 / n), np.full(m, 1.0 / m),
                          positivity_floor=positivity_floor)
    params = OrderPreservingParams(
        lambda1=lambda1, lambda2=lambda2, sigma=sigma,
        order_prior=D, similarity=P, log_similarity=np.log(P),
    )
    return ProblemInstance(space, C, "order_preserving", params)


def _check_laplacian(L: np.ndarray, size: int, name: str):
    L = _as_matrix(L, name)
    if L.shape != (size, size):
        raise ShapeError(f"{name} has shape {L.shape}, expected ({size}, {size})")
    if np.abs(L - L.T).max() > 1e-10:
        raise ValueError(f"{name} must be symmetric")
    if np.abs(L.sum(axis=1)).max() > 1e-10:
        raise ValueError(f"{name} row sums exceed 1e-10; not a graph Laplacian")
    return L


def make_laplacian_da(P_s, P_t, labels_s=None, lam: float = 0.01,
                      laplacian_weight: float = 0.1, laplacian_mix: float = 0.0,
                      L_s=None, L_t=None, marginals=None,
                      positivity_floor: float = 1e-300) -> ProblemInstance:
    """Domain-adaptation transport with graph-Laplacian regularization.

    ``P_s`` (d x n) and ``P_t`` (d x m) hold the source and target points
    as columns.  The objective is the entropic transport cost plus
    ``laplacian_weight / 2`` times a mix of the source term
    ``Tr(P_t^T X^T L_s X P_t)`` (written with points as rows) and the
    symmetric target term; ``laplacian_mix`` in [0, 1] balances the two.

    Marginals default to the uniform distributions ``1/n`` and ``1/m``,
    matching the barycentric-mapping convention; pass ``marginals=(p, q)``
    to override.
    """
    P_s = _as_matrix(P_s, "P_s")
    P_t = _as_matrix(P_t, "P_t")
    if P_s.shape[0] != P_t.shape[0]:
        raise ShapeError(
            f"feature dimensions disagree: {P_s.shape[0]} vs {P_t.shape[0]}"
        )
    n, m = P_s.shape[1], P_t.shape[1]
    if lam <= 0:
        raise ValueError("lam must be positive")
    if laplacian_weight < 0:
        raise ValueError("laplacian_weight must be nonnegative")
    if not 0.0 <= laplacian_mix <= 1.0:
        raise ValueError("laplacian_mix must lie in [0, 1]")
    if L_s is None:
        L_s = np.zeros((n, n))
    if L_t is None:
        L_t = np.zeros((m, m))
    L_s = _check_laplacian(L_s, n, "L_s")
    L_t = _check_laplacian(L_t, m, "L_t")
    if marginals is None:
        p = np.full(n, 1.0 / n)
        q = np.full(m, 1.0 / m)
    else:
        p, q = (np.asarray(v, dtype=float) for v in marginals)
    space = CouplingSpace(p, q, positivity_floor=positivity_floor)
    diff_sq = (
        (P_s * P_s).sum(axis=0)[:, None]
        + (P_t * P_t).sum(axis=0)[None, :]
        - 2.0 * P_s.T @ P_t
    )
    C = np.maximum(diff_sq, 0.0)
    labels = None if labels_s is None else np.asarray(labels_s)
    params = LaplacianDAParams(
        lam=lam, laplacian_weight=laplacian_weight, laplacian_mix=laplacian_mix,
        L_s=L_s, L_t=L_t, P_s=P_s, P_t=P_t, labels_s=labels,
    )
    return ProblemInstance(space, C, "laplacian_da", params)
