"""Data generation and evaluation utilities for the experiment harness."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .geometry import CouplingPoint, ShapeError

__all__ = [
    "LabeledPointSet",
    "two_moons",
    "class_laplacian",
    "barycentric_map",
    "knn_classify",
    "plan_mse",
    "pairwise_sqdist",
]


@dataclass(frozen=True)
class LabeledPointSet:
    """Feature matrix (d x k, columns are points) with integer labels."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels)
        if f.ndim != 2:
            raise ShapeError(f"features must be 2-d, got shape {f.shape}")
        if y.ndim != 1 or y.size != f.shape[1]:
            raise ShapeError(
                f"labels length {y.size} does not match {f.shape[1]} points"
            )
        if y.size and y.min() < 0:
            raise ValueError("labels must be nonnegative integers")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "labels", y.astype(int))

    @property
    def n_points(self) -> int:
        return self.features.shape[1]

    @property
    def dim(self) -> int:
        return self.features.shape[0]

    def to_csv(self, path):
        """One row per point: feature values then the label."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for i in range(self.n_points):
                w.writerow([*(repr(float(v)) for v in self.features[:, i]),
                            int(self.labels[i])])

    @classmethod
    def from_csv(cls, path) -> "LabeledPointSet":
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if row:
                    rows.append(row)
        feats = np.array([[float(v) for v in r[:-1]] for r in rows]).T
        labels = np.array([int(r[-1]) for r in rows])
        return cls(feats, labels)

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump({"features": self.features.tolist(),
                       "labels": self.labels.tolist()}, fh)

    @classmethod
    def from_json(cls, path) -> "LabeledPointSet":
        with open(path) as fh:
            d = json.load(fh)
        return cls(np.asarray(d["features"], dtype=float),
                   np.asarray(d["labels"], dtype=int))


def two_moons(n_per_class: int, rotation_deg: float, noise_std: float,
              seed: int) -> LabeledPointSet:
    """Two interleaved noisy half-circles, rotated about their centroid.

    Class 0 sits on the upper half-circle, class 1 on the lower one offset
    to interleave.  Arc positions are sampled uniformly, Gaussian noise of
    scale ``noise_std`` is added, and the whole cloud is rotated by
    ``rotation_deg`` about its centroid.  Deterministic for a given seed.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be at least 1")
    if not 0.0 <= rotation_deg <= 180.0:
        raise ValueError("rotation_deg must lie in [0, 180]")
    rng = np.random.default_rng(seed)
    t0 = rng.uniform(0.0, np.pi, n_per_class)
    t1 = rng.uniform(0.0, np.pi, n_per_class)
    upper = np.stack([np.cos(t0), np.sin(t0)], axis=0)
    lower = np.stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)], axis=0)
    X = np.concatenate([upper, lower], axis=1)
    X = X + noise_std * rng.standard_normal(X.shape)
    centroid = X.mean(axis=1, keepdims=True)
    th = np.deg2rad(rotation_deg)
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    X = R @ (X - centroid) + centroid
    labels = np.concatenate([
        np.zeros(n_per_class, dtype=int), np.ones(n_per_class, dtype=int)
    ])
    return LabeledPointSet(X, labels)


def pairwise_sqdist(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between columns of A (d x n) and B (d x m)."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape[0] != B.shape[0]:
        raise ShapeError(
            f"feature dimensions disagree: {A.shape[0]} vs {B.shape[0]}"
        )
    D = (
        (A * A).sum(axis=0)[:, None]
        + (B * B).sum(axis=0)[None, :]
        - 2.0 * A.T @ B
    )
    return np.maximum(D, 0.0)


def class_laplacian(data: LabeledPointSet, k_neighbors: int = 5,
                    kernel_width: float = None) -> np.ndarray:
    """Graph Laplacian of the class-sparsified Gaussian k-NN similarity.

    Similarities ``exp(-|x_i - x_j|^2 / (2 w^2))`` are kept on a
    symmetrized k-nearest-neighbor graph, zeroed between points of
    different classes, and turned into ``L = diag(S 1) - S``.  The kernel
    width defaults to the median pairwise distance.  A class reduced to a
    single point simply contributes zero rows.
    """
    k = data.n_points
    if k_neighbors >= k:
        raise ValueError("k_neighbors must be smaller than the point count")
    D2 = pairwise_sqdist(data.features, data.features)
    if kernel_width is None:
        off = D2[~np.eye(k, dtype=bool)]
        kernel_width = float(np.median(np.sqrt(off))) if off.size else 1.0
    if kernel_width <= 0:
        raise ValueError("kernel_width must be positive")
    D2_inf = D2.copy()
    np.fill_diagonal(D2_inf, np.inf)
    S = np.exp(-D2 / (2.0 * kernel_width ** 2))
    order = np.argsort(D2_inf, axis=1, kind="stable")[:, :k_neighbors]
    mask = np.zeros((k, k), dtype=bool)
    mask[np.repeat(np.arange(k), k_neighbors), order.ravel()] = True
    mask |= mask.T
    S = np.where(mask, S, 0.0)
    same = data.labels[:, None] == data.labels[None, :]
    S = np.where(same, S, 0.0)
    np.fill_diagonal(S, 0.0)
    return np.diag(S.sum(axis=1)) - S


def barycentric_map(X: CouplingPoint, P_t: np.ndarray) -> np.ndarray:
    """Transport source points to plan-weighted averages of target points.

    ``P_t`` holds the target points as columns (d x m).  Row ``i`` of the
    plan, normalized by its sum (the source marginal), gives the weights
    of the transported source point ``i``; with uniform marginals this is
    the plan times the target points scaled by n.  Returns a d x n matrix.
    """
    P_t = np.asarray(P_t, dtype=float)
    if P_t.ndim != 2 or P_t.shape[1] != X.space.m:
        raise ShapeError(
            f"target features have shape {P_t.shape}, expected (d, {X.space.m})"
        )
    weights = X.X / X.X.sum(axis=1, keepdims=True)
    return P_t @ weights.T


def knn_classify(train: LabeledPointSet, test_features: np.ndarray,
                 k: int = 5) -> np.ndarray:
    """Majority-vote k-nearest-neighbor labels for the test columns.

    Vote ties are broken by the smallest total distance among the tied
    labels, then by the smallest label.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if train.n_points == 0:
        raise ValueError("training set is empty")
    k = min(k, train.n_points)
    test_features = np.asarray(test_features, dtype=float)
    D2 = pairwise_sqdist(test_features, train.features)
    order = np.argsort(D2, axis=1, kind="stable")[:, :k]
    preds = np.empty(D2.shape[0], dtype=int)
    for i in range(D2.shape[0]):
        neigh = order[i]
        lab = train.labels[neigh]
        values, counts = np.unique(lab, return_counts=True)
        tied = values[counts == counts.max()]
        if tied.size == 1:
            preds[i] = tied[0]
            continue
        dists = np.sqrt(D2[i, neigh])
        totals = [dists[lab == b].sum() for b in tied]
        best = np.flatnonzero(totals == np.min(totals))
        preds[i] = int(tied[best[0]])  # values sorted, so smallest label wins
    return preds


def plan_mse(A: np.ndarray, B: np.ndarray) -> float:
    """Mean squared entrywise difference between two equally shaped plans."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise ShapeError(f"shape mismatch: {A.shape} vs {B.shape}")
    return float(np.mean((A - B) ** 2))
