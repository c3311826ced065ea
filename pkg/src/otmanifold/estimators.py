"""Scikit-learn style estimator wrapping the domain-adaptation transport.

The estimator speaks the sklearn convention (samples as rows, ``fit`` /
``transform`` / ``get_params``) and delegates to the functional core,
which uses columns-as-points matrices internally.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from sklearn.base import BaseEstimator

from .dataops import LabeledPointSet, barycentric_map, class_laplacian
from .geometry import independence_point
from .problems import make_laplacian_da
from .solvers import SolverConfig, rgd, rtr

__all__ = ["ManifoldLaplaceTransport"]


def _check_samples(X, name, n_features=None):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError(f"{name} must be a nonempty 2-d array of samples")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(
            f"{name} has {X.shape[1]} features, expected {n_features}"
        )
    return X


class ManifoldLaplaceTransport(BaseEstimator):
    """Laplacian-regularized transport fitted by manifold optimization.

    Fits a strictly positive coupling between source and target samples by
    minimizing the entropic transport cost plus a class-graph Laplacian
    penalty over the coupling manifold, then maps source samples onto the
    target domain barycentrically.

    Parameters
    ----------
    entropy_weight : float
        Weight of the entropy term (the problem's convexifier).
    laplacian_weight : float
        Weight of the graph-Laplacian regularizer.
    laplacian_mix : float
        Mix in [0, 1] between the source-graph term (0) and the
        target-graph term (1).
    n_neighbors : int
        Neighborhood size of the similarity graphs.
    kernel_width : float or None
        Gaussian kernel width for the graphs; None uses the median
        pairwise distance.
    cost_norm : {"max", None}
        Normalize the squared-distance cost by its maximum entry.
    solver : {"rgd", "rtr"}
    max_iter, grad_tol : solver budget and relative gradient tolerance.
    positivity_floor : float
        Floor of the coupling space; small regularizers need a tiny one.

    Attributes
    ----------
    coupling_ : ndarray of shape (n_source, n_target)
        The fitted transport plan.
    cost_ : ndarray
        The (possibly normalized) cost matrix used in the fit.
    report_ : SolverReport
        Full trace of the manifold solver run.
    """

    def __init__(self, entropy_weight=0.03, laplacian_weight=10.0,
                 laplacian_mix=0.0, n_neighbors=10, kernel_width=None,
                 cost_norm="max", solver="rgd", max_iter=150, grad_tol=1e-5,
                 positivity_floor=1e-300):
        self.entropy_weight = entropy_weight
        self.laplacian_weight = laplacian_weight
        self.laplacian_mix = laplacian_mix
        self.n_neighbors = n_neighbors
        self.kernel_width = kernel_width
        self.cost_norm = cost_norm
        self.solver = solver
        self.max_iter = max_iter
        self.grad_tol = grad_tol
        self.positivity_floor = positivity_floor

    def fit(self, Xs, ys, Xt, yt=None):
        """Fit the coupling between source samples (rows) and target samples.

        ``ys`` drives the class sparsification of the source graph; target
        labels are not used (the target graph is label-free).
        """
        Xs = _check_samples(Xs, "Xs")
        Xt = _check_samples(Xt, "Xt", n_features=Xs.shape[1])
        ys = np.asarray(ys)
        if ys.shape != (Xs.shape[0],):
            raise ValueError("ys must have one label per source sample")
        if self.solver not in ("rgd", "rtr"):
            raise ValueError("solver must be 'rgd' or 'rtr'")
        Fs, Ft = Xs.T, Xt.T
        source = LabeledPointSet(Fs, ys)
        target_plain = LabeledPointSet(Ft, np.zeros(Ft.shape[1], dtype=int))
        kw = dict(k_neighbors=min(self.n_neighbors, Fs.shape[1] - 1),
                  kernel_width=self.kernel_width)
        L_s = class_laplacian(source, **kw)
        L_t = class_laplacian(target_plain, **kw)
        problem = make_laplacian_da(
            Fs, Ft, labels_s=ys,
            lam=self.entropy_weight,
            laplacian_weight=self.laplacian_weight,
            laplacian_mix=self.laplacian_mix,
            L_s=L_s, L_t=L_t,
            positivity_floor=self.positivity_floor,
        )
        if self.cost_norm == "max":
            cmax = problem.cost.max()
            if cmax > 0:
                problem = dataclasses.replace(problem, cost=problem.cost / cmax)
        elif self.cost_norm is not None:
            raise ValueError("cost_norm must be 'max' or None")
        cfg = SolverConfig(max_iter=self.max_iter, grad_tol=self.grad_tol)
        solve = rgd if self.solver == "rgd" else rtr
        report = solve(problem, independence_point(problem.space), cfg)
        self.problem_ = problem
        self.report_ = report
        self.cost_ = problem.cost
        self.coupling_ = report.final_point.X
        self.xs_ = Xs
        self.xt_ = Xt
        return self

    def transform(self, Xs=None):
        """Barycentric image of source samples in the target domain.

        With no argument (or the fitted source), returns the transported
        fitted samples.  New samples are mapped by shifting them with the
        displacement of their nearest fitted source sample.
        """
        if not hasattr(self, "coupling_"):
            raise RuntimeError("transform called before fit")
        transported = barycentric_map(self.report_.final_point, self.xt_.T).T
        if Xs is None:
            return transported
        Xs = _check_samples(Xs, "Xs", n_features=self.xs_.shape[1])
        if Xs.shape == self.xs_.shape and np.array_equal(Xs, self.xs_):
            return transported
        d2 = ((Xs[:, None, :] - self.xs_[None, :, :]) ** 2).sum(axis=2)
        nearest = d2.argmin(axis=1)
        return Xs + (transported[nearest] - self.xs_[nearest])

    def fit_transform(self, Xs, ys, Xt, yt=None):
        return self.fit(Xs, ys, Xt, yt).transform()
