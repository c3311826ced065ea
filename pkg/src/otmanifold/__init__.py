"""Riemannian optimization on the manifold of coupling matrices.

The package solves regularized optimal-transport problems by optimizing
directly over the open set of strictly positive transport plans with fixed
marginals, equipped with the Fisher information metric.  It ships the
geometry kernel, an objective zoo, first- and second-order solvers,
reference baselines (Sinkhorn, exact transportation simplex), data
utilities for the experiment harness and a command-line runner.
"""

__version__ = "0.1.0"

from .geometry import (
    CouplingError,
    CouplingPoint,
    CouplingSpace,
    HessianWorkspace,
    MarginalError,
    PositivityError,
    ProjectionCoefficients,
    ProjectionError,
    RetractionError,
    ShapeError,
    SinkhornProjection,
    TangentVector,
    hessian_workspace,
    independence_point,
    metric,
    project_tangent,
    random_tangent,
    retract,
    riemannian_gradient,
    riemannian_hessian,
    sinkhorn_knopp_project,
    validate_point,
)
from .problems import (
    EntropicParams,
    LaplacianDAParams,
    OrderPreservingParams,
    ProblemInstance,
    SquaredParams,
    TsallisParams,
    make_classic,
    make_entropic,
    make_laplacian_da,
    make_order_preserving,
    make_squared,
    make_tsallis,
)
from .solvers import (
    DerivativeDiagnostics,
    SolverConfig,
    SolverReport,
    check_derivatives,
    rgd,
    rtr,
)
from .baselines import (
    LPResult,
    SinkhornResult,
    lp_exact,
    north_west_corner,
    sinkhorn_entropic,
)
from .dataops import (
    LabeledPointSet,
    barycentric_map,
    class_laplacian,
    knn_classify,
    pairwise_sqdist,
    plan_mse,
    two_moons,
)
from .estimators import ManifoldLaplaceTransport

__all__ = [
    "__version__",
    # geometry
    "CouplingError", "CouplingPoint", "CouplingSpace", "HessianWorkspace",
    "MarginalError", "PositivityError", "ProjectionCoefficients",
    "ProjectionError", "RetractionError", "ShapeError", "SinkhornProjection",
    "TangentVector", "hessian_workspace", "independence_point", "metric",
    "project_tangent", "random_tangent", "retract", "riemannian_gradient",
    "riemannian_hessian", "sinkhorn_knopp_project", "validate_point",
    # problems
    "EntropicParams", "LaplacianDAParams", "OrderPreservingParams",
    "ProblemInstance", "SquaredParams", "TsallisParams", "make_classic",
    "make_entropic", "make_laplacian_da", "make_order_preserving",
    "make_squared", "make_tsallis",
    # solvers
    "DerivativeDiagnostics", "SolverConfig", "SolverReport",
    "check_derivatives", "rgd", "rtr",
    # baselines
    "LPResult", "SinkhornResult", "lp_exact", "north_west_corner",
    "sinkhorn_entropic",
    # dataops
    "LabeledPointSet", "barycentric_map", "class_laplacian", "knn_classify",
    "pairwise_sqdist", "plan_mse", "two_moons",
    # estimators
    "ManifoldLaplaceTransport",
]
