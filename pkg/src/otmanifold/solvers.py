"""First- and second-order Riemannian solvers over the coupling manifold."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .geometry import (
    CouplingPoint,
    CouplingError,
    ProjectionError,
    RetractionError,
    TangentVector,
    hessian_workspace,
    metric,
    project_tangent,
    random_tangent,
    retract,
    riemannian_gradient,
    riemannian_hessian,
    validate_point,
)
from .problems import ProblemInstance

__all__ = [
    "SolverConfig",
    "SolverReport",
    "DerivativeDiagnostics",
    "rgd",
    "rtr",
    "check_derivatives",
]

MAX_BACKTRACKS = 60


@dataclass(frozen=True)
class SolverConfig:
    """Knobs shared by the gradient-descent and trust-region solvers.

    The stopping rule is ``|grad|_g <= grad_tol * (1 + |f|)``.  Line-search
    parameters apply to :func:`rgd` (``step_mode="constant"`` disables
    backtracking and uses ``initial_step`` verbatim, for ablations);
    ``tr_*`` and ``inner_cg_*`` apply to :func:`rtr`.
    """

    max_iter: int = 5000
    grad_tol: float = 1e-6
    initial_step: float = 1.0
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    step_growth: float = 2.0
    max_step: float = 1e12
    step_mode: str = "armijo"
    tr_initial_radius: float = 1.0
    tr_max_radius: float = 100.0
    tr_accept_rho: float = 0.1
    inner_cg_tol: float = 0.1
    inner_cg_max: int = 100
    retraction_eps: float = 1e-10
    retraction_max_iter: int = 10000

    def __post_init__(self):
        positive = (
            "max_iter grad_tol initial_step armijo_c backtrack_factor "
            "step_growth max_step tr_initial_radius tr_max_radius "
            "tr_accept_rho inner_cg_tol inner_cg_max retraction_eps "
            "retraction_max_iter"
        ).split()
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not self.armijo_c < 1:
            raise ValueError("armijo_c must be < 1")
        if not self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must be < 1")
        if self.step_mode not in ("armijo", "constant"):
            raise ValueError("step_mode must be 'armijo' or 'constant'")


@dataclass
class SolverReport:
    """Outcome of a solver run.

    ``objective_trace[k]`` is the objective after ``k`` steps (entry 0 is
    the starting value; the trust region repeats the value on rejected
    steps), with ``gradnorm_trace`` aligned to it.  ``status`` is one of
    ``converged``, ``max_iter``, ``line_search_failed`` or
    ``numerical_error``.
    """

    final_point: CouplingPoint
    objective_trace: List[float]
    gradnorm_trace: List[float]
    step_trace: List[float]
    iterations: int
    status: str
    wall_time: float
    solver: str
    notes: List[str] = field(default_factory=list)

    @property
    def final_objective(self) -> float:
        return self.objective_trace[-1]

    def to_dict(self, include_plan: bool = True,
                include_wall_time: bool = True) -> dict:
        d = {
            "solver": self.solver,
            "status": self.status,
            "iterations": self.iterations,
            "objective_trace": list(map(float, self.objective_trace)),
            "gradnorm_trace": list(map(float, self.gradnorm_trace)),
            "step_trace": list(map(float, self.step_trace)),
            "notes": list(self.notes),
        }
        if include_wall_time:
            d["wall_time"] = self.wall_time
        if include_plan:
            d["final_plan"] = self.final_point.X.tolist()
        return d

    def iteration_rows(self):
        """Per-iteration rows (iteration, objective, gradnorm, step)."""
        rows = []
        for k, f in enumerate(self.objective_trace):
            g = self.gradnorm_trace[k] if k < len(self.gradnorm_trace) else ""
            s = self.step_trace[k - 1] if 0 < k <= len(self.step_trace) else ""
            rows.append((k, f, g, s))
        return rows


def _grad_norm(X: CouplingPoint, G: np.ndarray) -> float:
    return float(np.sqrt(X.space.metric_scale * np.sum(G * G / X.X)))


def rgd(problem: ProblemInstance, x0: CouplingPoint,
        cfg: Optional[SolverConfig] = None) -> SolverReport:
    """Riemannian gradient descent with Armijo backtracking.

    Each step retracts ``-alpha * grad`` with the multiplicative
    retraction.  The accepted step size warm-starts the next line search
    (grown by ``step_growth``), which matters near the boundary where the
    metric stiffens.  Every iterate is validated against the space.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    X = validate_point(problem.space, x0.X if isinstance(x0, CouplingPoint) else x0)
    try:
        f = problem.objective(X)
    except CouplingError as exc:
        raise ValueError(f"objective undefined at the starting point: {exc}")
    objective_trace = [f]
    gradnorm_trace: List[float] = []
    step_trace: List[float] = []
    notes: List[str] = []
    status = "max_iter"
    step = cfg.initial_step
    iterations = 0
    for it in range(cfg.max_iter):
        try:
            G = riemannian_gradient(X, problem.egrad(X))
        except (ProjectionError, CouplingError) as exc:
            status = "numerical_error"
            notes.append(f"gradient failed at iteration {it}: {exc}")
            break
        gn = G.norm()
        gradnorm_trace.append(gn)
        if gn <= cfg.grad_tol * (1.0 + abs(f)):
            status = "converged"
            break
        iterations = it + 1
        gn2 = gn * gn
        if cfg.step_mode == "constant":
            alpha = cfg.initial_step
            try:
                Xn = retract(X, G.scaled(-alpha), eps=cfg.retraction_eps,
                             max_iter=cfg.retraction_max_iter)
                fn = problem.objective(Xn)
                if not np.isfinite(fn):
                    raise ValueError("non-finite objective")
            except (CouplingError, RetractionError, ValueError) as exc:
                status = "numerical_error"
                notes.append(f"constant step failed at iteration {it}: {exc}")
                break
            accepted = True
        else:
            alpha = step
            accepted = False
            for _ in range(MAX_BACKTRACKS):
                try:
                    Xn = retract(X, G.scaled(-alpha), eps=cfg.retraction_eps,
                                 max_iter=cfg.retraction_max_iter)
                    fn = problem.objective(Xn)
                    # the strict inequality rejects steps whose sufficient-
                    # decrease margin underflows against |f|
                    if (np.isfinite(fn) and fn < f
                            and fn <= f - cfg.armijo_c * alpha * gn2):
                        accepted = True
                        break
                except (CouplingError, RetractionError):
                    pass
                alpha *= cfg.backtrack_factor
            if not accepted:
                status = "line_search_failed"
                notes.append(f"line search exhausted {MAX_BACKTRACKS} backtracks "
                             f"at iteration {it}")
                break
            step = min(alpha * cfg.step_growth, cfg.max_step)
        X, f = Xn, fn
        objective_trace.append(f)
        step_trace.append(alpha)
    else:
        # gradient norm of the last iterate, for a complete trace
        try:
            G = riemannian_gradient(X, problem.egrad(X))
            gradnorm_trace.append(G.norm())
        except (ProjectionError, CouplingError):
            pass
    return SolverReport(
        final_point=X,
        objective_trace=objective_trace,
        gradnorm_trace=gradnorm_trace,
        step_trace=step_trace,
        iterations=iterations,
        status=status,
        wall_time=time.perf_counter() - t0,
        solver="rgd",
        notes=notes,
    )


def _truncated_cg(X: CouplingPoint, G: np.ndarray, hess_apply, Delta: float,
                  cfg: SolverConfig):
    """Steihaug-Toint truncated CG for the trust-region subproblem.

    Minimizes the local quadratic model over the tangent space, stopping
    at negative curvature or the trust-region boundary.  Returns the step,
    its Hessian image and the stop reason.
    """
    scale = X.space.metric_scale

    def inner(a, b):
        return scale * float(np.sum(a * b / X.X))

    eta = np.zeros_like(G)
    Heta = np.zeros_like(G)
    r = G.copy()
    r_r = inner(r, r)
    norm_r0 = np.sqrt(r_r)
    d = -r
    e_Pe = 0.0
    max_inner = min(cfg.inner_cg_max, X.space.dim)
    for k in range(max_inner):
        Hd = hess_apply(d)
        d_Hd = inner(d, Hd)
        e_Pd = inner(eta, d)
        d_Pd = inner(d, d)
        if d_Hd <= 0:
            tau = _boundary_tau(e_Pe, e_Pd, d_Pd, Delta)
            return eta + tau * d, Heta + tau * Hd, k + 1, "negative_curvature"
        alpha = r_r / d_Hd
        e_Pe_new = e_Pe + 2.0 * alpha * e_Pd + alpha * alpha * d_Pd
        if e_Pe_new >= Delta * Delta:
            tau = _boundary_tau(e_Pe, e_Pd, d_Pd, Delta)
            return eta + tau * d, Heta + tau * Hd, k + 1, "boundary"
        eta = eta + alpha * d
        Heta = Heta + alpha * Hd
        e_Pe = e_Pe_new
        r = r + alpha * Hd
        r_r_new = inner(r, r)
        if np.sqrt(r_r_new) <= norm_r0 * min(cfg.inner_cg_tol, norm_r0):
            return eta, Heta, k + 1, "converged"
        d = -r + (r_r_new / r_r) * d
        r_r = r_r_new
    return eta, Heta, max_inner, "max_inner"


def _boundary_tau(e_Pe, e_Pd, d_Pd, Delta):
    disc = e_Pd * e_Pd + d_Pd * (Delta * Delta - e_Pe)
    return (-e_Pd + np.sqrt(max(disc, 0.0))) / d_Pd


def rtr(problem: ProblemInstance, x0: CouplingPoint,
        cfg: Optional[SolverConfig] = None) -> SolverReport:
    """Riemannian trust-region solver with a truncated-CG inner loop.

    Uses the analytic Hessian operator of the problem; if a Hessian
    application breaks down the outer iteration falls back to a gradient
    (Cauchy) step and records the event.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    X = validate_point(problem.space, x0.X if isinstance(x0, CouplingPoint) else x0)
    f = problem.objective(X)
    objective_trace = [f]
    gradnorm_trace: List[float] = []
    step_trace: List[float] = []
    notes: List[str] = []
    status = "max_iter"
    Delta = cfg.tr_initial_radius
    iterations = 0
    scale = problem.space.metric_scale
    for it in range(cfg.max_iter):
        try:
            egrad_mat = problem.egrad(X)
            ws = hessian_workspace(X, egrad_mat)
        except (ProjectionError, CouplingError) as exc:
            status = "numerical_error"
            notes.append(f"gradient failed at iteration {it}: {exc}")
            break
        G = ws.gamma / scale
        gn = _grad_norm(X, G)
        gradnorm_trace.append(gn)
        if gn <= cfg.grad_tol * (1.0 + abs(f)):
            status = "converged"
            break
        iterations = it + 1

        def hess_apply(d):
            return riemannian_hessian(X, egrad_mat, problem.ehess(X, d), d,
                                      workspace=ws).Y

        try:
            eta, Heta, _, stop_reason = _truncated_cg(X, G, hess_apply, Delta, cfg)
            if not np.all(np.isfinite(eta)):
                raise ProjectionError("inner solve produced non-finite step")
        except (ProjectionError, CouplingError) as exc:
            notes.append(f"hessian fallback at iteration {it}: {exc}")
            gnorm = max(gn, 1e-300)
            eta = (-min(Delta, gnorm) / gnorm) * G
            Heta = np.zeros_like(G)
            stop_reason = "fallback"
        try:
            Xp = retract(X, TangentVector(eta, X), eps=cfg.retraction_eps,
                         max_iter=cfg.retraction_max_iter)
            fp = problem.objective(Xp)
        except (CouplingError, RetractionError):
            Delta *= 0.25
            step_trace.append(0.0)
            objective_trace.append(f)
            continue
        rho_num = f - fp
        rho_den = -scale * float(np.sum(G * eta / X.X)) \
            - 0.5 * scale * float(np.sum(eta * Heta / X.X))
        reg = max(1.0, abs(f)) * np.finfo(float).eps * 1e3
        rho = (rho_num + reg) / (rho_den + reg)
        if rho < 0.25 or rho_den <= 0 or not np.isfinite(rho):
            Delta *= 0.25
        elif rho > 0.75 and stop_reason in ("boundary", "negative_curvature"):
            Delta = min(2.0 * Delta, cfg.tr_max_radius)
        if (rho > cfg.tr_accept_rho and rho_den > 0 and np.isfinite(fp)
                and fp <= f):
            X, f = Xp, fp
            step_trace.append(_grad_norm(X, eta))
        else:
            step_trace.append(0.0)
        objective_trace.append(f)
        if Delta < 1e-14 * cfg.tr_initial_radius:
            # the radius collapsed: no acceptable step exists at this
            # precision, so report it like an exhausted line search
            status = "line_search_failed"
            notes.append(f"trust-region radius collapsed at iteration {it}")
            break
    return SolverReport(
        final_point=X,
        objective_trace=objective_trace,
        gradnorm_trace=gradnorm_trace,
        step_trace=step_trace,
        iterations=iterations,
        status=status,
        wall_time=time.perf_counter() - t0,
        solver="rtr",
        notes=notes,
    )


@dataclass
class DerivativeDiagnostics:
    """Relative errors of analytic derivatives against central differences."""

    grad_errors: List[float]
    hess_errors: List[float]
    grad_max_error: float
    hess_max_error: float
    trials: int
    fd_step: float


def check_derivatives(problem: ProblemInstance, X: CouplingPoint,
                      trials: int = 10, seed: int = 0,
                      fd_step: float = 1e-5) -> DerivativeDiagnostics:
    """Validate gradient and Hessian along random retracted curves.

    For each unit-norm random tangent direction the directional derivative
    of the objective along the retraction is compared with the metric
    pairing of the Riemannian gradient, and the analytic Hessian is
    compared with a central difference of the gradient field plus the
    metric-connection correction.  Zero directions cannot occur (Gaussian
    draws are normalized).  Diagnostics are always returned.
    """
    rng = np.random.default_rng(seed)
    X = validate_point(problem.space, X.X if isinstance(X, CouplingPoint) else X)
    t = fd_step
    grad_errors, hess_errors = [], []
    egrad_mat = problem.egrad(X)
    G = riemannian_gradient(X, egrad_mat)
    f0 = problem.objective(X)
    for _ in range(trials):
        xi = random_tangent(X, rng)
        nrm = xi.norm()
        while nrm == 0.0:  # exclude the degenerate zero direction
            xi = random_tangent(X, rng)
            nrm = xi.norm()
        xi = xi.scaled(1.0 / nrm)
        Rp = retract(X, xi.scaled(t), eps=1e-14)
        Rm = retract(X, xi.scaled(-t), eps=1e-14)
        fd = (problem.objective(Rp) - problem.objective(Rm)) / (2.0 * t)
        analytic = metric(X, G, xi)
        grad_errors.append(abs(fd - analytic) / (1.0 + abs(f0)))

        Gp = riemannian_gradient(Rp, problem.egrad(Rp)).Y
        Gm = riemannian_gradient(Rm, problem.egrad(Rm)).Y
        gdot = (Gp - Gm) / (2.0 * t)
        corr = gdot - 0.5 * (G.Y * xi.Y) / X.X
        Hfd, _ = project_tangent(X, corr)
        H = riemannian_hessian(X, egrad_mat, problem.ehess(X, xi.Y), xi)
        denom = max(_grad_norm(X, H.Y), 1e-12)
        hess_errors.append(_grad_norm(X, H.Y - Hfd.Y) / denom)
    return DerivativeDiagnostics(
        grad_errors=grad_errors,
        hess_errors=hess_errors,
        grad_max_error=max(grad_errors),
        hess_max_error=max(hess_errors),
        trials=trials,
        fd_step=fd_step,
    )
