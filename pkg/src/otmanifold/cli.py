"""Command-line experiment runner.

Subcommands
-----------
solve         solve one transport problem from a descriptor, with baselines
sweep-lambda  entropic solver vs Sinkhorn over a regularizer grid
opw-dist      sequence distance from the order-preserving transport plan
domain-adapt  two-moons domain adaptation table
check         numerical derivative diagnostics for a problem

Every run writes a ``config.json`` embedding the resolved configuration,
its hash and the seed; artifact files carry the same hash so reruns are
diffable.  Exit codes: 0 success, 1 solver failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .baselines import lp_exact, sinkhorn_entropic
from .dataops import LabeledPointSet, knn_classify, plan_mse, two_moons
from .estimators import ManifoldLaplaceTransport
from .fileio import (
    ConfigError,
    config_hash,
    load_problem,
    load_solver_config,
    save_matrix,
    write_report_csv,
    write_report_json,
)
from .geometry import CouplingError, independence_point
from .problems import make_entropic
from .solvers import check_derivatives, rgd, rtr

DEFAULT_ANGLES = (10, 20, 30, 40, 50, 60, 70, 80, 90)


def _fail(code: int, message: str, field: str = ""):
    payload = {"error": message}
    if field:
        payload["field"] = field
    print(json.dumps(payload))
    return code


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            config = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", "config")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}", "config")
    if not isinstance(config, dict):
        raise ConfigError("config file must contain a JSON object", "config")
    return config


def _prepare_out(out_dir):
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def _write_run_config(out_dir, command, config, seed):
    resolved = {"command": command, "config": config, "seed": seed,
                "version": __version__}
    h = config_hash(resolved)
    resolved["config_hash"] = h
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump(resolved, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return h


def _solver_fn(name):
    if name == "rgd":
        return rgd
    if name == "rtr":
        return rtr
    raise ConfigError(f"unknown solver {name!r}", "solver")


# -- solve ---------------------------------------------------------------


def cmd_solve(args) -> int:
    config = _load_config(args.config)
    if args.lam is not None:
        config.setdefault("problem", {})
        if isinstance(config["problem"], dict):
            config["problem"].setdefault("params", {})["lam"] = args.lam
        else:
            raise ConfigError(
                "--lambda override requires an inline problem descriptor",
                "lambda")
    if "problem" not in config:
        raise ConfigError("config is missing 'problem'", "problem")
    base_dir = os.path.dirname(os.path.abspath(args.config)) if args.config else "."
    problem = load_problem(config["problem"], base_dir=base_dir)
    cfg = load_solver_config(config.get("solver_config"))
    solver_name = args.solver or config.get("solver", "rgd")
    solve = _solver_fn(solver_name)
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    out = _prepare_out(args.out)
    h = _write_run_config(out, "solve", config, seed)
    stamp = f"config_hash={h} seed={seed}"

    report = solve(problem, independence_point(problem.space), cfg)
    plan = report.final_point.X
    save_matrix(os.path.join(out, "plan.txt"), plan, header_comment=stamp)
    save_matrix(os.path.join(out, "plan.json"), plan, header_comment=stamp)
    write_report_csv(os.path.join(out, "report.csv"), report,
                     header_comment=stamp)
    write_report_json(os.path.join(out, "report.json"), report,
                      include_wall_time=False,
                      extra={"config_hash": h, "seed": seed})

    comparison = {"config_hash": h, "seed": seed,
                  "solver": solver_name, "status": report.status,
                  "objective": report.final_objective}
    if problem.variant == "classic":
        lp = lp_exact(problem.cost, problem.space.p, problem.space.q)
        save_matrix(os.path.join(out, "lp_plan.txt"), lp.plan,
                    header_comment=stamp)
        save_matrix(os.path.join(out, "lp_plan.json"), lp.plan,
                    header_comment=stamp)
        comparison.update({
            "lp_cost": lp.cost,
            "cmm_cost": float(np.sum(problem.cost * plan)),
            "gap": float(np.sum(problem.cost * plan)) - lp.cost,
            "relative_gap": (float(np.sum(problem.cost * plan)) - lp.cost)
            / max(abs(lp.cost), 1e-300),
            "lp_nonzeros": int((lp.plan > 1e-12).sum()),
        })
    elif problem.variant == "entropic":
        sk = sinkhorn_entropic(problem.cost, problem.space.p, problem.space.q,
                               problem.params.lam)
        save_matrix(os.path.join(out, "sinkhorn_plan.json"), sk.plan,
                    header_comment=stamp)
        comparison.update({
            "sinkhorn_status": sk.status,
            "plan_mse": plan_mse(plan, sk.plan) if np.all(np.isfinite(sk.plan))
            else None,
        })
    with open(os.path.join(out, "comparison.json"), "w") as fh:
        json.dump(comparison, fh, sort_keys=True)
        fh.write("\n")
    if report.status == "numerical_error":
        return _fail(1, f"solver ended with status {report.status}")
    return 0


# -- sweep-lambda --------------------------------------------------------


def _lambda_grid(config):
    lo = float(config.get("lambda_min", 0.01))
    hi = float(config.get("lambda_max", 100.0))
    count = int(config.get("lambda_count", 100))
    if lo <= 0 or hi <= lo or count < 2:
        raise ConfigError("lambda grid must satisfy 0 < min < max, count >= 2",
                          "lambda_grid")
    grid = np.logspace(np.log10(lo), np.log10(hi), count)
    extra = [float(v) for v in config.get("extra_lambdas", [])]
    return np.array(sorted(set(grid.tolist()) | set(extra)))


def cmd_sweep_lambda(args) -> int:
    config = _load_config(args.config)
    base_dir = os.path.dirname(os.path.abspath(args.config)) if args.config else "."
    prob_desc = dict(config.get("problem", {}))
    if not prob_desc:
        prob_desc = {
            "variant": "entropic",
            "p": config.get("p"), "q": config.get("q"),
            "cost": config.get("cost"), "params": {"lam": 1.0},
        }
    if prob_desc.get("p") is None:
        raise ConfigError("sweep config needs marginals and cost", "p")
    prob_desc.setdefault("variant", "entropic")
    prob_desc.setdefault("params", {}).setdefault("lam", 1.0)
    prob_desc.setdefault("space", {"positivity_floor": 1e-300})
    base_problem = load_problem(prob_desc, base_dir=base_dir)
    if base_problem.variant != "entropic":
        raise ConfigError("sweep-lambda requires an entropic problem", "variant")
    cfg = load_solver_config(config.get("solver_config") or
                             {"grad_tol": 1e-9, "max_iter": 2000})
    solver_name = args.solver or config.get("solver", "rgd")
    solve = _solver_fn(solver_name)
    grid = _lambda_grid(config)
    sink_tol = float(config.get("sinkhorn_tol", 1e-10))
    sink_max_iter = int(config.get("sinkhorn_max_iter", 10000))
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    out = _prepare_out(args.out)
    h = _write_run_config(out, "sweep-lambda", config, seed)

    space = base_problem.space
    x0 = independence_point(space)
    rows = []
    for lam in grid:
        problem = make_entropic(space, base_problem.cost, lam=float(lam))
        t0 = time.perf_counter()
        sk = sinkhorn_entropic(problem.cost, space.p, space.q, float(lam),
                               tol=sink_tol, max_iter=sink_max_iter)
        t_sink = time.perf_counter() - t0
        sinkhorn_status = "ok" if sk.ok else sk.status
        t0 = time.perf_counter()
        try:
            report = solve(problem, x0, cfg)
            cmm_ok = np.all(np.isfinite(report.final_point.X))
            cmm_status = "ok" if cmm_ok else "failed"
            cmm_iters = report.iterations
            plan = report.final_point.X
        except (CouplingError, RuntimeError) as exc:
            cmm_status = "failed"
            cmm_iters = 0
            plan = None
            rows.append((lam, "", sinkhorn_status, cmm_status, t_sink,
                         time.perf_counter() - t0, sk.iterations, cmm_iters))
            continue
        t_cmm = time.perf_counter() - t0
        if sinkhorn_status == "ok" and plan is not None:
            mse = plan_mse(plan, sk.plan)
        else:
            mse = ""
        rows.append((lam, mse, sinkhorn_status, cmm_status, t_sink, t_cmm,
                     sk.iterations, cmm_iters))
    with open(os.path.join(out, "sweep.csv"), "w") as fh:
        fh.write(f"# config_hash={h} seed={seed}\n")
        fh.write("lambda,mse,sinkhorn_status,cmm_status,"
                 "sinkhorn_time,cmm_time,sinkhorn_iterations,cmm_iterations\n")
        for r in rows:
            fh.write(",".join(str(v) for v in r) + "\n")
    return 0


# -- opw-dist ------------------------------------------------------------


def cmd_opw_dist(args) -> int:
    config = _load_config(args.config)
    base_dir = os.path.dirname(os.path.abspath(args.config)) if args.config else "."
    desc = {
        "variant": "order_preserving",
        "U": args.u or config.get("U"),
        "V": args.v or config.get("V"),
        "params": {
            "sigma": float(config.get("sigma", 1.0)),
            "lambda1": float(config.get("lambda1", 50.0)),
            "lambda2": float(config.get("lambda2", 0.1)),
        },
    }
    if desc["U"] is None or desc["V"] is None:
        raise ConfigError("opw-dist needs two sequences (U, V)", "U")
    problem = load_problem(desc, base_dir=base_dir)
    cfg = load_solver_config(config.get("solver_config") or
                             {"grad_tol": 1e-8, "max_iter": 2000})
    solver_name = args.solver or config.get("solver", "rgd")
    solve = _solver_fn(solver_name)
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    out = _prepare_out(args.out)
    h = _write_run_config(out, "opw-dist", config, seed)
    stamp = f"config_hash={h} seed={seed}"

    report = solve(problem, independence_point(problem.space), cfg)
    plan = report.final_point.X
    d2 = float(np.sum(problem.cost * plan))
    save_matrix(os.path.join(out, "plan.txt"), plan, header_comment=stamp)
    save_matrix(os.path.join(out, "plan.json"), plan, header_comment=stamp)
    with open(os.path.join(out, "distance.json"), "w") as fh:
        json.dump({"distance_squared": d2, "status": report.status,
                   "iterations": report.iterations,
                   "config_hash": h, "seed": seed}, fh, sort_keys=True)
        fh.write("\n")
    print(json.dumps({"distance_squared": d2, "status": report.status}))
    if report.status == "numerical_error":
        return 1
    return 0


# -- domain-adapt --------------------------------------------------------


def _trial_seed(master: int, angle: int, trial: int, stream: int) -> int:
    ss = np.random.SeedSequence([int(master), int(angle), int(trial), stream])
    return int(ss.generate_state(1)[0])


def cmd_domain_adapt(args) -> int:
    config = _load_config(args.config)
    angles = config.get("angles", list(DEFAULT_ANGLES))
    if args.rotation is not None:
        angles = [args.rotation]
    trials = args.trials if args.trials is not None else int(config.get("trials", 10))
    n_per_class = int(config.get("n_per_class", 75))
    noise = float(config.get("noise_std", 0.15))
    n_test = int(config.get("n_test", 1000))
    knn_k = int(config.get("knn_k", 1))
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    est_params = {
        "entropy_weight": float(config.get("entropy_weight", 0.03)),
        "laplacian_weight": float(config.get("laplacian_weight", 10.0)),
        "laplacian_mix": float(config.get("laplacian_mix", 0.0)),
        "n_neighbors": int(config.get("graph_neighbors", 10)),
        "kernel_width": config.get("kernel_width"),
        "cost_norm": config.get("cost_norm", "max"),
        "solver": args.solver or config.get("solver", "rgd"),
        "max_iter": int(config.get("max_iter", 150)),
        "grad_tol": float(config.get("grad_tol", 1e-5)),
    }
    out = _prepare_out(args.out)
    h = _write_run_config(out, "domain-adapt", config, seed)

    trial_rows = []
    table_rows = []
    failures = 0
    for angle in angles:
        errs, base_errs = [], []
        for trial in range(trials):
            src = two_moons(n_per_class, 0.0, noise,
                            _trial_seed(seed, angle, trial, 0))
            tgt = two_moons(n_per_class, float(angle), noise,
                            _trial_seed(seed, angle, trial, 1))
            ev = two_moons(n_test // 2, float(angle), noise,
                           _trial_seed(seed, angle, trial, 2))
            base_pred = knn_classify(src, ev.features, k=knn_k)
            base_err = float(np.mean(base_pred != ev.labels))
            try:
                est = ManifoldLaplaceTransport(**est_params)
                est.fit(src.features.T, src.labels, tgt.features.T)
                transported = est.transform().T  # back to d x n
                adapted = LabeledPointSet(transported, src.labels)
                pred = knn_classify(adapted, ev.features, k=knn_k)
                err = float(np.mean(pred != ev.labels))
                status = est.report_.status
            except (CouplingError, RuntimeError, ValueError) as exc:
                err = None
                status = f"error: {exc}"
                failures += 1
            trial_rows.append((angle, trial, err, base_err, status))
            if err is not None:
                errs.append(err)
            base_errs.append(base_err)
        if errs:
            table_rows.append((
                angle, float(np.mean(errs)), float(np.var(errs)),
                float(np.mean(base_errs)), float(np.var(base_errs)), len(errs),
            ))
        else:
            table_rows.append((angle, "", "", float(np.mean(base_errs)),
                               float(np.var(base_errs)), 0))
    with open(os.path.join(out, "table.csv"), "w") as fh:
        fh.write(f"# config_hash={h} seed={seed}\n")
        fh.write("angle,mean_error,var_error,noadapt_mean_error,"
                 "noadapt_var_error,trials\n")
        for r in table_rows:
            fh.write(",".join(str(v) for v in r) + "\n")
    with open(os.path.join(out, "trials.csv"), "w") as fh:
        fh.write(f"# config_hash={h} seed={seed}\n")
        fh.write("angle,trial,error,noadapt_error,solver_status\n")
        for r in trial_rows:
            fh.write(",".join(str(v) for v in r) + "\n")
    return 1 if failures else 0


# -- check ---------------------------------------------------------------


def cmd_check(args) -> int:
    config = _load_config(args.config)
    if "problem" not in config:
        raise ConfigError("config is missing 'problem'", "problem")
    base_dir = os.path.dirname(os.path.abspath(args.config)) if args.config else "."
    problem = load_problem(config["problem"], base_dir=base_dir)
    trials = args.trials if args.trials is not None else int(config.get("trials", 10))
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    diag = check_derivatives(problem, independence_point(problem.space),
                             trials=trials, seed=seed)
    payload = {
        "variant": problem.variant,
        "grad_max_error": diag.grad_max_error,
        "hess_max_error": diag.hess_max_error,
        "trials": diag.trials,
        "fd_step": diag.fd_step,
        "seed": seed,
    }
    print(json.dumps(payload, sort_keys=True))
    if args.out:
        out = _prepare_out(args.out)
        h = _write_run_config(out, "check", config, seed)
        payload["config_hash"] = h
        with open(os.path.join(out, "diagnostics.json"), "w") as fh:
            json.dump(payload, fh, sort_keys=True)
            fh.write("\n")
    return 0


# -- entry point ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="otmanifold",
        description="Manifold optimization for optimal-transport problems",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", help="JSON configuration file")
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")
        else:
            p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--solver", choices=["rgd", "rtr"], default=None)

    p = sub.add_parser("solve", help="solve one transport problem")
    common(p)
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="override the regularizer weight")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("sweep-lambda", help="entropic solver vs Sinkhorn grid")
    common(p)
    p.set_defaults(fn=cmd_sweep_lambda)

    p = sub.add_parser("opw-dist", help="order-preserving sequence distance")
    common(p)
    p.add_argument("--u", help="first sequence file (rows are steps)")
    p.add_argument("--v", help="second sequence file")
    p.set_defaults(fn=cmd_opw_dist)

    p = sub.add_parser("domain-adapt", help="two-moons adaptation table")
    common(p)
    p.add_argument("--rotation", type=float, default=None,
                   help="run a single rotation angle")
    p.add_argument("--trials", type=int, default=None)
    p.set_defaults(fn=cmd_domain_adapt)

    p = sub.add_parser("check", help="derivative diagnostics")
    common(p, needs_out=False)
    p.add_argument("--trials", type=int, default=None)
    p.set_defaults(fn=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        return _fail(2, str(exc), exc.field)
    except FileNotFoundError as exc:
        return _fail(2, str(exc), "file")
    except CouplingError as exc:
        return _fail(2, str(exc))
    except (TypeError, ValueError) as exc:
        # malformed values inside an otherwise well-formed config
        return _fail(2, str(exc))
    except RuntimeError as exc:
        return _fail(1, str(exc))


if __name__ == "__main__":
    sys.exit(main())
