"""File formats: matrices, problem descriptors, solver configs, reports.

Matrices and vectors travel either as JSON (a raw array-of-arrays in
row-major order, or wrapped in an object under ``"data"``) or as
whitespace-delimited text with a one-line ``"n m"`` header.  Text readers
skip ``#`` comment lines, which artifact writers use to embed the config
hash and seed.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import fields as dataclass_fields
from typing import Optional, Union

import numpy as np

from .geometry import CouplingSpace, ShapeError
from .problems import (
    ProblemInstance,
    make_classic,
    make_entropic,
    make_laplacian_da,
    make_order_preserving,
    make_squared,
    make_tsallis,
)
from .solvers import SolverConfig, SolverReport

__all__ = [
    "save_matrix",
    "load_matrix",
    "save_vector",
    "load_vector",
    "canonical_json",
    "config_hash",
    "space_from_descriptor",
    "load_problem",
    "load_solver_config",
    "write_report_csv",
    "write_report_json",
    "ConfigError",
]


class ConfigError(ValueError):
    """A descriptor or configuration file is malformed.

    ``field`` names the offending entry so that command-line tooling can
    report it machine-readably.
    """

    def __init__(self, message: str, field: str = ""):
        super().__init__(message)
        self.field = field


def save_matrix(path, M, header_comment: str = ""):
    """Write a matrix as JSON or text depending on the file suffix."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[None, :]
    path = os.fspath(path)
    if path.endswith(".json"):
        payload = {"shape": list(M.shape), "data": M.tolist()}
        if header_comment:
            payload["meta"] = header_comment
        with open(path, "w") as fh:
            json.dump(payload, fh)
            fh.write("\n")
    else:
        with open(path, "w") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            fh.write(f"{M.shape[0]} {M.shape[1]}\n")
            for row in M:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_matrix(path) -> np.ndarray:
    """Read a matrix from a JSON or text file (format sniffed)."""
    path = os.fspath(path)
    with open(path) as fh:
        text = fh.read()
    stripped = text.lstrip()
    if stripped.startswith("{") or stripped.startswith("["):
        obj = json.loads(text)
        if isinstance(obj, dict):
            obj = obj["data"]
        M = np.asarray(obj, dtype=float)
        if M.ndim == 1:
            M = M[None, :]
        return M
    lines = [ln for ln in text.splitlines()
             if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ShapeError(f"{path}: empty matrix file")
    head = lines[0].split()
    if len(head) != 2:
        raise ShapeError(f"{path}: expected a 'n m' header, got {lines[0]!r}")
    n, m = int(head[0]), int(head[1])
    data = [float(v) for ln in lines[1:] for v in ln.split()]
    if len(data) != n * m:
        raise ShapeError(f"{path}: header says {n}x{m} but found {len(data)} values")
    return np.asarray(data, dtype=float).reshape(n, m)


def save_vector(path, v, header_comment: str = ""):
    save_matrix(path, np.asarray(v, dtype=float)[None, :], header_comment)


def load_vector(path) -> np.ndarray:
    M = load_matrix(path)
    if 1 not in M.shape and M.ndim == 2:
        raise ShapeError(f"{path}: expected a vector, got shape {M.shape}")
    return M.ravel()


def canonical_json(obj) -> str:
    """Deterministic JSON encoding used for hashing configs."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def _load_array(value, base_dir: str, field: str, vector: bool = False):
    if isinstance(value, str):
        path = value if os.path.isabs(value) else os.path.join(base_dir, value)
        if not os.path.exists(path):
            raise ConfigError(f"referenced file does not exist: {path}", field)
        return load_vector(path) if vector else load_matrix(path)
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{field}: not numeric ({exc})", field)
    return arr


def space_from_descriptor(desc: dict, p, q) -> CouplingSpace:
    opts = desc.get("space", {})
    allowed = {"coupling_tol", "positivity_floor", "feasibility_tol",
               "metric_scale"}
    unknown = set(opts) - allowed
    if unknown:
        raise ConfigError(f"unknown space options: {sorted(unknown)}", "space")
    return CouplingSpace(p, q, **opts)


def load_problem(descriptor: Union[str, dict],
                 base_dir: Optional[str] = None) -> ProblemInstance:
    """Build a problem from a JSON descriptor (path or already-parsed dict).

    The descriptor carries a ``variant`` tag, marginals/cost (inline or as
    file references relative to the descriptor), and a ``params`` object
    with the variant-specific values.
    """
    if isinstance(descriptor, str):
        path = descriptor
        if not os.path.isabs(path) and base_dir:
            path = os.path.join(base_dir, path)
        base_dir = os.path.dirname(os.path.abspath(path))
        try:
            with open(path) as fh:
                desc = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"problem descriptor not found: {path}",
                              "problem")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"problem descriptor is not valid JSON: {exc}",
                              "problem")
    else:
        desc = dict(descriptor)
        base_dir = base_dir or "."
    variant = desc.get("variant")
    params = dict(desc.get("params", {}))

    try:
        if variant == "order_preserving":
            U = _load_array(desc["U"], base_dir, "U")
            V = _load_array(desc["V"], base_dir, "V")
            return make_order_preserving(
                U, V,
                sigma=float(params.pop("sigma", 1.0)),
                lambda1=float(params.pop("lambda1", 50.0)),
                lambda2=float(params.pop("lambda2", 0.1)),
                positivity_floor=float(params.pop("positivity_floor", 1e-300)),
            )
        if variant == "laplacian_da":
            P_s = _load_array(desc["P_s"], base_dir, "P_s")
            P_t = _load_array(desc["P_t"], base_dir, "P_t")
            labels = desc.get("labels_s")
            if labels is not None:
                labels = np.asarray(
                    _load_array(labels, base_dir, "labels_s", vector=True),
                    dtype=int)
            L_s = desc.get("L_s")
            L_t = desc.get("L_t")
            if L_s is not None:
                L_s = _load_array(L_s, base_dir, "L_s")
            if L_t is not None:
                L_t = _load_array(L_t, base_dir, "L_t")
            return make_laplacian_da(
                P_s, P_t, labels_s=labels,
                lam=float(params.pop("lam", 0.01)),
                laplacian_weight=float(params.pop("laplacian_weight", 0.1)),
                laplacian_mix=float(params.pop("laplacian_mix", 0.0)),
                L_s=L_s, L_t=L_t,
                positivity_floor=float(params.pop("positivity_floor", 1e-300)),
            )
        if variant in ("classic", "entropic", "squared", "tsallis"):
            for key in ("p", "q", "cost"):
                if key not in desc:
                    raise ConfigError(f"descriptor is missing '{key}'", key)
            p = _load_array(desc["p"], base_dir, "p", vector=True)
            q = _load_array(desc["q"], base_dir, "q", vector=True)
            C = _load_array(desc["cost"], base_dir, "cost")
            space = space_from_descriptor(desc, p, q)
            if variant == "classic":
                return make_classic(space, C)
            if variant == "entropic":
                return make_entropic(space, C, lam=float(params["lam"]))
            if variant == "squared":
                return make_squared(space, C, lam=float(params["lam"]))
            return make_tsallis(space, C, lam=float(params["lam"]),
                                qexp=float(params["qexp"]))
    except ConfigError:
        raise
    except KeyError as exc:
        raise ConfigError(f"descriptor is missing {exc}", str(exc).strip("'"))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid descriptor value: {exc}", "params")
    raise ConfigError(f"unknown problem variant: {variant!r}", "variant")


def load_solver_config(obj: Union[str, dict, None]) -> SolverConfig:
    """Solver configuration from a JSON file path or a dict."""
    if obj is None:
        return SolverConfig()
    if isinstance(obj, str):
        try:
            with open(obj) as fh:
                obj = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"solver config not found: {obj}", "solver_config")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"solver config is not valid JSON: {exc}",
                              "solver_config")
    known = {f.name for f in dataclass_fields(SolverConfig)}
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"unknown solver config fields: {sorted(unknown)}",
                          sorted(unknown)[0])
    try:
        return SolverConfig(**obj)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid solver config: {exc}", "solver_config")


def write_report_csv(path, report: SolverReport, header_comment: str = ""):
    """Per-iteration rows (iteration, objective, gradnorm, step)."""
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(["iteration", "objective", "gradnorm", "step"])
        for row in report.iteration_rows():
            w.writerow(row)


def write_report_json(path, report: SolverReport, include_wall_time=True,
                      extra: Optional[dict] = None):
    d = report.to_dict(include_wall_time=include_wall_time)
    if extra:
        d.update(extra)
    with open(path, "w") as fh:
        json.dump(d, fh)
        fh.write("\n")
