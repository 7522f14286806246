"""Solver orchestration: single solves, warm-started paths and benchmarks."""
import time
from dataclasses import dataclass, field

import numpy as np

from .baselines import FirstOrderOptions, fista_solve, ist_solve
from .dal import DalOptions, default_eta0, solve as dal_solve
from .data import lambda_from_bar
from .errors import ContractViolation, NonConvergenceError
from .losses import make_loss
from .problem import Problem
from .prox import make_regularizer

__all__ = ["SOLVERS", "SUMMARY_FIELDS", "SolveSpec", "SolveOutcome", "build_problem",
           "run_solver", "PathConfig", "run_path", "bench", "write_summary"]

SOLVERS = ("dal", "dal-b", "fista", "ist")
SUMMARY_FIELDS = ("dataset", "solver", "lambda_bar", "lambda", "iters", "f", "rdg",
                  "nnz", "seconds", "status")


@dataclass
class SolveSpec:
    """Problem and solver settings shared by every run of a command."""

    loss: str = "logistic"
    reg: str = "l1"
    theta: float = 0.5
    group_size: int = None
    solver: str = "dal"
    eta0: object = "aggressive"
    eta_factor: float = 2.0
    rdg_tol: float = 1e-3
    max_iter: int = None
    standardize: bool = False

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ContractViolation(f"unknown solver {self.solver!r}")


@dataclass
class SolveOutcome:
    solver: str
    lambda_bar: float
    lam: float
    w: np.ndarray
    b: float
    trace: object
    seconds: float
    converged: bool
    message: str = ""

    @property
    def last(self):
        return self.trace[-1] if len(self.trace) else None


def build_problem(dataset, spec, lambda_bar):
    A = dataset.operator(spec.standardize)
    lam = lambda_from_bar(A, dataset.labels, lambda_bar)
    loss = make_loss(spec.loss, dataset.labels)
    reg = make_regularizer(spec.reg, lam, A.cols, theta=spec.theta,
                           group_size=spec.group_size)
    return Problem(A, loss, reg), lam


def _eta0(problem, spec):
    if spec.eta0 in ("aggressive", "conservative"):
        return default_eta0(problem, spec.eta0)
    return float(spec.eta0)


def run_solver(problem, spec, w0=None, b0=0.0, w_ref=None, lambda_bar=float("nan"),
               lam=float("nan")):
    """Run one solver; non-convergence is captured in the outcome."""
    t0 = time.perf_counter()
    try:
        if spec.solver in ("dal", "dal-b"):
            opts = DalOptions(eta0=_eta0(problem, spec), eta_factor=spec.eta_factor,
                              rdg_tol=spec.rdg_tol, bias=spec.solver == "dal-b",
                              max_outer=spec.max_iter or 100)
            res = dal_solve(problem, opts, w0=w0, b0=b0, w_ref=w_ref)
            w, b, trace = res.w, res.b, res.trace
        else:
            opts = FirstOrderOptions(rdg_tol=spec.rdg_tol, max_iter=spec.max_iter or 10000)
            fn = fista_solve if spec.solver == "fista" else ist_solve
            res = fn(problem, opts, w0=w0, w_ref=w_ref)
            w, b, trace = res.w, 0.0, res.trace
        ok, msg = True, ""
    except NonConvergenceError as exc:
        res = exc.result
        w = getattr(res, "w", None)
        b = getattr(res, "b", 0.0)
        trace = res.trace
        ok, msg = False, str(exc)
    return SolveOutcome(spec.solver, lambda_bar, lam, w, b, trace,
                        time.perf_counter() - t0, ok, msg)


@dataclass
class PathConfig:
    """Log-linearly spaced ``lambda_bar`` values from max down to min."""

    lambda_bar_max: float = 0.5
    lambda_bar_min: float = 0.001
    num_points: int = 20
    warm_start: bool = True

    def __post_init__(self):
        if not 0 < self.lambda_bar_min < self.lambda_bar_max:
            raise ContractViolation("need 0 < lambda_bar_min < lambda_bar_max")
        if self.num_points < 1:
            raise ContractViolation("num_points must be positive")

    def values(self):
        if self.num_points == 1:
            return np.array([self.lambda_bar_max])
        return np.geomspace(self.lambda_bar_max, self.lambda_bar_min, self.num_points)


def run_path(dataset, spec, config=None):
    """Solve for decreasing ``lambda_bar``; failed points are marked and the
    path continues from the last available iterate."""
    config = config or PathConfig()
    out = []
    w0, b0 = None, 0.0
    for lb in config.values():
        problem, lam = build_problem(dataset, spec, lb)
        res = run_solver(problem, spec, w0=w0 if config.warm_start else None,
                         b0=b0 if config.warm_start else 0.0, lambda_bar=lb, lam=lam)
        out.append(res)
        if res.w is not None:
            w0, b0 = res.w, res.b
    return out


def bench(datasets, specs, lambda_bar):
    """Run every solver spec on every named dataset; returns outcomes keyed
    by ``(dataset name, solver)``."""
    results = {}
    for name, ds in datasets.items():
        for spec in specs:
            problem, lam = build_problem(ds, spec, lambda_bar)
            results[(name, spec.solver)] = run_solver(problem, spec,
                                                      lambda_bar=lambda_bar, lam=lam)
    return results


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "ok" if v else "failed"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_summary(fh, rows):
    """Write ``(dataset, outcome)`` pairs as tab-separated lines with
    :data:`SUMMARY_FIELDS`."""
    fh.write("\t".join(SUMMARY_FIELDS) + "\n")
    for name, o in rows:
        last = o.last
        vals = (name, o.solver, float(o.lambda_bar), float(o.lam),
                int(last.iter) if last else 0, float(last.f) if last else None,
                float(last.rdg) if last else None, int(last.nnz) if last else None,
                float(o.seconds), o.converged)
        fh.write("\t".join(_cell(v) for v in vals) + "\n")
