"""Iterative shrinkage (IST) and its accelerated variant (FISTA).

Both are forward-backward methods: a gradient step on ``f(Aw)`` followed by
the prox of the regularizer. They serve as reference solvers for the DAL
traces.
"""
import math
import time
from dataclasses import dataclass

import numpy as np

from .diagnostics import Trace, TraceRecord, rdg
from .errors import ContractViolation, NonConvergenceError

__all__ = ["FirstOrderOptions", "FirstOrderResult", "operator_norm_sq",
           "ist_step", "ist_solve", "fista_solve"]

#: factor applied to the power-iteration estimate of ||A||^2, which is
#: always an underestimate
NORM_SAFETY = 1.1


@dataclass
class FirstOrderOptions:
    """``step_rule`` is ``"fixed"`` or ``"backtracking"``. ``eta`` defaults to
    ``gamma / L_A`` (fixed) or twice that (initial backtracking step)."""

    step_rule: str = "fixed"
    eta: float = None
    shrink: float = 0.5
    max_iter: int = 10000
    rdg_tol: float = 1e-3
    restart: bool = False
    norm_sq: float = None

    def __post_init__(self):
        if self.step_rule not in ("fixed", "backtracking"):
            raise ContractViolation(f"unknown step rule {self.step_rule!r}")
        if not 0 < self.shrink < 1:
            raise ContractViolation("shrink must lie in (0, 1)")


@dataclass
class FirstOrderResult:
    w: np.ndarray
    trace: Trace
    objectives: np.ndarray
    iterations: int
    converged: bool = True


def operator_norm_sq(A, iters=30, seed=0):
    """Power-iteration estimate of ``||A||^2`` (largest eigenvalue of A^T A)."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(A.cols)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = A.apply_adjoint(A.apply(x))
        est = float(np.linalg.norm(y))
        if est == 0:
            return 0.0
        x = y / est
    return est


def _step_size(problem, opts):
    norm_sq = opts.norm_sq if opts.norm_sq is not None else \
        NORM_SAFETY * operator_norm_sq(problem.A)
    safe = problem.loss.gamma / norm_sq if norm_sq > 0 else 1.0
    if opts.eta is not None:
        if opts.step_rule == "fixed" and opts.eta > safe * (1 + 1e-12) and \
                opts.norm_sq is not None:
            raise ContractViolation("fixed step exceeds gamma / ||A||^2")
        return opts.eta
    return safe if opts.step_rule == "fixed" else 2.0 * safe


def ist_step(w, loss, reg, A, eta):
    """One forward-backward step ``prox_{eta phi}(w - eta A^T grad f(Aw))``."""
    g = A.apply_adjoint(loss.grad(A.apply(w)))
    return reg.prox(w - eta * g, eta)[0]


def _majorized(loss, Ax, Ay, grad_y, x, y, eta):
    d = x - y
    return loss.value(Ax) <= loss.value(Ay) + grad_y @ d + (d @ d) / (2 * eta) \
        + 1e-12 * (1 + abs(loss.value(Ay)))


def _run(problem, opts, accelerate, w0, callback, w_ref):
    A, loss, reg = problem.A, problem.loss, problem.reg
    eta = _step_size(problem, opts)
    w = np.zeros(A.cols) if w0 is None else np.array(w0, dtype=np.float64)
    Aw = A.apply(w)
    y, Ay = w, Aw
    tk = 1.0
    fw = problem.objective(w, Aw=Aw)
    objectives = [fw]
    trace = Trace()
    t0 = time.perf_counter()
    for k in range(opts.max_iter + 1):
        gz = loss.grad(Ay)
        grad_y = A.apply_adjoint(gz)
        fy = problem.objective(y, Aw=Ay)
        gap, dual = rdg(problem, y, -gz, Aw=Ay, At_alpha=-grad_y)
        rec = TraceRecord(iter=k, f=fy, dual=dual, rdg=gap,
                          nnz=int(np.count_nonzero(y)), eta1=eta,
                          seconds=time.perf_counter() - t0,
                          dist_to_ref=None if w_ref is None else
                          float(np.linalg.norm(y - w_ref)))
        trace.append(rec)
        res = FirstOrderResult(y, trace, np.array(objectives), k)
        if gap < opts.rdg_tol or (callback is not None and callback(y, rec)):
            return res
        if k == opts.max_iter:
            res.converged = False
            raise NonConvergenceError(
                f"relative duality gap {gap:.3e} after {k} iterations", res)
        while True:
            x = reg.prox(y - eta * grad_y, eta)[0]
            Ax = A.apply(x)
            if opts.step_rule == "fixed" or _majorized(loss, Ax, Ay, grad_y, x, y, eta):
                break
            eta *= opts.shrink
        fx = problem.objective(x, Aw=Ax)
        if accelerate:
            if opts.restart and fx > fw:
                tk = 1.0
            t_next = (1.0 + math.sqrt(1.0 + 4.0 * tk * tk)) / 2.0
            beta = (tk - 1.0) / t_next
            y = x + beta * (x - w)
            Ay = Ax + beta * (Ax - Aw)
            tk = t_next
        else:
            y, Ay = x, Ax
        w, Aw, fw = x, Ax, fx
        objectives.append(fw)


def ist_solve(problem, options=None, w0=None, callback=None, w_ref=None):
    """Iterative shrinkage until ``rdg < rdg_tol``; records describe ``w^t``."""
    return _run(problem, options or FirstOrderOptions(), False, w0, callback, w_ref)


def fista_solve(problem, options=None, w0=None, callback=None, w_ref=None):
    """FISTA until ``rdg < rdg_tol``.

    Trace records describe the extrapolated point ``y^t``, where the loss
    gradient (and hence the dual candidate ``-grad f(A y^t)``) is available
    for free; the returned ``w`` is that certified point.
    ``objectives[k]`` is ``F(w^k)`` of the prox sequence.
    """
    return _run(problem, options or FirstOrderOptions(), True, w0, callback, w_ref)
