"""Dual augmented Lagrangian solver.

Each outer iteration is a proximal-minimization step on the primal,

    w^{t+1} = prox_{phi_{lam eta_t}}(w^t + eta_t A^T alpha^t),

where ``alpha^t`` approximately minimizes the augmented Lagrangian dual

    phi_t(alpha) = f*(-alpha) + Phi*_{lam eta_t}(w^t + eta_t A^T alpha) / eta_t.

``phi_t`` is minimized by a damped Newton method whose linear systems are
solved with diagonally preconditioned conjugate gradients; the Hessian only
involves the columns of ``A`` that survive the threshold. Inner iterations
stop once ``||grad phi_t|| <= sqrt(gamma/eta_t) ||w^{t+1} - w^t||``.

With ``bias=True`` an unregularized offset ``b`` is added; its block of the
augmented Lagrangian is ``(b + eta2 * sum(alpha))**2 / (2 eta2)`` with its own
proximity parameter ``eta2``.
"""
import math
import time
from dataclasses import dataclass, field, replace
from types import SimpleNamespace

import numpy as np

from .diagnostics import Trace, TraceRecord, rdg
from .errors import ContractViolation, NonConvergenceError
from .prox import GroupLasso

__all__ = ["InnerOptions", "DalOptions", "DalState", "DalResult", "default_eta0",
           "al_value", "al_grad", "al_hess_apply", "hess_diag", "pcg",
           "inner_solve", "next_bias_eta", "outer_step", "initial_state", "solve"]


@dataclass
class InnerOptions:
    """Newton/PCG settings for one augmented Lagrangian minimization.

    ``grad_tol`` replaces the adaptive stopping rule by a fixed bound on the
    gradient norm; it is meant for high-accuracy reference solves.
    """

    max_newton: int = 100
    max_pcg: int = 500
    pcg_rtol_cap: float = 0.1
    ls_shrink: float = 0.5
    ls_c: float = 1e-4
    boundary_frac: float = 0.999
    grad_tol: float = None

    def __post_init__(self):
        if not (0 < self.ls_shrink < 1 and 0 < self.ls_c < 1
                and 0 < self.pcg_rtol_cap < 1 and 0 < self.boundary_frac < 1):
            raise ContractViolation("inner options out of their open intervals")
        if self.max_newton < 1 or self.max_pcg < 1:
            raise ContractViolation("iteration limits must be positive")


@dataclass
class DalOptions:
    """Outer-loop settings. ``eta0=None`` means ``1/lam``."""

    eta0: float = None
    eta_factor: float = 2.0
    rdg_tol: float = 1e-3
    max_outer: int = 100
    inner: InnerOptions = field(default_factory=InnerOptions)
    bias: bool = False
    eta2_0: float = None
    bias_escalation_factor: float = 40.0
    bias_viol_tol: float = 1e-3

    def __post_init__(self):
        if self.eta_factor < 1:
            raise ContractViolation("eta_factor must be >= 1")
        if self.eta0 is not None and not self.eta0 > 0:
            raise ContractViolation("eta0 must be positive")


@dataclass
class DalState:
    w: np.ndarray
    alpha: np.ndarray
    eta1: float
    b: float = 0.0
    eta2: float = None
    t: int = 0
    viol: list = field(default_factory=list)


@dataclass
class DalResult:
    w: np.ndarray
    b: float
    alpha: np.ndarray
    trace: Trace
    state: DalState = None
    iterates: list = None
    converged: bool = True


def default_eta0(problem, mode="aggressive"):
    """``1/lam`` (aggressive) or ``0.01/lam`` (conservative)."""
    lam = problem.lambda_scale()
    if not lam > 0:
        return 1.0
    if mode == "aggressive":
        return 1.0 / lam
    if mode == "conservative":
        return 0.01 / lam
    raise ValueError(f"unknown eta0 mode {mode!r}")


# -- augmented Lagrangian ------------------------------------------------------

def _bias_on(state):
    return state.eta2 is not None


def _evaluate(problem, state, alpha):
    """Prox image and everything derived from it at ``alpha``."""
    A, reg = problem.A, problem.reg
    q = state.w + state.eta1 * A.apply_adjoint(alpha)
    w_next, act = reg.prox(q, state.eta1)
    A_act = A.column_subset(act.active)
    Aw = A_act.apply(w_next[act.active])
    b_next = state.b + state.eta2 * alpha.sum() if _bias_on(state) else 0.0
    return SimpleNamespace(q=q, w_next=w_next, act=act, A_act=A_act, Aw=Aw,
                           b_next=b_next)


def al_value(problem, state, alpha):
    """``phi_t(alpha)``; ``inf`` outside the conjugate domain."""
    alpha = np.asarray(alpha, dtype=np.float64)
    val = problem.loss.conj_value(alpha)
    if not np.isfinite(val):
        return np.inf
    q = state.w + state.eta1 * problem.A.apply_adjoint(alpha)
    val += problem.reg.envelope_star(q, state.eta1) / state.eta1
    if _bias_on(state):
        val += (state.b + state.eta2 * alpha.sum()) ** 2 / (2.0 * state.eta2)
    return val


def _grad_from(problem, alpha, ev):
    g = problem.loss.conj_grad(alpha) + ev.Aw
    if ev.b_next:
        g = g + ev.b_next
    return g


def al_grad(problem, state, alpha):
    """Gradient of ``phi_t``, the prox image ``w^{t+1}(alpha)`` and its
    active structure."""
    alpha = np.asarray(alpha, dtype=np.float64)
    ev = _evaluate(problem, state, alpha)
    return _grad_from(problem, alpha, ev), ev.w_next, ev.act


def al_hess_apply(problem, state, alpha, act, v, A_act=None, conj_hess=None):
    """Hessian-vector product ``(H_f* + eta1 A_+ J A_+^T + eta2 1 1^T) v``.

    ``J`` is the prox Jacobian described by ``act``; only active columns are
    touched. ``A_act`` and ``conj_hess`` may be passed to reuse them.
    """
    if not problem.reg.has_hessian:
        raise ContractViolation(f"{type(problem.reg).__name__} has no Hessian structure")
    v = np.asarray(v, dtype=np.float64)
    if conj_hess is None:
        conj_hess = problem.loss.conj_hess_diag(alpha)
    if A_act is None:
        A_act = problem.A.column_subset(act.active)
    if A_act.cols != act.size:
        raise ContractViolation("active structure does not match the column subset")
    out = conj_hess * v
    if act.size:
        out += state.eta1 * A_act.apply(act.jacobian_apply(A_act.apply_adjoint(v)))
    if _bias_on(state):
        out += state.eta2 * v.sum()
    return out


def hess_diag(problem, state, act, A_act, conj_hess):
    """Exact diagonal of the Hessian (used as the PCG preconditioner)."""
    d = conj_hess.copy()
    if act.size:
        if act.group_ptr is None:
            d += state.eta1 * A_act.row_sq_norms(act.jacobian_diag())
        else:
            # (1 - r) sum_j A_ij^2 + r (A_g q_g)_i^2 per active group
            sizes = np.diff(act.group_ptr)
            r = np.repeat(act.ratios, sizes)
            d += state.eta1 * A_act.row_sq_norms(1.0 - r)
            for g in range(len(sizes)):
                lo, hi = act.group_ptr[g], act.group_ptr[g + 1]
                if act.ratios[g] == 0 or hi == lo:
                    continue
                sub = A_act.column_subset(np.arange(lo, hi))
                d += state.eta1 * act.ratios[g] * sub.apply(act.q_unit[lo:hi]) ** 2
    if _bias_on(state):
        d += state.eta2
    return d


def pcg(matvec, rhs, precond_diag, rtol, max_iter):
    """Preconditioned conjugate gradients for ``H x = rhs``.

    Returns ``(x, iterations)``; stops when ``||r|| <= rtol ||rhs||``.
    """
    x = np.zeros_like(rhs)
    r = rhs.copy()
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0:
        return x, 0
    inv = 1.0 / precond_diag
    z = inv * r
    p = z.copy()
    rz = r @ z
    for k in range(1, max_iter + 1):
        Hp = matvec(p)
        pHp = p @ Hp
        if pHp <= 0:
            return x, k
        a = rz / pHp
        x += a * p
        r -= a * Hp
        if np.linalg.norm(r) <= rtol * bnorm:
            return x, k
        z = inv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, max_iter


def inner_solve(problem, state, options=None):
    """Minimize ``phi_t`` starting from ``state.alpha``.

    Returns ``(alpha, w_next, stats)`` where ``stats`` holds ``b_next``,
    ``newton``, ``pcg``, ``grad_norm``, ``Aw`` (``A w_next``) and ``act``.
    Raises :class:`NonConvergenceError` after ``max_newton`` steps; its
    ``result`` is the stats namespace of the best iterate seen.
    """
    opts = options or InnerOptions()
    loss = problem.loss
    alpha = np.array(state.alpha, dtype=np.float64)
    if not loss.interior(alpha):
        raise ContractViolation("inner solve must start strictly inside the dual domain")
    if not problem.reg.has_hessian:
        raise ContractViolation(f"{type(problem.reg).__name__} has no Hessian structure")
    sqrt_ratio = math.sqrt(loss.gamma / state.eta1)
    bias = _bias_on(state)
    val = al_value(problem, state, alpha)
    n_pcg = 0
    best = None
    for k in range(opts.max_newton + 1):
        ev = _evaluate(problem, state, alpha)
        cg = loss.conj_grad(alpha)
        g = cg + ev.Aw + (ev.b_next if bias else 0.0)
        gnorm = float(np.linalg.norm(g))
        step = ev.w_next - state.w
        res2 = float(step @ step)
        if bias:
            res2 += (ev.b_next - state.b) ** 2
        stats = SimpleNamespace(alpha=alpha, w_next=ev.w_next, b_next=ev.b_next,
                                newton=k, pcg=n_pcg, grad_norm=gnorm, Aw=ev.Aw,
                                act=ev.act)
        if best is None or gnorm < best.grad_norm:
            best = stats
        if opts.grad_tol is not None:
            done = gnorm <= opts.grad_tol
        else:
            rhs = sqrt_ratio * math.sqrt(res2)
            done = gnorm <= max(rhs, 1e-12 * (1.0 + float(np.linalg.norm(cg))))
        if done:
            return alpha, ev.w_next, stats
        if k == opts.max_newton:
            break
        ch = loss.conj_hess_diag(alpha)
        diag = hess_diag(problem, state, ev.act, ev.A_act, ch)

        def matvec(v, ev=ev, ch=ch):
            return al_hess_apply(problem, state, alpha, ev.act, v, ev.A_act, ch)

        d, it = pcg(matvec, -g, diag, min(opts.pcg_rtol_cap, math.sqrt(gnorm)),
                    opts.max_pcg)
        n_pcg += it
        slope = float(g @ d)
        if not slope < 0:
            d = -g / diag
            slope = float(g @ d)
        s = min(1.0, opts.boundary_frac * loss.max_step(alpha, d))
        slack = 10 * np.finfo(float).eps * (1.0 + abs(val))
        while True:
            cand = alpha + s * d
            new = al_value(problem, state, cand) if loss.interior(cand) else np.inf
            if new <= val + opts.ls_c * s * slope + slack:
                break
            s *= opts.ls_shrink
            if s < 1e-16:
                break
        if s < 1e-16:
            # no decrease possible at working precision
            break
        alpha, val = cand, new
    raise NonConvergenceError(
        f"inner Newton did not converge in {opts.max_newton} steps "
        f"(gradient norm {best.grad_norm:.3e})", best)


def next_bias_eta(t, viol, viol_prev, eta2, options):
    """Proximity parameter for the bias block after outer step ``t``.

    Escalated by ``bias_escalation_factor`` when ``t > 1``, the violation
    ``|sum(alpha)|`` did not at least halve, and it is above
    ``bias_viol_tol``; otherwise grown by ``eta_factor``.
    """
    if (t > 1 and viol_prev is not None and viol > viol_prev / 2.0
            and viol > options.bias_viol_tol):
        return eta2 * options.bias_escalation_factor
    return eta2 * options.eta_factor


def outer_step(state, alpha, w_next, options, b_next=None):
    """Advance the outer iteration with an accepted inner solution."""
    new = replace(state, w=w_next, alpha=alpha, t=state.t + 1,
                  eta1=state.eta1 * options.eta_factor, viol=list(state.viol))
    if _bias_on(state):
        viol = abs(float(alpha.sum()))
        prev = state.viol[-1] if state.viol else None
        new.b = state.b + state.eta2 * float(alpha.sum()) if b_next is None else b_next
        new.eta2 = next_bias_eta(state.t, viol, prev, state.eta2, options)
        new.viol.append(viol)
    return new


def initial_state(problem, options, w0=None, b0=0.0):
    n = problem.A.cols
    w = np.zeros(n) if w0 is None else np.array(w0, dtype=np.float64)
    if w.shape != (n,):
        raise ContractViolation(f"w0 must have length {n}")
    eta0 = options.eta0 if options.eta0 is not None else default_eta0(problem)
    b = float(b0) if options.bias else 0.0
    alpha = problem.loss.dual_start(problem.A.apply(w) + b)
    eta2 = None
    if options.bias:
        eta2 = options.eta2_0 if options.eta2_0 is not None else eta0
    return DalState(w=w, alpha=alpha, eta1=eta0, b=b, eta2=eta2)


def solve(problem, options=None, w0=None, b0=0.0, callback=None, w_ref=None,
          store_iterates=False):
    """Run DAL until the relative duality gap drops below ``rdg_tol``.

    ``callback(state, record)`` is called after every recorded iterate and
    stops the run when it returns a truthy value. ``w_ref`` fills the
    ``dist_to_ref`` column. Raises :class:`NonConvergenceError` carrying a
    :class:`DalResult` when ``max_outer`` is exhausted.
    """
    opts = options or DalOptions()
    state = initial_state(problem, opts, w0, b0)
    trace = Trace()
    iterates = [] if store_iterates else None
    t0 = time.perf_counter()
    Aw = problem.A.apply(state.w)
    cand = state.alpha
    newton = pcg_steps = 0
    while True:
        gap, dual = rdg(problem, state.w, cand, state.b, opts.bias, Aw=Aw)
        rec = TraceRecord(
            iter=state.t, f=problem.objective(state.w, state.b, Aw=Aw), dual=dual,
            rdg=gap, nnz=int(np.count_nonzero(state.w)), inner_newton=newton,
            pcg_steps=pcg_steps, eta1=state.eta1, eta2=state.eta2,
            seconds=time.perf_counter() - t0,
            dist_to_ref=None if w_ref is None else float(np.linalg.norm(state.w - w_ref)))
        trace.append(rec)
        if store_iterates:
            iterates.append((state.w.copy(), state.b))
        result = DalResult(state.w, state.b, state.alpha, trace, state, iterates)
        if gap < opts.rdg_tol:
            return result
        if callback is not None and callback(state, rec):
            return result
        if state.t >= opts.max_outer:
            result.converged = False
            raise NonConvergenceError(
                f"relative duality gap {gap:.3e} after {state.t} outer iterations", result)
        alpha, w_next, st = inner_solve(problem, state, opts.inner)
        newton, pcg_steps = st.newton, st.pcg
        state = outer_step(state, alpha, w_next, opts, st.b_next)
        Aw = st.Aw
        cand = alpha
