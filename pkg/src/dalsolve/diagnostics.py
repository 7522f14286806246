"""Convergence traces, duality gaps, reference optima and bound checks."""
import io
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ContractViolation, InputError, NonConvergenceError
from .prox import ElasticNet, GroupLasso, L1, WeightedL1

__all__ = ["TRACE_FIELDS", "TraceRecord", "Trace", "rdg", "dual_candidate",
           "min_norm_subgradient", "ReferenceSolution", "reference_solution",
           "estimate_sigma", "BoundReport", "check_bounds", "descent_residuals"]

TRACE_FIELDS = ("iter", "f", "dual", "rdg", "nnz", "inner_newton", "pcg_steps",
                "eta1", "eta2", "seconds", "dist_to_ref")


@dataclass
class TraceRecord:
    """Metrics of one iterate. ``inner_newton``/``pcg_steps`` count the work
    spent producing it; ``eta1``/``eta2`` are the parameters of the step that
    leaves it (``eta2`` is ``None`` without a bias)."""

    iter: int
    f: float
    dual: float
    rdg: float
    nnz: int
    inner_newton: int = 0
    pcg_steps: int = 0
    eta1: float = None
    eta2: float = None
    seconds: float = 0.0
    dist_to_ref: float = None


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


class Trace:
    """Ordered list of :class:`TraceRecord` with a tab-separated text form.

    The text form has a header line with :data:`TRACE_FIELDS` and one line
    per record; missing values are empty fields.
    """

    def __init__(self, records=None):
        self.records = list(records or [])

    def append(self, record):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def column(self, name):
        vals = [getattr(r, name) for r in self.records]
        return np.array([np.nan if v is None else v for v in vals], dtype=np.float64)

    def write(self, fh):
        fh.write("\t".join(TRACE_FIELDS) + "\n")
        for r in self.records:
            fh.write("\t".join(_fmt(getattr(r, k)) for k in TRACE_FIELDS) + "\n")

    def to_text(self):
        buf = io.StringIO()
        self.write(buf)
        return buf.getvalue()

    @classmethod
    def read(cls, fh):
        """Parse the text form, validating the schema line by line."""
        lines = fh.read().splitlines()
        if not lines or tuple(lines[0].split("\t")) != TRACE_FIELDS:
            raise InputError("trace header does not match the record schema", line=1)
        types = {f.name: f.type for f in fields(TraceRecord)}
        records = []
        for lineno, line in enumerate(lines[1:], start=2):
            parts = line.split("\t")
            if len(parts) != len(TRACE_FIELDS):
                raise InputError(f"expected {len(TRACE_FIELDS)} fields, got {len(parts)}",
                                 line=lineno)
            kw = {}
            for name, text in zip(TRACE_FIELDS, parts):
                if text == "":
                    if name in ("iter", "f", "dual", "rdg", "nnz"):
                        raise InputError(f"field {name} is required", line=lineno)
                    kw[name] = None
                    continue
                try:
                    kw[name] = int(text) if types[name] is int else float(text)
                except ValueError:
                    raise InputError(f"bad value {text!r} for {name}", line=lineno) from None
            records.append(TraceRecord(**kw))
        return cls(records)


# -- duality gap ------------------------------------------------------------

def dual_candidate(problem, alpha, bias=False):
    """Make ``alpha`` satisfy the dual's linear constraints.

    With a bias the dual requires ``sum(alpha) == 0``; unregularized
    coordinates (weight 0) require ``A_j^T alpha == 0``. The candidate is
    projected onto these constraints (plain centering when only the bias
    is present).
    """
    alpha = np.array(alpha, dtype=np.float64)
    free = getattr(problem.reg, "unregularized", np.zeros(0, dtype=np.int64))
    if free.size == 0:
        return alpha - alpha.mean() if bias else alpha
    M = problem.A.column_subset(free).to_dense()
    if bias:
        M = np.column_stack([M, np.ones(problem.A.rows)])
    coef, *_ = np.linalg.lstsq(M, alpha, rcond=None)
    return alpha - M @ coef


def rdg(problem, w, alpha, b=0.0, bias=False, Aw=None, At_alpha=None):
    """Relative duality gap at ``(w, b)`` using the dual candidate ``alpha``.

    The candidate is made feasible (see :func:`dual_candidate`), then scaled
    into the dual-norm ball of a support-function regularizer with factor
    ``min(1, 1/gauge(A^T alpha))``. For the elastic net the conjugate is
    evaluated directly instead. Returns ``(rdg, dual_value)``.

    ``Aw`` and ``At_alpha`` (``A^T alpha`` before any projection) may be
    passed to skip products.
    """
    A, loss, reg = problem.A, problem.loss, problem.reg
    primal = problem.objective(w, b, Aw=Aw)
    if not primal > 0:
        raise ContractViolation("relative duality gap needs a positive primal objective")
    a = dual_candidate(problem, alpha, bias)
    if At_alpha is not None and np.array_equal(a, alpha):
        v = np.array(At_alpha, dtype=np.float64)
    else:
        v = A.apply_adjoint(a)
    if reg.support_type:
        free = getattr(reg, "unregularized", np.zeros(0, dtype=np.int64))
        v[free] = 0.0
        g = reg.gauge(v)
        scale = 1.0 if g <= 1.0 else (1.0 / g if np.isfinite(g) else 0.0)
        dual = -loss.conj_value(scale * a)
    else:
        dual = -loss.conj_value(a) - reg.conj_value(v)
    return (primal - dual) / primal, dual


# -- reference optimum --------------------------------------------------------

def min_norm_subgradient(problem, w, b=0.0, bias=False):
    """Minimum-norm element of the subdifferential of the objective at ``w``
    (with the bias derivative appended when ``bias``)."""
    A, reg = problem.A, problem.reg
    gz = problem.loss.grad(A.apply(w) + b)
    g = A.apply_adjoint(gz)
    w = np.asarray(w, dtype=np.float64)
    if isinstance(reg, (L1, WeightedL1, ElasticNet)):
        if isinstance(reg, ElasticNet):
            lam = np.full(w.size, reg.lam * (1 - reg.theta))
            g = g + reg.lam * reg.theta * w
        else:
            lam = np.broadcast_to(reg.lam if isinstance(reg, L1) else reg.lams, w.shape)
        nz = w != 0
        out = np.where(nz, g + lam * np.sign(w),
                       np.sign(g) * np.maximum(np.abs(g) - lam, 0.0))
    elif isinstance(reg, GroupLasso):
        out = np.empty_like(g)
        for idx in reg.groups:
            wn = np.linalg.norm(w[idx])
            if wn > 0:
                out[idx] = g[idx] + reg.lam * w[idx] / wn
            else:
                gn = np.linalg.norm(g[idx])
                out[idx] = g[idx] * (max(gn - reg.lam, 0.0) / gn if gn > 0 else 0.0)
    else:
        raise NotImplementedError(f"no subgradient for {type(reg).__name__}")
    if bias:
        out = np.append(out, gz.sum())
    return out


@dataclass
class ReferenceSolution:
    """High-precision optimum; ``sigma`` is filled in by :func:`estimate_sigma`."""

    w_star: np.ndarray
    f_star: float
    b_star: float = 0.0
    subgrad_norm: float = None
    sigma: float = None


def _smooth_reg_parts(reg, u, support):
    """Gradient and Hessian of the regularizer restricted to ``support``,
    where it is twice differentiable."""
    k = u.size
    if isinstance(reg, (L1, WeightedL1)):
        lam = reg.lam if isinstance(reg, L1) else reg.lams[support]
        return lam * np.sign(u), np.zeros((k, k))
    if isinstance(reg, ElasticNet):
        lt = reg.lam * reg.theta
        return reg.lam * (1 - reg.theta) * np.sign(u) + lt * u, lt * np.eye(k)
    if isinstance(reg, GroupLasso):
        pos = {j: i for i, j in enumerate(support)}
        grad = np.zeros(k)
        hess = np.zeros((k, k))
        for idx in reg.groups:
            loc = [pos[j] for j in idx if j in pos]
            if not loc:
                continue
            ug = u[loc]
            nrm = np.linalg.norm(ug)
            grad[loc] = reg.lam * ug / nrm
            e = ug / nrm
            hess[np.ix_(loc, loc)] = reg.lam / nrm * (np.eye(len(loc)) - np.outer(e, e))
        return grad, hess
    raise NotImplementedError(f"no smooth restriction for {type(reg).__name__}")


def _same_pattern(reg, u_old, u_new, support):
    if isinstance(reg, GroupLasso):
        pos = {j: i for i, j in enumerate(support)}
        for idx in reg.groups:
            loc = [pos[j] for j in idx if j in pos]
            if loc and np.linalg.norm(u_new[loc]) == 0:
                return False
        return True
    return bool(np.all(np.sign(u_old) == np.sign(u_new)))


def reference_solution(problem, bias=False, rdg_tol=1e-9, subgrad_tol=1e-10,
                       max_polish=8, options=None):
    """Solve to ``rdg_tol``, freeze the support and polish with Newton steps
    on the support until the minimum-norm subgradient is below
    ``subgrad_tol`` (stopping early once it reaches about 1e-13).

    Raises :class:`NonConvergenceError` if the subgradient target is missed.
    """
    from .dal import DalOptions, solve

    opts = options or DalOptions(rdg_tol=rdg_tol, max_outer=200, bias=bias)
    res = solve(problem, opts)
    w, b = res.w.copy(), res.b
    A, loss = problem.A, problem.loss
    support = np.flatnonzero(w)

    def norm_sub(w_, b_):
        return float(np.linalg.norm(min_norm_subgradient(problem, w_, b_, bias)))

    best = norm_sub(w, b)
    if support.size or bias:
        M = A.column_subset(support).to_dense()
        if bias:
            M = np.column_stack([M, np.ones(A.rows)])
        for _ in range(max_polish):
            if best <= 1e-13:
                break
            u = w[support]
            z = M @ (np.append(u, b) if bias else u)
            gz = loss.grad(z)
            rg, rh = _smooth_reg_parts(problem.reg, u, support)
            if bias:
                rg = np.append(rg, 0.0)
                rh = np.pad(rh, ((0, 1), (0, 1)))
            grad = M.T @ gz + rg
            H = (M.T * loss.hess_diag(z)) @ M + rh
            d = np.linalg.lstsq(H, -grad, rcond=None)[0]
            step = 1.0
            while step > 1e-8:
                cand = (np.append(u, b) if bias else u) + step * d
                cu = cand[:support.size]
                if _same_pattern(problem.reg, u, cu, support):
                    break
                step *= 0.5
            w_new = w.copy()
            w_new[support] = cu
            b_new = float(cand[-1]) if bias else b
            val = norm_sub(w_new, b_new)
            if not val < best:
                break
            w, b, best = w_new, b_new, val
    ref = ReferenceSolution(w_star=w, f_star=problem.objective(w, b), b_star=b,
                            subgrad_norm=best)
    if best > subgrad_tol:
        raise NonConvergenceError(
            f"reference subgradient norm {best:.3e} above {subgrad_tol:.1e}", ref)
    return ref


# -- sigma and bounds -----------------------------------------------------------

def estimate_sigma(trace, ref, safety=0.7, noise=1e-10):
    """``safety * min_t (f(w^t) - f*) / ||w^t - w*||^2`` over the trace.

    Records whose objective gap is at rounding level
    (``<= noise * (1 + |f*|)``) carry no curvature information and are
    skipped.
    """
    f = trace.column("f")
    d = trace.column("dist_to_ref")
    gap = f - ref.f_star
    ok = np.isfinite(d) & (d > 0) & (gap > noise * (1.0 + abs(ref.f_star)))
    if not ok.any():
        raise ContractViolation("no trace record is informative for sigma (all at optimum)")
    return float(safety * np.min(gap[ok] / d[ok] ** 2))


@dataclass
class BoundReport:
    """Per-step satisfaction of the convergence bounds.

    Each entry of ``checks`` maps a bound name to a list of
    ``(holds, margin)`` pairs, one per outer step; margin is
    ``rhs - lhs``. ``thm4`` is only present when ``eps`` was supplied and
    never counts toward :attr:`passed`.
    """

    checks: dict = field(default_factory=dict)
    sigma: float = None

    def holds(self, name):
        return all(ok for ok, _ in self.checks.get(name, []))

    @property
    def passed(self):
        return all(self.holds(k) for k in ("thm1", "thm2", "thm3"))


def check_bounds(trace, ref, etas=None, alpha=2.0, eps=None, slack=1e-12):
    """Evaluate the objective bound and the distance contraction bounds.

    * thm1: ``f(w^{k+1}) - f* <= ||w^0 - w*||^2 / (2 sum_{t<=k} eta_t)``
    * thm2: ``d_{t+1}^{(1+(alpha-1) s e)/(1+s e)} <= d_t / (1 + s e)``
    * thm3: ``d_{t+1}^{(1+alpha s e)/(1+2 s e)} <= d_t / sqrt(1 + 2 s e)``
    * thm4: ``d_{t+1} <= d_t / (1 + eps s e)`` (diagnostic)

    with ``d_t = ||w^t - w*||``, ``s = ref.sigma`` and ``e = eta_t``.
    """
    if ref.sigma is None:
        raise ContractViolation("reference sigma is not set")
    f = trace.column("f")
    d = trace.column("dist_to_ref")
    if np.any(~np.isfinite(d)):
        raise ContractViolation("trace lacks distances to the reference")
    etas = trace.column("eta1") if etas is None else np.asarray(etas, dtype=np.float64)
    s = ref.sigma
    tol = slack * (1.0 + abs(ref.f_star))
    csum = np.cumsum(etas)
    rep = BoundReport(sigma=s)
    thm1, thm2, thm3, thm4 = [], [], [], []
    for t in range(len(f) - 1):
        e = etas[t]
        rhs = d[0] ** 2 / (2.0 * csum[t])
        lhs = f[t + 1] - ref.f_star
        thm1.append((bool(lhs <= rhs + tol), float(rhs - lhs)))
        lhs = d[t + 1] ** ((1 + (alpha - 1) * s * e) / (1 + s * e))
        rhs = d[t] / (1 + s * e)
        thm2.append((bool(lhs <= rhs * (1 + 1e-12)), float(rhs - lhs)))
        lhs = d[t + 1] ** ((1 + alpha * s * e) / (1 + 2 * s * e))
        rhs = d[t] / math.sqrt(1 + 2 * s * e)
        thm3.append((bool(lhs <= rhs * (1 + 1e-12)), float(rhs - lhs)))
        if eps is not None:
            rhs = d[t] / (1 + eps * s * e)
            thm4.append((bool(d[t + 1] <= rhs), float(rhs - d[t + 1])))
    rep.checks = {"thm1": thm1, "thm2": thm2, "thm3": thm3}
    if eps is not None:
        rep.checks["thm4"] = thm4
    return rep


def descent_residuals(objectives, iterates, etas):
    """``eta_t (f(w^{t+1}) - f(w^t)) + 0.5 ||w^{t+1} - w^t||^2`` per step;
    non-positive for every step of a correctly stopped proximal iteration."""
    out = []
    for t in range(len(iterates) - 1):
        step = np.asarray(iterates[t + 1]) - np.asarray(iterates[t])
        out.append(etas[t] * (objectives[t + 1] - objectives[t]) + 0.5 * float(step @ step))
    return np.array(out)
