"""Regularizers, proximity operators and Moreau envelopes.

For a regularizer ``phi`` with strength ``lam`` every method takes a
``scale`` argument and works with ``phi_{lam*scale} = scale * phi_lam``:

* ``prox(y, scale)``           argmin_x 0.5||y - x||^2 + phi_{lam*scale}(x),
                               returned together with an :class:`ActiveStructure`
* ``envelope_star(y, scale)``  Moreau envelope of the conjugate phi*_{lam*scale};
                               its gradient is ``prox(y, scale)``
* ``conj_prox(z, scale)``      proximity operator of the conjugate (the
                               projection onto C_{lam*scale} for support functions)

Ratios ``y/|y|`` are taken as 0 at ``y == 0``, so thresholding is single
valued and needs no tie-break.
"""
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ContractViolation

__all__ = ["ActiveStructure", "Regularizer", "L1", "WeightedL1", "GroupLasso",
           "ElasticNet", "SupportFunction", "TraceNorm", "project_linf_ball",
           "moreau_decomposition_check", "make_regularizer"]


@dataclass(frozen=True)
class ActiveStructure:
    """Jacobian of the prox map restricted to the coordinates it moves.

    ``active`` lists the coordinates with nonzero Jacobian rows. The Jacobian
    on them is ``diag(weights)`` (weights ``None`` means identity) or, for
    groups, the block ``(1 - r) I + r q q^T`` per active group, with the
    groups laid out contiguously in ``active`` according to ``group_ptr``.
    """

    active: np.ndarray
    weights: np.ndarray = None
    group_ptr: np.ndarray = None
    ratios: np.ndarray = None
    q_unit: np.ndarray = None

    @property
    def size(self):
        return len(self.active)

    def jacobian_apply(self, u):
        if self.group_ptr is not None:
            return _kernels.group_jacobian_apply(u, self.group_ptr, self.ratios,
                                                 self.q_unit)
        if self.weights is not None:
            return self.weights * u
        return u

    def jacobian_diag(self):
        if self.group_ptr is not None:
            r = np.repeat(self.ratios, np.diff(self.group_ptr))
            return (1.0 - r) + r * self.q_unit ** 2
        if self.weights is not None:
            return self.weights
        return np.ones(self.size)


def _threshold_active(y, thresh):
    """Coordinates the soft-threshold passes through (identity where thresh==0)."""
    return np.flatnonzero((np.abs(y) > thresh) | (thresh == 0))


class Regularizer:
    """Base class. ``support_type`` marks support functions of a set C_lam,
    whose conjugate is the indicator of C_lam and whose dual feasibility is
    measured by ``gauge``."""

    support_type = True
    has_hessian = True
    unregularized = np.zeros(0, dtype=np.int64)

    def value(self, w):
        raise NotImplementedError

    def prox(self, y, scale=1.0):
        raise NotImplementedError

    def envelope_star(self, y, scale=1.0):
        x, _ = self.prox(y, scale)
        return 0.5 * float(np.dot(x, x))

    def conj_prox(self, z, scale=1.0):
        raise NotImplementedError

    def gauge(self, v):
        """Smallest ``s >= 0`` with ``v`` in ``s * C_lam`` (inf if none)."""
        raise NotImplementedError

    def conj_value(self, v):
        """phi*_lam(v); an indicator for support functions."""
        g = self.gauge(v)
        return 0.0 if g <= 1.0 + 1e-12 else np.inf


class L1(Regularizer):
    """``lam * ||w||_1``."""

    def __init__(self, lam):
        if lam < 0:
            raise ContractViolation("lam must be non-negative")
        self.lam = float(lam)

    def value(self, w):
        return self.lam * float(np.sum(np.abs(w)))

    def prox(self, y, scale=1.0):
        y = np.asarray(y, dtype=np.float64)
        t = self.lam * scale
        x = _kernels.soft_threshold(y, t)
        active = np.arange(y.size) if t == 0 else np.flatnonzero(x)
        return x, ActiveStructure(active)

    def envelope_star(self, y, scale=1.0):
        r = np.maximum(np.abs(y) - self.lam * scale, 0.0)
        return 0.5 * float(np.dot(r, r))

    def conj_prox(self, z, scale=1.0):
        return project_linf_ball(z, self.lam * scale)

    def gauge(self, v):
        vmax = float(np.max(np.abs(v))) if np.size(v) else 0.0
        if self.lam == 0:
            return 0.0 if vmax == 0 else np.inf
        return vmax / self.lam


class WeightedL1(Regularizer):
    """``sum_j lam_j |w_j|``; coordinates with ``lam_j == 0`` are free."""

    def __init__(self, lams):
        lams = np.asarray(lams, dtype=np.float64).reshape(-1)
        if np.any(lams < 0):
            raise ContractViolation("weights must be non-negative")
        self.lams = lams
        self.unregularized = np.flatnonzero(lams == 0)

    def value(self, w):
        return float(np.sum(self.lams * np.abs(w)))

    def prox(self, y, scale=1.0):
        y = np.asarray(y, dtype=np.float64)
        t = self.lams * scale
        x = _kernels.soft_threshold(y, t)
        return x, ActiveStructure(_threshold_active(y, t))

    def envelope_star(self, y, scale=1.0):
        r = np.maximum(np.abs(y) - self.lams * scale, 0.0)
        return 0.5 * float(np.dot(r, r))

    def conj_prox(self, z, scale=1.0):
        t = self.lams * scale
        return np.clip(z, -t, t)

    def gauge(self, v):
        v = np.abs(np.asarray(v))
        pos = self.lams > 0
        if np.any(v[~pos] > 0):
            return np.inf
        return float(np.max(v[pos] / self.lams[pos])) if pos.any() else 0.0


class GroupLasso(Regularizer):
    """``lam * sum_g ||w_g||`` over a disjoint partition of the coordinates.

    ``groups`` is either a sequence of index arrays or one integer label per
    coordinate.
    """

    def __init__(self, lam, groups, n=None):
        if lam < 0:
            raise ContractViolation("lam must be non-negative")
        self.lam = float(lam)
        if isinstance(groups, np.ndarray) and groups.ndim == 1 and \
                np.issubdtype(groups.dtype, np.integer):
            labels = groups
            _, inv = np.unique(labels, return_inverse=True)
            groups = [np.flatnonzero(inv == k) for k in range(inv.max() + 1)] \
                if labels.size else []
        groups = [np.asarray(g, dtype=np.int64).reshape(-1) for g in groups]
        perm = np.concatenate(groups) if groups else np.zeros(0, dtype=np.int64)
        n = perm.size if n is None else n
        if perm.size != n or not np.array_equal(np.sort(perm), np.arange(n)):
            raise ContractViolation("groups must be a disjoint partition of 0..n-1")
        self.groups = groups
        self.n = n
        self.perm = perm
        self.ptr = np.concatenate([[0], np.cumsum([len(g) for g in groups])]).astype(np.int64)

    def _norms(self, y):
        sq = np.zeros(len(self.groups))
        sizes = np.diff(self.ptr)
        yp = np.asarray(y)[self.perm]
        nonempty = sizes > 0
        if yp.size:
            sq[nonempty] = np.add.reduceat(yp * yp, self.ptr[:-1][nonempty])
        return np.sqrt(sq)

    def value(self, w):
        return self.lam * float(np.sum(self._norms(w)))

    def prox(self, y, scale=1.0):
        y = np.asarray(y, dtype=np.float64)
        t = self.lam * scale
        yp = np.ascontiguousarray(y[self.perm])
        xp, norms = _kernels.group_shrink(yp, self.ptr, t)
        x = np.empty_like(y)
        x[self.perm] = xp
        keep = np.flatnonzero((norms > t) | (t == 0))
        sizes = np.diff(self.ptr)[keep]
        starts = self.ptr[keep]
        idx = np.concatenate([np.arange(s, s + k) for s, k in zip(starts, sizes)]) \
            if keep.size else np.zeros(0, dtype=np.int64)
        safe = np.where(norms[keep] > 0, norms[keep], 1.0)
        ratios = np.where(norms[keep] > 0, t / safe, 0.0)
        q_unit = yp[idx] / np.repeat(safe, sizes)
        group_ptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        return x, ActiveStructure(self.perm[idx], group_ptr=group_ptr,
                                  ratios=ratios, q_unit=q_unit)

    def envelope_star(self, y, scale=1.0):
        r = np.maximum(self._norms(y) - self.lam * scale, 0.0)
        return 0.5 * float(np.dot(r, r))

    def conj_prox(self, z, scale=1.0):
        z = np.asarray(z, dtype=np.float64)
        t = self.lam * scale
        norms = self._norms(z)
        f = np.where(norms > t, t / np.where(norms > 0, norms, 1.0), 1.0)
        out = np.empty_like(z)
        out[self.perm] = z[self.perm] * np.repeat(f, np.diff(self.ptr))
        return out

    def gauge(self, v):
        norms = self._norms(v)
        vmax = float(norms.max()) if norms.size else 0.0
        if self.lam == 0:
            return 0.0 if vmax == 0 else np.inf
        return vmax / self.lam


class ElasticNet(Regularizer):
    """``lam * sum((1 - theta)|w_j| + theta/2 w_j^2)``.

    Not a support function when ``theta > 0``: the envelope uses its own
    closed form and the dual uses ``conj_value`` instead of a gauge.
    """

    def __init__(self, lam, theta):
        if lam < 0 or not 0 <= theta <= 1:
            raise ContractViolation("need lam >= 0 and 0 <= theta <= 1")
        self.lam = float(lam)
        self.theta = float(theta)
        self.support_type = self.theta == 0

    def value(self, w):
        w = np.asarray(w)
        return self.lam * float(np.sum((1 - self.theta) * np.abs(w)
                                       + 0.5 * self.theta * w * w))

    def _params(self, scale):
        ls = self.lam * scale
        return ls * (1 - self.theta), 1.0 + ls * self.theta

    def prox(self, y, scale=1.0):
        y = np.asarray(y, dtype=np.float64)
        c, denom = self._params(scale)
        x = _kernels.soft_threshold(y, c) / denom
        active = _threshold_active(y, np.full(y.size, c))
        return x, ActiveStructure(active, weights=np.full(active.size, 1.0 / denom))

    def envelope_star(self, y, scale=1.0):
        c, denom = self._params(scale)
        r = np.maximum(np.abs(y) - c, 0.0) / denom
        return 0.5 * denom * float(np.dot(r, r))

    def conj_prox(self, z, scale=1.0):
        z = np.asarray(z, dtype=np.float64)
        c, denom = self._params(scale)
        k = denom - 1.0
        a = np.abs(z)
        return np.sign(z) * np.where(a <= c, a, (k * a + c) / denom)

    def gauge(self, v):
        if not self.support_type:
            raise NotImplementedError("elastic net with theta > 0 has no gauge")
        return L1(self.lam).gauge(v)

    def conj_value(self, v):
        if self.support_type:
            return super().conj_value(v)
        r = np.maximum(np.abs(v) - self.lam * (1 - self.theta), 0.0)
        return float(np.dot(r, r)) / (2.0 * self.lam * self.theta)


class SupportFunction(Regularizer):
    """Support function of a user-supplied convex set.

    ``project(y, scale)`` must return the Euclidean projection of ``y`` onto
    ``scale * C_lam``. ``support`` (the function value) and ``gauge`` are
    optional; without them ``value``/duality-gap computations raise.
    There is no Hessian structure, so DAL's Newton solver cannot use it.
    """

    has_hessian = False

    def __init__(self, project, support=None, gauge=None):
        self.project = project
        self._support = support
        self._gauge = gauge

    def value(self, w):
        if self._support is None:
            raise NotImplementedError("no support-function evaluator supplied")
        return float(self._support(w))

    def prox(self, y, scale=1.0):
        y = np.asarray(y, dtype=np.float64)
        x = y - self.project(y, scale)
        return x, ActiveStructure(np.flatnonzero(x))

    def conj_prox(self, z, scale=1.0):
        return self.project(np.asarray(z, dtype=np.float64), scale)

    def gauge(self, v):
        if self._gauge is None:
            raise NotImplementedError("no gauge supplied")
        return float(self._gauge(v))


class TraceNorm(Regularizer):
    """``lam * sum(singular values)`` of ``w.reshape(shape)`` (row-major).

    The envelope sums over all ``min(shape)`` singular values. Provided as
    an operator only; DAL's inner Newton solver does not support it.
    """

    has_hessian = False

    def __init__(self, lam, shape):
        if lam < 0:
            raise ContractViolation("lam must be non-negative")
        self.lam = float(lam)
        self.shape = tuple(shape)

    def _svd(self, y):
        return np.linalg.svd(np.asarray(y, dtype=np.float64).reshape(self.shape),
                             full_matrices=False)

    def value(self, w):
        return self.lam * float(np.sum(np.linalg.svd(
            np.asarray(w).reshape(self.shape), compute_uv=False)))

    def prox(self, y, scale=1.0):
        U, s, Vt = self._svd(y)
        s = np.maximum(s - self.lam * scale, 0.0)
        x = ((U * s) @ Vt).reshape(-1)
        return x, ActiveStructure(np.flatnonzero(x))

    def envelope_star(self, y, scale=1.0):
        s = np.linalg.svd(np.asarray(y).reshape(self.shape), compute_uv=False)
        r = np.maximum(s - self.lam * scale, 0.0)
        return 0.5 * float(np.dot(r, r))

    def conj_prox(self, z, scale=1.0):
        U, s, Vt = self._svd(z)
        return ((U * np.minimum(s, self.lam * scale)) @ Vt).reshape(-1)

    def gauge(self, v):
        smax = float(np.linalg.norm(np.asarray(v).reshape(self.shape), 2))
        if self.lam == 0:
            return 0.0 if smax == 0 else np.inf
        return smax / self.lam


def project_linf_ball(y, radius):
    """Clamp every coordinate of ``y`` to ``[-radius, radius]``."""
    return np.clip(np.asarray(y, dtype=np.float64), -radius, radius)


def moreau_decomposition_check(f_prox, fstar_prox, z, tol=1e-10):
    """True iff ``f_prox(z) + fstar_prox(z) == z`` to ``tol`` (relative to 1+|z|)."""
    z = np.asarray(z, dtype=np.float64)
    resid = np.max(np.abs(f_prox(z) + fstar_prox(z) - z)) if z.size else 0.0
    return bool(resid <= tol * (1.0 + np.max(np.abs(z), initial=0.0)))


def make_regularizer(name, lam, n, *, theta=0.5, group_size=None, weights=None):
    """Build a regularizer from CLI-style options."""
    if name == "l1":
        return L1(lam)
    if name == "weighted-l1":
        w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
        return WeightedL1(lam * w)
    if name == "group":
        if not group_size:
            raise ValueError("group lasso needs a group size")
        return GroupLasso(lam, np.arange(n) // group_size)
    if name == "elastic-net":
        return ElasticNet(lam, theta)
    raise ValueError(f"unknown regularizer {name!r}")
