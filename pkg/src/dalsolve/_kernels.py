"""Hot inner-loop kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``DALSOLVE_DISABLE_NUMBA`` is unset (or ``0``). Both paths are
always importable through :func:`get_backend` so they can be compared.

Sparse kernels operate on compressed-sparse-column arrays
(``indptr``, ``indices``, ``data``) restricted to a set of columns, which is
how the augmented Lagrangian Hessian touches only the active variables.
"""
import os
from types import SimpleNamespace

import numpy as np

__all__ = ["BACKEND", "get_backend", "csc_matvec_cols", "csc_rmatvec_cols",
           "csc_row_sq_cols", "soft_threshold", "group_shrink",
           "group_jacobian_apply"]


# -- pure numpy -------------------------------------------------------------

def _segments(indptr, cols):
    """Positions into ``data`` of every stored entry of ``cols`` and the
    owning column slot for each position."""
    starts = indptr[cols]
    lens = indptr[cols + 1] - starts
    total = int(lens.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), lens
    slot = np.repeat(np.arange(len(cols)), lens)
    offsets = np.arange(total) - np.repeat(np.cumsum(lens) - lens, lens)
    pos = starts[slot] + offsets
    return pos, slot, lens


def _np_csc_matvec_cols(indptr, indices, data, cols, x, m):
    pos, slot, _ = _segments(indptr, cols)
    return np.bincount(indices[pos], weights=data[pos] * x[slot], minlength=m)


def _np_csc_rmatvec_cols(indptr, indices, data, cols, y):
    pos, slot, _ = _segments(indptr, cols)
    return np.bincount(slot, weights=data[pos] * y[indices[pos]],
                       minlength=len(cols))


def _np_csc_row_sq_cols(indptr, indices, data, cols, weights, m):
    pos, slot, _ = _segments(indptr, cols)
    return np.bincount(indices[pos], weights=data[pos] ** 2 * weights[slot],
                       minlength=m)


def _np_soft_threshold(y, thresh):
    return np.sign(y) * np.maximum(np.abs(y) - thresh, 0.0)


def _np_group_shrink(y, ptr, thresh):
    ngroups = len(ptr) - 1
    sizes = np.diff(ptr)
    sq = np.zeros(ngroups)
    nonempty = sizes > 0
    if y.size:
        sq[nonempty] = np.add.reduceat(y * y, ptr[:-1][nonempty])
    norms = np.sqrt(sq)
    factor = np.zeros(ngroups)
    keep = norms > thresh
    factor[keep] = (norms[keep] - thresh) / norms[keep]
    return y * np.repeat(factor, sizes), norms


def _np_group_jacobian_apply(u, ptr, ratios, q_unit):
    sizes = np.diff(ptr)
    ngroups = len(sizes)
    dots = np.zeros(ngroups)
    nonempty = sizes > 0
    if u.size:
        dots[nonempty] = np.add.reduceat(u * q_unit, ptr[:-1][nonempty])
    r = np.repeat(ratios, sizes)
    return (1.0 - r) * u + r * q_unit * np.repeat(dots, sizes)


numpy_kernels = SimpleNamespace(
    name="numpy",
    csc_matvec_cols=_np_csc_matvec_cols,
    csc_rmatvec_cols=_np_csc_rmatvec_cols,
    csc_row_sq_cols=_np_csc_row_sq_cols,
    soft_threshold=_np_soft_threshold,
    group_shrink=_np_group_shrink,
    group_jacobian_apply=_np_group_jacobian_apply,
)


# -- numba ------------------------------------------------------------------

def _build_numba():
    from numba import njit

    @njit(cache=True)
    def csc_matvec_cols(indptr, indices, data, cols, x, m):
        out = np.zeros(m)
        for k in range(cols.shape[0]):
            j = cols[k]
            xk = x[k]
            if xk == 0.0:
                continue
            for p in range(indptr[j], indptr[j + 1]):
                out[indices[p]] += data[p] * xk
        return out

    @njit(cache=True)
    def csc_rmatvec_cols(indptr, indices, data, cols, y):
        out = np.zeros(cols.shape[0])
        for k in range(cols.shape[0]):
            j = cols[k]
            acc = 0.0
            for p in range(indptr[j], indptr[j + 1]):
                acc += data[p] * y[indices[p]]
            out[k] = acc
        return out

    @njit(cache=True)
    def csc_row_sq_cols(indptr, indices, data, cols, weights, m):
        out = np.zeros(m)
        for k in range(cols.shape[0]):
            j = cols[k]
            wk = weights[k]
            for p in range(indptr[j], indptr[j + 1]):
                out[indices[p]] += wk * data[p] * data[p]
        return out

    @njit(cache=True)
    def soft_threshold(y, thresh):
        out = np.empty_like(y)
        for i in range(y.shape[0]):
            a = abs(y[i]) - thresh[i]
            if a > 0.0:
                out[i] = a if y[i] > 0.0 else -a
            else:
                out[i] = 0.0
        return out

    @njit(cache=True)
    def group_shrink(y, ptr, thresh):
        ngroups = ptr.shape[0] - 1
        out = np.zeros_like(y)
        norms = np.empty(ngroups)
        for g in range(ngroups):
            acc = 0.0
            for i in range(ptr[g], ptr[g + 1]):
                acc += y[i] * y[i]
            nrm = np.sqrt(acc)
            norms[g] = nrm
            if nrm > thresh:
                f = (nrm - thresh) / nrm
                for i in range(ptr[g], ptr[g + 1]):
                    out[i] = f * y[i]
        return out, norms

    @njit(cache=True)
    def group_jacobian_apply(u, ptr, ratios, q_unit):
        out = np.empty_like(u)
        for g in range(ptr.shape[0] - 1):
            dot = 0.0
            for i in range(ptr[g], ptr[g + 1]):
                dot += u[i] * q_unit[i]
            r = ratios[g]
            for i in range(ptr[g], ptr[g + 1]):
                out[i] = (1.0 - r) * u[i] + r * q_unit[i] * dot
        return out

    def _soft_threshold(y, thresh):
        t = np.broadcast_to(np.asarray(thresh, dtype=np.float64), y.shape)
        return soft_threshold(y, np.ascontiguousarray(t))

    return SimpleNamespace(
        name="numba",
        csc_matvec_cols=csc_matvec_cols,
        csc_rmatvec_cols=csc_rmatvec_cols,
        csc_row_sq_cols=csc_row_sq_cols,
        soft_threshold=_soft_threshold,
        group_shrink=lambda y, ptr, thresh: group_shrink(y, ptr, float(thresh)),
        group_jacobian_apply=group_jacobian_apply,
    )


try:
    numba_kernels = _build_numba()
except ImportError:  # pragma: no cover
    numba_kernels = None


def get_backend(name):
    """Return the kernel namespace ``"numba"`` or ``"numpy"``."""
    if name == "numpy":
        return numpy_kernels
    if name == "numba":
        if numba_kernels is None:  # pragma: no cover
            raise RuntimeError("numba is not available")
        return numba_kernels
    raise ValueError(f"unknown kernel backend {name!r}")


def _select():
    if os.environ.get("DALSOLVE_DISABLE_NUMBA", "0") not in ("", "0"):
        return numpy_kernels
    return numba_kernels if numba_kernels is not None else numpy_kernels


_active = _select()
BACKEND = _active.name

csc_matvec_cols = _active.csc_matvec_cols
csc_rmatvec_cols = _active.csc_rmatvec_cols
csc_row_sq_cols = _active.csc_row_sq_cols
soft_threshold = _active.soft_threshold
group_shrink = _active.group_shrink
group_jacobian_apply = _active.group_jacobian_apply
