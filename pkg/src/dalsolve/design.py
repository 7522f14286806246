"""Matrix-free design operators.

Every operator exposes ``apply`` (``A @ x``), ``apply_adjoint``
(``A.T @ y``), ``column_subset`` and ``row_sq_norms``; the last two exist so
the dual Hessian can be applied and preconditioned using only the active
columns. Operators are immutable after construction apart from the shared
:class:`WorkCounter`, which only tallies touched matrix entries.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import ContractViolation

__all__ = ["WorkCounter", "DesignOperator", "DenseOperator", "SparseOperator",
           "SparseColumnView", "StandardizationStats", "StandardizedOperator",
           "as_operator", "standardize"]


class WorkCounter:
    """Counts matrix entries read by products (a flop proxy)."""

    def __init__(self):
        self.entries = 0

    def reset(self):
        self.entries = 0


class DesignOperator:
    """Abstract linear map from R^n (coefficients) to R^m (samples)."""

    shape = (0, 0)
    counter = None

    @property
    def rows(self):
        return self.shape[0]

    @property
    def cols(self):
        return self.shape[1]

    def _check_x(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.cols,):
            raise ContractViolation(
                f"expected vector of length {self.cols}, got shape {x.shape}")
        return x

    def _check_y(self, y):
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.rows,):
            raise ContractViolation(
                f"expected vector of length {self.rows}, got shape {y.shape}")
        return y

    def _check_cols(self, J):
        J = np.asarray(J, dtype=np.int64).reshape(-1)
        if J.size and (J.min() < 0 or J.max() >= self.cols):
            raise IndexError(f"column index out of range for {self.cols} columns")
        return J

    def apply(self, x):
        raise NotImplementedError

    def apply_adjoint(self, y):
        raise NotImplementedError

    def column_subset(self, J):
        raise NotImplementedError

    def row_sq_norms(self, weights):
        """Return ``sum_j weights[j] * A[:, j]**2`` (length m)."""
        raise NotImplementedError

    def to_dense(self):
        eye = np.eye(self.cols)
        return np.column_stack([self.apply(e) for e in eye]) if self.cols else \
            np.zeros((self.rows, 0))

    def column_stats(self):
        """Per-column mean and population standard deviation.

        Constant columns get their exact value as mean and a scale of 1 so
        that the centered column is exactly zero.
        """
        raise NotImplementedError


class DenseOperator(DesignOperator):
    def __init__(self, A, counter=None):
        A = np.ascontiguousarray(A, dtype=np.float64)
        if A.ndim != 2:
            raise ContractViolation("dense design must be two-dimensional")
        self.A = A
        self.shape = A.shape
        self.counter = counter if counter is not None else WorkCounter()

    def apply(self, x):
        x = self._check_x(x)
        self.counter.entries += self.A.size
        return self.A @ x

    def apply_adjoint(self, y):
        y = self._check_y(y)
        self.counter.entries += self.A.size
        return self.A.T @ y

    def column_subset(self, J):
        J = self._check_cols(J)
        return DenseOperator(self.A[:, J], counter=self.counter)

    def row_sq_norms(self, weights):
        weights = self._check_x(weights)
        self.counter.entries += self.A.size
        return (self.A * self.A) @ weights

    def to_dense(self):
        return self.A.copy()

    def column_stats(self):
        A = self.A
        means = A.mean(axis=0) if A.shape[0] else np.zeros(A.shape[1])
        scales = A.std(axis=0) if A.shape[0] else np.ones(A.shape[1])
        if A.shape[0]:
            const = np.all(A == A[0], axis=0)
            means[const] = A[0, const]
            scales[const] = 1.0
        scales[scales == 0] = 1.0
        return StandardizationStats(means, scales)


class SparseOperator(DesignOperator):
    """Compressed-sparse-column design.

    Full products go through scipy; column subsets are zero-copy
    :class:`SparseColumnView` objects driven by the compiled kernels.
    """

    def __init__(self, matrix, counter=None):
        M = sp.csc_matrix(matrix, dtype=np.float64)
        M.sum_duplicates()
        M.sort_indices()
        self.matrix = M
        self.indptr = M.indptr.astype(np.int64)
        self.indices = M.indices.astype(np.int64)
        self.data = M.data
        self.shape = M.shape
        self.counter = counter if counter is not None else WorkCounter()

    @classmethod
    def from_csc_arrays(cls, indptr, indices, data, shape):
        return cls(sp.csc_matrix((data, indices, indptr), shape=shape))

    def apply(self, x):
        x = self._check_x(x)
        self.counter.entries += self.matrix.nnz
        return self.matrix @ x

    def apply_adjoint(self, y):
        y = self._check_y(y)
        self.counter.entries += self.matrix.nnz
        return self.matrix.T @ y

    def column_subset(self, J):
        return SparseColumnView(self, self._check_cols(J))

    def row_sq_norms(self, weights):
        return self.column_subset(np.arange(self.cols)).row_sq_norms(weights)

    def to_dense(self):
        return self.matrix.toarray()

    def column_stats(self):
        m, n = self.shape
        M = self.matrix
        nnz = np.diff(self.indptr)
        sums = np.asarray(M.sum(axis=0)).ravel()
        means = sums / m if m else np.zeros(n)
        col = np.repeat(np.arange(n), nnz)
        dev = (self.data - means[col]) ** 2
        ss = np.bincount(col, weights=dev, minlength=n) + (m - nnz) * means ** 2
        scales = np.sqrt(ss / m) if m else np.ones(n)
        # exact constants: all-zero columns, or fully stored equal values
        zero = nnz == 0
        means[zero] = 0.0
        scales[zero] = 1.0
        full = nnz == m
        if m and full.any():
            first = np.zeros(n)
            first[~zero] = self.data[self.indptr[:-1][~zero]]
            mx = np.full(n, -np.inf)
            mn = np.full(n, np.inf)
            np.maximum.at(mx, col, self.data)
            np.minimum.at(mn, col, self.data)
            const = full & (mx == mn)
            means[const] = first[const]
            scales[const] = 1.0
        scales[scales == 0] = 1.0
        return StandardizationStats(means, scales)


class SparseColumnView(DesignOperator):
    """Columns ``cols`` of a :class:`SparseOperator`, without copying."""

    def __init__(self, parent, cols):
        self.parent = parent
        self.cols_index = np.ascontiguousarray(cols, dtype=np.int64)
        self.shape = (parent.rows, len(self.cols_index))
        self.counter = parent.counter

    def _work(self):
        p = self.parent
        return int((p.indptr[self.cols_index + 1] - p.indptr[self.cols_index]).sum())

    def apply(self, x):
        x = self._check_x(x)
        p = self.parent
        self.counter.entries += self._work()
        return _kernels.csc_matvec_cols(p.indptr, p.indices, p.data,
                                        self.cols_index, x, p.rows)

    def apply_adjoint(self, y):
        y = self._check_y(y)
        p = self.parent
        self.counter.entries += self._work()
        return _kernels.csc_rmatvec_cols(p.indptr, p.indices, p.data,
                                         self.cols_index, y)

    def column_subset(self, J):
        J = self._check_cols(J)
        return SparseColumnView(self.parent, self.cols_index[J])

    def row_sq_norms(self, weights):
        weights = self._check_x(weights)
        p = self.parent
        self.counter.entries += self._work()
        return _kernels.csc_row_sq_cols(p.indptr, p.indices, p.data,
                                        self.cols_index, weights, p.rows)

    def to_dense(self):
        return self.parent.matrix[:, self.cols_index].toarray()


@dataclass(frozen=True)
class StandardizationStats:
    """Per-feature means and scales (zero deviations already replaced by 1)."""

    means: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        if np.any(~(np.asarray(self.scales) > 0)):
            raise ContractViolation("standardization scales must be positive")

    def subset(self, J):
        return StandardizationStats(self.means[J], self.scales[J])


class StandardizedOperator(DesignOperator):
    """Lazy ``(A - 1 m^T) S^{-1}``; sparsity of ``A`` is preserved."""

    def __init__(self, base, stats):
        if stats.means.shape != (base.cols,) or stats.scales.shape != (base.cols,):
            raise ContractViolation("statistics do not match operator width")
        self.base = base
        self.stats = stats
        self.shape = base.shape
        self.counter = base.counter

    def apply(self, x):
        x = self._check_x(x)
        xs = x / self.stats.scales
        return self.base.apply(xs) - np.dot(self.stats.means, xs)

    def apply_adjoint(self, y):
        y = self._check_y(y)
        yc = y - y.mean() if y.size else y
        return self.base.apply_adjoint(yc) / self.stats.scales

    def column_subset(self, J):
        J = self._check_cols(J)
        return StandardizedOperator(self.base.column_subset(J), self.stats.subset(J))

    def row_sq_norms(self, weights):
        weights = self._check_x(weights)
        s2 = self.stats.scales ** 2
        mu = self.stats.means
        return (self.base.row_sq_norms(weights / s2)
                - 2.0 * self.base.apply(weights * mu / s2)
                + np.dot(weights, mu * mu / s2))

    def to_dense(self):
        return (self.base.to_dense() - self.stats.means) / self.stats.scales


def as_operator(A):
    """Wrap an ndarray, scipy sparse matrix or operator as a DesignOperator."""
    if isinstance(A, DesignOperator):
        return A
    if sp.issparse(A):
        return SparseOperator(A)
    return DenseOperator(A)


def standardize(op, stats=None):
    """Zero-mean, unit-deviation view of ``op`` (never materialized)."""
    op = as_operator(op)
    if stats is None:
        stats = op.column_stats()
    return StandardizedOperator(op, stats)
