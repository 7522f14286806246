"""Datasets: file loaders, a writer and the synthetic sparse-classification generator."""
import csv
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .design import as_operator, standardize
from .errors import InputError

__all__ = ["Dataset", "load_dataset", "load_libsvm", "load_csv", "write_libsvm",
           "synth", "lambda_from_bar"]


@dataclass
class Dataset:
    """Design matrix (ndarray or scipy sparse), labels and where they came from.

    ``beta`` is the generating coefficient vector for synthetic data.
    """

    design: object
    labels: np.ndarray
    provenance: str = ""
    beta: np.ndarray = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.float64).reshape(-1)
        if self.design.shape[0] != self.labels.size:
            raise InputError(f"{self.design.shape[0]} rows but {self.labels.size} labels")

    @property
    def shape(self):
        return self.design.shape

    def operator(self, standardized=False):
        op = as_operator(self.design)
        return standardize(op) if standardized else op


def _map_binary(labels, source):
    vals = np.unique(labels)
    if vals.size and np.all(np.isin(vals, (0.0, 1.0))) and 0.0 in vals:
        warnings.warn(f"{source}: labels in {{0, 1}} mapped to {{-1, +1}}", stacklevel=3)
        return 2.0 * labels - 1.0
    return labels


def load_libsvm(path, n_features=None, map_binary=True):
    """Parse ``<label> <index>:<value> ...`` lines (1-based indices) into CSC."""
    labels, rows, cols, vals = [], [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            try:
                labels.append(float(parts[0]))
            except ValueError:
                raise InputError(f"bad label {parts[0]!r}", line=lineno) from None
            row = len(labels) - 1
            seen = set()
            for tok in parts[1:]:
                idx, sep, val = tok.partition(":")
                try:
                    j = int(idx)
                    v = float(val)
                except ValueError:
                    j = None
                if not sep or j is None:
                    raise InputError(f"bad feature token {tok!r}", line=lineno)
                if j < 1:
                    raise InputError(f"feature index {j} is not 1-based", line=lineno)
                if j in seen:
                    raise InputError(f"duplicate feature index {j}", line=lineno)
                if n_features is not None and j > n_features:
                    raise InputError(f"feature index {j} exceeds {n_features}", line=lineno)
                seen.add(j)
                rows.append(row)
                cols.append(j - 1)
                vals.append(v)
    if not labels:
        raise InputError(f"{path}: no data lines")
    n = n_features if n_features is not None else (max(cols) + 1 if cols else 0)
    X = sp.csc_matrix((vals, (rows, cols)), shape=(len(labels), n))
    y = np.array(labels)
    if map_binary:
        y = _map_binary(y, path)
    return Dataset(X, y, provenance=str(path))


def load_csv(path, header=False, map_binary=True):
    """Dense comma-separated rows; the first column is the label."""
    rows = []
    width = None
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if header and lineno == 1:
                continue
            if not rec or all(not c.strip() for c in rec):
                continue
            try:
                vals = [float(c) for c in rec]
            except ValueError:
                raise InputError("non-numeric field", line=lineno) from None
            if width is None:
                width = len(vals)
                if width < 1:
                    raise InputError("no label column", line=lineno)
            elif len(vals) != width:
                raise InputError(f"expected {width} fields, got {len(vals)}", line=lineno)
            rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data lines")
    M = np.array(rows)
    y = M[:, 0]
    if map_binary:
        y = _map_binary(y, path)
    return Dataset(np.ascontiguousarray(M[:, 1:]), y, provenance=str(path))


def load_dataset(path, fmt="libsvm", **kwargs):
    """Load ``fmt`` in ``{"libsvm", "csv"}``."""
    if fmt == "libsvm":
        return load_libsvm(path, **kwargs)
    if fmt == "csv":
        return load_csv(path, **kwargs)
    raise ValueError(f"unknown data format {fmt!r}")


def write_libsvm(path, design, labels):
    """Write in the sparse text format; values use round-trip float repr."""
    X = sp.csr_matrix(design)
    X.sort_indices()
    with open(path, "w", encoding="utf-8") as fh:
        for i, lab in enumerate(np.asarray(labels, dtype=np.float64)):
            lo, hi = X.indptr[i], X.indptr[i + 1]
            toks = [f"{j + 1}:{v!r}" for j, v in
                    zip(X.indices[lo:hi].tolist(), X.data[lo:hi].tolist())]
            fh.write(" ".join([repr(float(lab))] + toks) + "\n")


def synth(m, n, support_frac=0.04, noise=0.01, seed=0):
    """Gaussian design, sparse Gaussian ``beta``, labels ``sign(A beta + noise xi)``.

    The support has ``round(support_frac * n)`` coordinates. Exact zeros of
    the sign are labelled +1. Deterministic for a given seed.
    """
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    k = int(round(support_frac * n))
    beta = np.zeros(n)
    support = rng.choice(n, size=k, replace=False)
    beta[support] = rng.standard_normal(k)
    xi = rng.standard_normal(m)
    y = np.sign(A @ beta + noise * xi)
    y[y == 0] = 1.0
    return Dataset(A, y, provenance=f"synth(m={m}, n={n}, seed={seed})", beta=beta)


def lambda_from_bar(A, y, lambda_bar):
    """``lambda_bar * ||A^T y||_inf``."""
    v = as_operator(A).apply_adjoint(np.asarray(y, dtype=np.float64))
    return float(lambda_bar) * float(np.max(np.abs(v))) if v.size else 0.0
