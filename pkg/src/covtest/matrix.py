"""Feature matrix container, preprocessing and small linear-algebra helpers.

The data matrix is stored features x samples (p x n): rows are features
(genes), columns are samples. All functions accept either a
:class:`FeatureMatrix` or a plain 2-D array and return the same kind.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import (
    ConstantOutcome,
    MalformedMatrix,
    RankDeficientDesign,
    SubsetTooSmall,
    ZeroVarianceRow,
)

# Grid used to snap canonical outcomes; coarse enough to absorb the rounding
# of an affine recoding such as 3*y + 7.
_CANONICAL_BITS = 32


@dataclass(frozen=True)
class FeatureMatrix:
    """p x n measurements with optional row (feature) and column (sample) names."""

    values: np.ndarray
    feature_ids: tuple[str, ...] | None = None
    sample_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise MalformedMatrix(f"expected a 2-D matrix, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise MalformedMatrix("matrix contains missing or non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        p, n = values.shape
        if self.feature_ids is not None:
            ids = tuple(str(f) for f in self.feature_ids)
            if len(ids) != p:
                raise MalformedMatrix(f"{len(ids)} feature ids for {p} rows")
            object.__setattr__(self, "feature_ids", ids)
        if self.sample_ids is not None:
            ids = tuple(str(s) for s in self.sample_ids)
            if len(ids) != n:
                raise MalformedMatrix(f"{len(ids)} sample ids for {n} columns")
            object.__setattr__(self, "sample_ids", ids)

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def with_values(self, values: np.ndarray) -> "FeatureMatrix":
        return replace(self, values=values)

    def subset_rows(self, rows: Sequence[int]) -> "FeatureMatrix":
        rows = list(rows)
        ids = None if self.feature_ids is None else tuple(self.feature_ids[i] for i in rows)
        return FeatureMatrix(self.values[rows], ids, self.sample_ids)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


@dataclass(frozen=True)
class Outcome:
    """Outcome vector y.

    ``encoding`` is ``"raw"`` for measured outcomes and ``"two-group"`` for the
    1/n1, -1/n2 coding of a group contrast.
    """

    values: np.ndarray
    centered: bool = False
    encoding: str = "raw"

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(values)):
            raise ConstantOutcome("outcome contains missing or non-finite values")
        if values.size < 2 or np.ptp(values) == 0:
            raise ConstantOutcome("outcome has zero variance")
        if self.centered:
            tol = 1e-9 * values.size * np.max(np.abs(values))
            if abs(values.sum()) > tol:
                raise ValueError("outcome flagged centered but its mean is not zero")
        if self.encoding not in ("raw", "two-group"):
            raise ValueError(f"unknown outcome encoding {self.encoding!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_values(cls, values, center: bool = True) -> "Outcome":
        v = np.asarray(values, dtype=float).ravel()
        if center:
            return cls(v - v.mean(), centered=True)
        return cls(v, centered=False)

    @property
    def n(self) -> int:
        return self.values.size

    def centered_values(self) -> np.ndarray:
        if self.centered:
            return self.values
        return self.values - self.values.mean()

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class CovarianceMatrix:
    values: np.ndarray
    divisor: int


def as_array(X) -> np.ndarray:
    """Return the p x n float array behind ``X``."""
    if isinstance(X, FeatureMatrix):
        return X.values
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    return arr


def outcome_vector(y) -> np.ndarray:
    """Centered float vector for an :class:`Outcome` or array-like."""
    if isinstance(y, Outcome):
        return y.centered_values()
    v = np.asarray(y, dtype=float).ravel()
    return v - v.mean()


def canonical_outcome(y) -> np.ndarray:
    """Affine-free representation of ``y`` used by every p-value routine.

    The outcome is mapped onto [0, 1] by its range, snapped to a 2**-32 grid
    and centered. Any recoding ``a*y + b`` with ``a > 0`` lands on the same
    bits, so p-values do not depend on the units of ``y``.
    """
    v = y.values if isinstance(y, Outcome) else np.asarray(y, dtype=float).ravel()
    lo = v.min()
    span = v.max() - lo
    if not span > 0:
        raise ConstantOutcome("outcome has zero variance")
    scale = float(2**_CANONICAL_BITS)
    u = np.round((v - lo) / span * scale) / scale
    return u - u.mean()


def _rewrap(X, values: np.ndarray):
    if isinstance(X, FeatureMatrix):
        return X.with_values(values)
    return values


def center_rows(X):
    """Subtract each feature's mean over samples."""
    A = as_array(X)
    return _rewrap(X, A - A.mean(axis=1, keepdims=True))


def center_columns(X):
    """Subtract each sample's mean over features (exploratory alternative)."""
    A = as_array(X)
    return _rewrap(X, A - A.mean(axis=0, keepdims=True))


def scale_rows(X):
    """Center rows and scale them to unit sample variance (divisor n - 1)."""
    A = as_array(X)
    centered = A - A.mean(axis=1, keepdims=True)
    sd = centered.std(axis=1, ddof=1)
    bad = np.flatnonzero(~(sd > 0))
    if bad.size:
        raise ZeroVarianceRow(int(bad[0]))
    return _rewrap(X, centered / sd[:, np.newaxis])


def gram(X) -> np.ndarray:
    """Sample inner products: entry (k, l) is sum_i x_ik x_il."""
    A = as_array(X)
    G = A.T @ A
    return (G + G.T) / 2


def elementwise_power(M, k: int) -> np.ndarray:
    if k < 1:
        raise ValueError("power must be >= 1")
    return np.asarray(M, dtype=float) ** k


def xi(M) -> float:
    """Sum of all entries."""
    return float(np.sum(M))


def sample_covariance(X, subset=None) -> CovarianceMatrix:
    """X_w X_w^T / n_w over the columns in ``subset`` (all columns if None).

    Rows are assumed already centered; no mean is subtracted here and the
    divisor is the subset size, not n_w - 1.
    """
    A = as_array(X)
    if subset is not None:
        idx = np.asarray(subset)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        A = A[:, idx]
    m = A.shape[1]
    if m < 2:
        raise SubsetTooSmall(f"covariance needs at least 2 samples, got {m}")
    S = A @ A.T / m
    return CovarianceMatrix((S + S.T) / 2, m)


def _design(covariates, n: int) -> np.ndarray:
    if covariates is None:
        C = np.empty((n, 0))
    else:
        C = np.asarray(covariates, dtype=float)
        if C.ndim == 1:
            C = C[:, np.newaxis]
        if C.shape[0] != n:
            raise RankDeficientDesign(f"design has {C.shape[0]} rows for {n} samples")
    D = np.column_stack([np.ones(n), C])
    if D.shape[1] >= n:
        raise RankDeficientDesign("need more samples than design columns")
    if np.linalg.matrix_rank(D) < D.shape[1]:
        raise RankDeficientDesign("design (with intercept) is not of full column rank")
    return D


def design_basis(covariates, n: int) -> np.ndarray:
    """Orthonormal basis (n x c+1) of [intercept | covariates]."""
    Q, _ = np.linalg.qr(_design(covariates, n))
    return Q


def residualize(X, covariates=None):
    """Replace each row by its least-squares residual on [intercept | covariates]."""
    A = as_array(X)
    Q = design_basis(covariates, A.shape[1])
    return _rewrap(X, A - (A @ Q) @ Q.T)


# --------------------------------------------------------------------------
# TSV input/output
# --------------------------------------------------------------------------


def _parse_float(token: str, where: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise MalformedMatrix(f"{where}: cannot parse {token!r} as a number") from None
    if not math.isfinite(value):
        raise MalformedMatrix(f"{where}: missing or non-finite value {token!r}")
    return value


def read_matrix(path) -> FeatureMatrix:
    """Read a features x samples TSV (header = sample ids, first column = feature ids)."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter="\t") if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise MalformedMatrix(f"{path}: need a header line and at least one feature row")
    header = rows[0]
    sample_ids = [s.strip() for s in header[1:]]
    n = len(sample_ids)
    if n == 0:
        raise MalformedMatrix(f"{path}: header has no sample ids")
    feature_ids, body = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != n + 1:
            raise MalformedMatrix(f"{path}:{lineno}: expected {n + 1} fields, found {len(row)}")
        feature_ids.append(row[0].strip())
        body.append([_parse_float(tok, f"{path}:{lineno}") for tok in row[1:]])
    return FeatureMatrix(np.array(body), tuple(feature_ids), tuple(sample_ids))


def write_matrix(X, path, *, corner: str = "feature") -> None:
    """Write ``X`` in the same TSV layout :func:`read_matrix` accepts."""
    A = as_array(X)
    p, n = A.shape
    fids = getattr(X, "feature_ids", None) or tuple(f"f{i + 1}" for i in range(p))
    sids = getattr(X, "sample_ids", None) or tuple(f"s{k + 1}" for k in range(n))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow([corner, *sids])
        for fid, row in zip(fids, A):
            w.writerow([fid, *(repr(float(v)) for v in row)])


def write_square(M, path, labels: Sequence[str] | None = None) -> None:
    """Write a square matrix (slopes, covariance differences) as a labelled TSV."""
    M = np.asarray(M, dtype=float)
    labels = list(labels) if labels is not None else [f"f{i + 1}" for i in range(M.shape[0])]
    write_matrix(FeatureMatrix(M, tuple(labels), tuple(labels)), path)


def read_table(path) -> tuple[list[str], list[str], np.ndarray]:
    """Read a samples x columns TSV with a header line.

    Returns (row ids, column names, values). Used for covariate files.
    """
    X = read_matrix(path)
    return list(X.feature_ids), list(X.sample_ids), X.values


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = os.fspath(path)
    tmp = f"{path}.tmp-{os.getpid()}"
    try:
        with open(tmp, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
