"""The four covariance-association statistics and their per-sample risk scores.

Every statistic is a function of the p x n matrix ``X`` (rows already
centered by the caller) and an outcome ``y`` (centered here if it is not):

* ``S = y^T w`` with ``w_k = (sum_i x_ik)^2``, a directional sum of slopes;
* ``Q = y^T A y`` with ``A = (X^T X)^{o2}``, the sum of squared slopes;
* ``C = y^T b`` with ``b_k = sum_l a_kl``, a connectivity contrast;
* ``M = max_{i<=j} (n - 1) r_ij^2``, with ``r_ij`` the Pearson correlation
  between the product vector ``z_ij = x_i. * x_j.`` and ``y``.

The constant ``1 / (n s_y^2)`` of the least-squares slope is dropped from all
of them; it only rescales and cancels in every p-value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import AllPairsDegenerate, ConstantOutcome, EmptyGroup
from .matrix import Outcome, as_array, gram, outcome_vector

STATISTICS = ("S", "Q", "C", "M")

# Pairs are scanned in blocks so p = 700 (245k pairs) stays in memory.
PAIR_BLOCK = 4096


@dataclass(frozen=True)
class RiskScores:
    kind: str  # "w", "b" or "z-pair"
    values: np.ndarray


@dataclass(frozen=True)
class SlopeMatrix:
    """Unscaled slopes sum_k x_ik x_jk y_k; multiply by ``scale`` for the LS slope."""

    values: np.ndarray
    scale: float

    @property
    def slopes(self) -> np.ndarray:
        return self.values * self.scale


@dataclass(frozen=True)
class MaxStatResult:
    value: float
    pair: tuple[int, int]
    risk_scores: RiskScores
    pair_stats: np.ndarray | None = None
    n_pairs: int = 0


def risk_scores_w(X) -> RiskScores:
    """Squared column sums ``w_k = (sum_i x_ik)^2``."""
    A = as_array(X)
    return RiskScores("w", A.sum(axis=0) ** 2)


def stat_S(X, y) -> float:
    return float(risk_scores_w(X).values @ outcome_vector(y))


def connectivity_matrix_A(X) -> np.ndarray:
    """Hadamard square of the sample Gram matrix."""
    return gram(X) ** 2


def stat_Q(X, y) -> float:
    v = outcome_vector(y)
    return float(v @ connectivity_matrix_A(X) @ v)


def risk_scores_b(X, include_diagonal: bool = True) -> RiskScores:
    """Connectivity index ``b_k = sum_l a_kl``.

    The self term ``a_kk = ||x_.k||^4`` is kept by default; pass
    ``include_diagonal=False`` to drop it.
    """
    Amat = connectivity_matrix_A(X)
    b = Amat.sum(axis=1)
    if not include_diagonal:
        b = b - np.diag(Amat)
    return RiskScores("b", b)


def stat_C(X, y, include_diagonal: bool = True) -> float:
    return float(risk_scores_b(X, include_diagonal).values @ outcome_vector(y))


def slope_matrix(X, y) -> SlopeMatrix:
    A = as_array(X)
    v = outcome_vector(y)
    beta = (A * v) @ A.T
    beta = (beta + beta.T) / 2
    # n s_y^2 with the divisor-n variance, i.e. the LS slope denominator
    ss = float(v @ v)
    scale = 1.0 / ss if ss > 0 else float("nan")
    return SlopeMatrix(beta, scale)


def encode_two_group(labels, first=None) -> Outcome:
    """Code group membership as ``1/n1`` (first group) and ``-1/n2`` (second).

    ``labels`` must contain exactly two distinct values. The first group is
    ``first`` if given, else label ``1`` when present, else the smallest label.
    """
    labels = np.asarray(labels).ravel()
    levels = list(dict.fromkeys(labels.tolist()))
    if len(levels) != 2:
        raise EmptyGroup(f"two-group coding needs exactly two labels, found {len(levels)}")
    if first is None:
        first = 1 if 1 in levels else sorted(levels)[0]
    if first not in levels:
        raise EmptyGroup(f"label {first!r} does not occur")
    in1 = labels == first
    n1 = int(in1.sum())
    n2 = labels.size - n1
    y = np.where(in1, 1.0 / n1, -1.0 / n2)
    return Outcome(y, centered=True, encoding="two-group")


# --------------------------------------------------------------------------
# Maximum statistic
# --------------------------------------------------------------------------


def pair_index(p: int, diagonal: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Feature pairs (i, j), i <= j (or i < j), in lexicographic order."""
    return np.triu_indices(p, k=0 if diagonal else 1)


def iter_pair_blocks(X, diagonal: bool = True, block: int = PAIR_BLOCK
                     ) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Yield (i, j, Z) blocks of product vectors ``z_ij = x_i. * x_j.``."""
    A = as_array(X)
    I, J = pair_index(A.shape[0], diagonal)
    for start in range(0, I.size, block):
        i, j = I[start:start + block], J[start:start + block]
        yield i, j, A[i] * A[j]


def standardized_products(Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Center and unit-normalize each product vector; drop constant ones.

    Returns (kept row mask, standardized rows).
    """
    keep = np.ptp(Z, axis=1) > 0
    Zc = Z[keep] - Z[keep].mean(axis=1, keepdims=True)
    Zc /= np.sqrt(np.einsum("ij,ij->i", Zc, Zc))[:, np.newaxis]
    return keep, Zc


def standardized_outcome(y) -> np.ndarray:
    v = outcome_vector(y)
    norm = np.sqrt(v @ v)
    if not norm > 0:
        raise ConstantOutcome("outcome has zero variance")
    return v / norm


def stat_M(X, y, diagonal: bool = True, keep_pairs: bool = False) -> MaxStatResult:
    """Largest ``(n - 1) r_ij^2`` over feature pairs.

    Pairs whose product vector is constant are skipped. Ties go to the
    lexicographically smallest pair.
    """
    A = as_array(X)
    n = A.shape[1]
    if n < 3:
        raise ValueError("the maximum statistic needs n >= 3")
    u = standardized_outcome(y)
    best, best_pair, total = -1.0, None, 0
    kept_stats = [] if keep_pairs else None
    for i, j, Z in iter_pair_blocks(A, diagonal):
        keep, Zs = standardized_products(Z)
        r2 = np.minimum((Zs @ u) ** 2, 1.0)
        m = (n - 1) * r2
        total += m.size
        if keep_pairs:
            full = np.full(i.size, np.nan)
            full[keep] = m
            kept_stats.append(full)
        if m.size:
            k = int(np.argmax(m))
            if m[k] > best:
                best = float(m[k])
                best_pair = (int(i[keep][k]), int(j[keep][k]))
    if best_pair is None:
        raise AllPairsDegenerate("every feature pair has a constant product vector")
    a, b = best_pair
    scores = RiskScores("z-pair", A[a] * A[b])
    pair_stats = np.concatenate(kept_stats) if keep_pairs else None
    return MaxStatResult(best, best_pair, scores, pair_stats, total)


def compute(statistic: str, X, y, **options) -> float:
    """Observed value of one statistic by name."""
    if statistic == "S":
        return stat_S(X, y)
    if statistic == "Q":
        return stat_Q(X, y)
    if statistic == "C":
        return stat_C(X, y, options.get("include_diagonal", True))
    if statistic == "M":
        return stat_M(X, y, options.get("diagonal", True)).value
    raise ValueError(f"unknown statistic {statistic!r}")
