"""Seeded permutation engine for S, Q, C and M.

The quantities that do not depend on ``y`` (``w``, ``A``, ``b`` and the
standardized pair products for ``M``) are computed once; each permutation
then only costs a product with the permuted outcome.

Permutations are drawn in fixed-size blocks, block ``b`` coming from the
stream ``SeedSequence([seed, b])``. The permutation with index ``h`` is the
same whatever the number of worker threads, so results are reproducible
across 1, 2 or k workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations, permutations

import numpy as np

from . import statistics as st
from .errors import AllPairsDegenerate, ConstantOutcome, InvalidPlan, TooLarge
from .matrix import (
    as_array,
    canonical_outcome,
    design_basis,
    gram,
    outcome_vector,
    residualize,
)

SIDEDNESS = {"S": "two-sided", "C": "two-sided", "Q": "right", "M": "right"}
# Scale exponent of each statistic in y, used to report null samples on the
# outcome's own scale.
_DEGREE = {"S": 1, "C": 1, "Q": 2, "M": 0}
# Slack so that mathematically tied values (identity permutation, relabelings
# within a group) always count as exceedances: relative to the observed value,
# with a floor relative to the statistic's attainable magnitude so that values
# that are zero up to rounding tie as well.
TIE_RTOL = 1e-9
TIE_ATOL = 1e-12
MAX_ENUMERATION_N = 9


@dataclass(frozen=True)
class PermutationPlan:
    """How to run a permutation test.

    ``add_one`` reports ``(1 + count) / (1 + H)``; without it the raw
    ``count / H`` is used. ``exhaustive`` replaces random draws by every
    permutation (every distinct relabeling for a two-valued outcome).
    """

    H: int = 10_000
    seed: int = 0
    add_one: bool = True
    residualize_in_loop: bool = False
    exhaustive: bool = False
    keep_null: bool = False
    threads: int = 1
    block: int = 256

    def __post_init__(self):
        if not self.exhaustive and self.H < 1:
            raise InvalidPlan(f"permutation count must be >= 1, got {self.H}")
        if self.seed < 0:
            raise InvalidPlan("seed must be a non-negative integer")
        if self.block < 1 or self.threads < 1:
            raise InvalidPlan("block size and thread count must be positive")


@dataclass(frozen=True)
class PermutationResult:
    statistic: str
    observed: float
    p_value: float
    exceed_count: int
    H_used: int
    null_sample: np.ndarray | None = None


def permutation_block(seed: int, block_index: int, size: int, n: int) -> np.ndarray:
    """Index permutations ``size x n`` for one block of the stream."""
    rng = np.random.default_rng([seed, block_index])
    return rng.permuted(np.tile(np.arange(n), (size, 1)), axis=1)


def random_permutations(seed: int, H: int, n: int, block: int = 256) -> np.ndarray:
    """The first ``H`` permutations of the stream, stacked (H x n)."""
    nblocks = -(-H // block)
    perms = np.vstack([permutation_block(seed, b, block, n) for b in range(nblocks)])
    return perms[:H]


# --------------------------------------------------------------------------
# Null kernels: map a batch of permuted outcomes (B x n) to statistic values
# --------------------------------------------------------------------------


class _LinearKernel:
    def __init__(self, scores: np.ndarray):
        self.scores = scores

    def __call__(self, Y: np.ndarray) -> np.ndarray:
        return Y @ self.scores

    def magnitude(self, v: np.ndarray) -> float:
        return float(np.linalg.norm(self.scores) * np.linalg.norm(v))


class _QuadraticKernel:
    def __init__(self, Amat: np.ndarray):
        self.A = Amat

    def __call__(self, Y: np.ndarray) -> np.ndarray:
        return np.einsum("hk,hk->h", Y @ self.A, Y)

    def magnitude(self, v: np.ndarray) -> float:
        return float(np.linalg.norm(self.A) * (v @ v))


class _MaxKernel:
    """Permuted M: the pair products are standardized once, y's norm is fixed."""

    _CACHE_LIMIT = 20_000_000  # doubles kept across permutations

    def __init__(self, X: np.ndarray, diagonal: bool):
        self.X = X
        self.diagonal = diagonal
        self.n = X.shape[1]
        p = X.shape[0]
        npairs = p * (p + 1) // 2 if diagonal else p * (p - 1) // 2
        self._blocks = None
        if npairs * self.n <= self._CACHE_LIMIT:
            self._blocks = list(self._generate())
            if not any(b.shape[0] for b in self._blocks):
                raise AllPairsDegenerate("every feature pair has a constant product vector")

    def _generate(self):
        for _, _, Z in st.iter_pair_blocks(self.X, self.diagonal):
            yield st.standardized_products(Z)[1]

    def __call__(self, Y: np.ndarray) -> np.ndarray:
        U = Y / np.sqrt(np.einsum("hk,hk->h", Y, Y))[:, np.newaxis]
        best = np.zeros(Y.shape[0])
        for Zs in (self._blocks if self._blocks is not None else self._generate()):
            if Zs.shape[0]:
                np.maximum(best, np.max((Zs @ U.T) ** 2, axis=0), out=best)
        return (self.n - 1) * np.minimum(best, 1.0)

    def magnitude(self, v: np.ndarray) -> float:
        return float(self.n - 1)


class _ResidualizedQKernel:
    """Q after residualizing every row on [1 | covariates | permuted y].

    With ``X0`` the residual on [1 | covariates], ``u`` the matching residual
    of the permuted outcome and ``h = G0 u``, the Gram matrix of the fully
    residualized rows is a rank-two update of ``G0 = X0^T X0``.
    """

    def __init__(self, X: np.ndarray, covariates=None, sub_block: int = 32):
        self.basis = design_basis(covariates, X.shape[1])
        X0 = X - (X @ self.basis) @ self.basis.T
        self.G0 = gram(X0)
        self.sub_block = sub_block

    def __call__(self, Y: np.ndarray) -> np.ndarray:
        out = np.empty(Y.shape[0])
        for start in range(0, Y.shape[0], self.sub_block):
            Yb = Y[start:start + self.sub_block]
            U = Yb - (Yb @ self.basis) @ self.basis.T
            c = np.einsum("hk,hk->h", U, U)
            if np.any(c <= 1e-12 * np.einsum("hk,hk->h", Yb, Yb)):
                raise ConstantOutcome("outcome lies in the covariate span")
            Hm = U @ self.G0
            s = np.einsum("hk,hk->h", U, Hm)
            outer = Hm[:, :, None] * U[:, None, :]
            G = (self.G0[None]
                 - (outer + outer.transpose(0, 2, 1)) / c[:, None, None]
                 + (s / c**2)[:, None, None] * (U[:, :, None] * U[:, None, :]))
            out[start:start + Yb.shape[0]] = np.einsum("hk,hkl,hl->h", Yb, G * G, Yb)
        return out

    def magnitude(self, v: np.ndarray) -> float:
        return float(np.linalg.norm(self.G0) ** 2 * (v @ v))


def _kernel(statistic: str, X: np.ndarray, *, covariates=None, residualize_in_loop=False,
            include_diagonal=True, diagonal=True):
    if residualize_in_loop:
        if statistic != "Q":
            raise InvalidPlan("in-loop residualization is defined for Q only")
        return _ResidualizedQKernel(X, covariates)
    if statistic == "S":
        return _LinearKernel(st.risk_scores_w(X).values)
    if statistic == "C":
        return _LinearKernel(st.risk_scores_b(X, include_diagonal).values)
    if statistic == "Q":
        return _QuadraticKernel(st.connectivity_matrix_A(X))
    if statistic == "M":
        return _MaxKernel(X, diagonal)
    raise ValueError(f"unknown statistic {statistic!r}")


def _exceed(null: np.ndarray, observed: float, sidedness: str, magnitude: float = 0.0
            ) -> np.ndarray:
    if sidedness == "two-sided":
        null, observed = np.abs(null), abs(observed)
    return null >= observed - max(TIE_RTOL * abs(observed), TIE_ATOL * magnitude)


def _exhaustive_outcomes(v: np.ndarray) -> np.ndarray:
    n = v.size
    if n > MAX_ENUMERATION_N:
        raise TooLarge(f"exhaustive enumeration limited to n <= {MAX_ENUMERATION_N}, got {n}")
    levels = np.unique(v)
    if levels.size == 2:
        n_hi = int(np.sum(v == levels[1]))
        rows = np.full((math.comb(n, n_hi), n), levels[0])
        for r, idx in enumerate(combinations(range(n), n_hi)):
            rows[r, list(idx)] = levels[1]
        return rows
    return v[np.array(list(permutations(range(n))))]


def _raw_scale(y) -> float:
    v = y.values if hasattr(y, "values") else np.asarray(y, dtype=float).ravel()
    return float(np.max(v) - np.min(v))


def _run(statistic: str, X, y, plan: PermutationPlan, observed_raw: float, **kernel_opts
         ) -> PermutationResult:
    A = as_array(X)
    v = canonical_outcome(y)
    if v.size != A.shape[1]:
        raise ValueError(f"outcome has {v.size} entries for {A.shape[1]} samples")
    kernel = _kernel(statistic, A, residualize_in_loop=plan.residualize_in_loop, **kernel_opts)
    sidedness = SIDEDNESS[statistic]
    observed = float(kernel(v[np.newaxis, :])[0])
    magnitude = kernel.magnitude(v)

    if plan.exhaustive:
        Y = _exhaustive_outcomes(v)
        chunks = [Y[i:i + plan.block] for i in range(0, Y.shape[0], plan.block)]
        null = np.concatenate([kernel(c) for c in chunks])
        total = null.size
        count = int(np.sum(_exceed(null, observed, sidedness, magnitude)))
        p_value = count / total
    else:
        H, n = plan.H, v.size
        nblocks = -(-H // plan.block)

        def run_block(b: int) -> np.ndarray:
            size = min(plan.block, H - b * plan.block)
            idx = permutation_block(plan.seed, b, plan.block, n)[:size]
            return kernel(v[idx])

        if plan.threads > 1 and nblocks > 1:
            with ThreadPoolExecutor(max_workers=plan.threads) as pool:
                parts = list(pool.map(run_block, range(nblocks)))
        else:
            parts = [run_block(b) for b in range(nblocks)]
        null = np.concatenate(parts)
        total = H
        count = int(np.sum(_exceed(null, observed, sidedness, magnitude)))
        p_value = (1 + count) / (1 + H) if plan.add_one else count / H

    null_sample = None
    if plan.keep_null:
        null_sample = null * _raw_scale(y) ** _DEGREE[statistic]
    return PermutationResult(statistic, observed_raw, float(p_value), count, total, null_sample)


def permute_p(statistic: str, X, y, plan: PermutationPlan | None = None, *,
              include_diagonal: bool = True, diagonal: bool = True,
              covariates=None) -> PermutationResult:
    """Permutation p-value for one statistic.

    S and C are tested two-sided on ``|T|``; Q and M reject for large values.
    ``observed`` is reported on the outcome's own scale.
    """
    plan = plan or PermutationPlan()
    if plan.residualize_in_loop:
        return residualized_q_p(X, y, covariates, plan)
    if statistic == "M":
        observed = st.stat_M(X, y, diagonal).value
    else:
        observed = st.compute(statistic, X, y, include_diagonal=include_diagonal)
    return _run(statistic, X, y, plan, observed,
                include_diagonal=include_diagonal, diagonal=diagonal)


def enumerate_p(statistic: str, X, y, **options) -> PermutationResult:
    """Exact permutation p-value over all n! orderings (n <= 9)."""
    n = as_array(X).shape[1]
    if n > MAX_ENUMERATION_N:
        raise TooLarge(f"exhaustive enumeration limited to n <= {MAX_ENUMERATION_N}, got {n}")
    return permute_p(statistic, X, y, PermutationPlan(exhaustive=True), **options)


def residualized_q_p(X, y, covariates=None, plan: PermutationPlan | None = None
                     ) -> PermutationResult:
    """Q with every row residualized on [1 | covariates | y], redone per permutation."""
    plan = plan or PermutationPlan()
    if not plan.residualize_in_loop:
        plan = PermutationPlan(**{**plan.__dict__, "residualize_in_loop": True})
    A = as_array(X)
    v = outcome_vector(y)
    Xr = residualize(A, np.column_stack([_cov_matrix(covariates, A.shape[1]), v]))
    observed = st.stat_Q(Xr, v)
    return _run("Q", A, y, plan, observed, covariates=covariates)


def _cov_matrix(covariates, n: int) -> np.ndarray:
    if covariates is None:
        return np.empty((n, 0))
    C = np.asarray(covariates, dtype=float)
    return C[:, np.newaxis] if C.ndim == 1 else C
