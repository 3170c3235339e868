"""Run the selected statistics on one feature set and attach p-values."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import pvalues
from . import statistics as st
from .errors import InvalidParams
from .matrix import as_array, canonical_outcome, outcome_vector
from .permutation import PermutationPlan, permute_p, residualized_q_p

METHODS = ("auto", "mcc", "normal", "permutation", "exact", "extreme-value")
_ALLOWED = {
    "S": {"mcc", "normal", "permutation", "exact"},
    "C": {"mcc", "normal", "permutation", "exact"},
    "Q": {"permutation", "exact"},
    "M": {"permutation", "exact", "extreme-value"},
}


@dataclass
class CovTestResult:
    statistic: str
    value: float
    p_value: float
    method: str
    risk_scores: st.RiskScores | None = None
    pair: tuple[int, int] | None = None
    exceed_count: int | None = None
    H_used: int | None = None
    null_sample: np.ndarray | None = None


def resolve_method(statistic: str, method: str, n: int, p: int) -> str:
    """Concrete p-value method for ``statistic``.

    ``auto`` picks MCC for S and C, permutation for Q, and for M the
    extreme-value limit when n >= 50 and p >= 32, permutation otherwise.
    """
    if method == "auto":
        if statistic in ("S", "C"):
            return "mcc"
        if statistic == "Q":
            return "permutation"
        return "extreme-value" if (n >= 50 and p >= 32) else "permutation"
    if method not in _ALLOWED[statistic]:
        raise InvalidParams(f"method {method!r} is not available for statistic {statistic}")
    return method


def covariance_test(X, y, statistics=st.STATISTICS, methods=None,
                    plan: PermutationPlan | None = None, *, covariates=None,
                    residualize_in_loop: bool = False, include_diagonal: bool = True,
                    diagonal: bool = True) -> list[CovTestResult]:
    """Observed statistics and p-values for one feature set.

    ``methods`` maps statistic name to a method from :data:`METHODS`
    (a single string applies to all). ``X`` is used as given: centering,
    scaling and residualization are the caller's choice.
    """
    A = as_array(X)
    p, n = A.shape
    plan = plan or PermutationPlan()
    if methods is None or isinstance(methods, str):
        methods = {s: methods or "auto" for s in statistics}
    results = []
    for stat in statistics:
        if stat not in st.STATISTICS:
            raise InvalidParams(f"unknown statistic {stat!r}")
        method = resolve_method(stat, methods.get(stat, "auto"), n, p)
        results.append(_one(stat, method, A, y, plan, covariates, residualize_in_loop,
                            include_diagonal, diagonal))
    return results


def _one(stat, method, A, y, plan, covariates, residualize_in_loop, include_diagonal,
         diagonal) -> CovTestResult:
    scores, pair = None, None
    if stat == "S":
        scores = st.risk_scores_w(A)
    elif stat == "C":
        scores = st.risk_scores_b(A, include_diagonal)

    if method in ("permutation", "exact"):
        run_plan = plan if method == "permutation" else PermutationPlan(exhaustive=True)
        if stat == "Q" and residualize_in_loop:
            res = residualized_q_p(A, y, covariates, run_plan)
        else:
            res = permute_p(stat, A, y, run_plan, include_diagonal=include_diagonal,
                            diagonal=diagonal)
        if stat == "M":
            mres = st.stat_M(A, y, diagonal)
            scores, pair = mres.risk_scores, mres.pair
        return CovTestResult(stat, res.observed, res.p_value, method, scores, pair,
                             res.exceed_count, res.H_used, res.null_sample)

    if stat == "M":
        mres = st.stat_M(A, y, diagonal)
        # M is affine invariant; evaluating it on the canonical outcome for the
        # p-value keeps that invariance exact in floating point as well
        m_canon = st.stat_M(A, canonical_outcome(y), diagonal).value
        p_value = pvalues.extreme_value_p(m_canon, A.shape[0])
        return CovTestResult(stat, mres.value, p_value, method, mres.risk_scores, mres.pair)

    value = float(scores.values @ outcome_vector(y))
    if method == "normal":
        return CovTestResult(stat, value, pvalues.normal_p(scores, y), "normal", scores)
    fit = pvalues.mcc_fit(scores, y)
    return CovTestResult(stat, value, fit.p_value, fit.method, scores)
