"""Analytic p-values.

* :func:`normal_p` -- the large-sample normal limit of ``sqrt(n) * r`` for the
  linear statistics S and C, with ``r`` the Pearson correlation between the
  risk scores and ``y``.
* :func:`mcc_p` -- the same test refined with the exact first four
  permutation moments of ``T = scores^T y`` and a four-parameter beta fit.
* :func:`extreme_value_p` -- the Gumbel-type limit for the maximum statistic.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import stats

from .errors import DegenerateInput, MomentFitWarning
from .matrix import canonical_outcome

TINY = np.finfo(float).tiny
_EV_CONST = 1.0 / math.sqrt(8.0 * math.pi)


@dataclass(frozen=True)
class LinearStatSummary:
    r: float
    z: float
    n: int
    perm_moments: tuple[float, float, float, float]  # mean, var, mu3, mu4

    @property
    def skewness(self) -> float:
        return self.perm_moments[2] / self.perm_moments[1] ** 1.5

    @property
    def excess_kurtosis(self) -> float:
        return self.perm_moments[3] / self.perm_moments[1] ** 2 - 3.0


@dataclass(frozen=True)
class MCCResult:
    p_value: float
    method: str  # "mcc", or "normal" after a failed fit
    summary: LinearStatSummary
    beta_params: tuple[float, float, float, float] | None = None  # a, b, loc, scale


@dataclass(frozen=True)
class ExtremeValueParams:
    p_features: int
    t: float


def _clip_p(p: float) -> float:
    return float(min(1.0, max(p, TINY)))


def _two_sided_normal(z: float) -> float:
    logp = math.log(2.0) + stats.norm.logsf(abs(z))
    return _clip_p(math.exp(min(logp, 0.0)))


def _scores(scores) -> np.ndarray:
    return np.asarray(getattr(scores, "values", scores), dtype=float).ravel()


def pearson_r(a: np.ndarray, b: np.ndarray) -> float:
    ac = a - a.mean()
    bc = b - b.mean()
    den = math.sqrt(float(ac @ ac) * float(bc @ bc))
    if not den > 0:
        raise DegenerateInput("correlation undefined for a constant vector")
    return max(-1.0, min(1.0, float(ac @ bc) / den))


def normal_p(scores, y) -> float:
    """Two-sided ``2 (1 - Phi(|sqrt(n) r|))``."""
    a = _scores(scores)
    if a.size < 3:
        raise DegenerateInput("need n >= 3")
    if np.ptp(a) == 0:
        raise DegenerateInput("risk scores are constant")
    v = canonical_outcome(y)
    if v.size != a.size:
        raise ValueError("scores and outcome differ in length")
    r = pearson_r(a, v)
    return _two_sided_normal(math.sqrt(a.size) * r)


# --------------------------------------------------------------------------
# Exact permutation moments of a bilinear statistic
# --------------------------------------------------------------------------


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[first]] + part
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1:]


def _distinct_sum(powers: list[int], psums: dict[int, float]) -> float:
    """sum over pairwise distinct indices k_1..k_m of prod_j x_{k_j}^{powers[j]}.

    Expressed through power sums by Moebius inversion over set partitions.
    """
    total = 0.0
    for part in _set_partitions(list(range(len(powers)))):
        term = 1.0
        for block in part:
            term *= psums[sum(powers[j] for j in block)]
            term *= (-1) ** (len(block) - 1) * math.factorial(len(block) - 1)
        total += term
    return total


def _falling(n: int, m: int) -> float:
    out = 1.0
    for i in range(m):
        out *= n - i
    return out


def _raw_moment(r: int, pa: dict[int, float], pb: dict[int, float], n: int) -> float:
    """E[(sum_k a_k b_pi(k))^r] for a uniformly random permutation pi."""
    total = 0.0
    for part in _set_partitions(list(range(r))):
        m = len(part)
        if m > n:
            continue
        sizes = [len(block) for block in part]
        total += _distinct_sum(sizes, pa) * _distinct_sum(sizes, pb) / _falling(n, m)
    return total


def perm_moments_linear(a, b) -> tuple[float, float, float, float]:
    """Mean, variance, third and fourth central moments of ``sum_k a_k b_pi(k)``.

    Exact in closed form: both vectors are centered, the statistic's mean is
    ``n * mean(a) * mean(b)`` and the central moments follow from the power
    sums of the centered vectors.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    n = a.size
    if b.size != n:
        raise ValueError("vectors differ in length")
    mean = n * a.mean() * b.mean()
    ac, bc = a - a.mean(), b - b.mean()
    pa = {k: float(np.sum(ac**k)) for k in range(1, 5)}
    pb = {k: float(np.sum(bc**k)) for k in range(1, 5)}
    pa[1] = pb[1] = 0.0
    var = _raw_moment(2, pa, pb, n)
    mu3 = _raw_moment(3, pa, pb, n)
    mu4 = _raw_moment(4, pa, pb, n)
    return float(mean), var, mu3, mu4


# --------------------------------------------------------------------------
# Four-parameter beta fit
# --------------------------------------------------------------------------


def fit_beta_moments(mean: float, var: float, skew: float, exkurt: float):
    """Pearson type I (four-parameter beta) matching four moments.

    Returns (a, b, loc, scale) or None when the moments fall outside the
    beta region (``exkurt >= 1.5 skew^2``) or the fit degenerates.
    """
    s2 = skew * skew
    denom = 1.5 * s2 - exkurt
    if not var > 0 or denom <= 0:
        return None
    nu = 3.0 * (exkurt - s2 + 2.0) / denom
    if not (nu > 0 and math.isfinite(nu)):
        return None
    if s2 == 0:
        a = b = nu / 2.0
    else:
        root = 1.0 / math.sqrt(1.0 + 16.0 * (nu + 1.0) / ((nu + 2.0) ** 2 * s2))
        small, large = nu / 2.0 * (1.0 - root), nu / 2.0 * (1.0 + root)
        a, b = (small, large) if skew > 0 else (large, small)
    if not (a > 0 and b > 0):
        return None
    width = math.sqrt(var) / 2.0 * math.sqrt((2.0 + nu) ** 2 * s2 + 16.0 * (1.0 + nu))
    loc = mean - a / nu * width
    return a, b, loc, width


def beta_two_sided(t: float, params) -> float:
    """Equal-tail two-sided p-value of ``t`` under the fitted beta."""
    a, b, loc, scale = params
    x = (t - loc) / scale
    lower = stats.beta.cdf(x, a, b)
    upper = stats.beta.sf(x, a, b)
    return _clip_p(2.0 * min(lower, upper))


def linear_summary(scores, y) -> tuple[LinearStatSummary, float]:
    """Correlation summary of ``scores`` against canonical ``y`` plus observed T."""
    a = _scores(scores)
    if a.size < 3:
        raise DegenerateInput("need n >= 3")
    if np.ptp(a) == 0:
        raise DegenerateInput("risk scores are constant")
    v = canonical_outcome(y)
    r = pearson_r(a, v)
    t_obs = float(a @ v)
    moments = perm_moments_linear(a, v)
    return LinearStatSummary(r, math.sqrt(a.size) * r, a.size, moments), t_obs


def mcc_fit(scores, y, warn: bool = False) -> MCCResult:
    """Four-moment permutation approximation for ``T = scores^T y``.

    Falls back to :func:`normal_p` (method ``"normal"``) when the exact
    moments leave the beta region.
    """
    summary, t_obs = linear_summary(scores, y)
    mean, var, mu3, mu4 = summary.perm_moments
    if not var > 0:
        raise DegenerateInput("permutation variance is zero")
    params = fit_beta_moments(mean, var, summary.skewness, summary.excess_kurtosis)
    if params is None:
        if warn:
            warnings.warn("moments outside the beta region; using the normal limit",
                          MomentFitWarning, stacklevel=2)
        return MCCResult(_two_sided_normal(summary.z), "normal", summary)
    return MCCResult(beta_two_sided(t_obs, params), "mcc", summary, params)


def mcc_p(scores, y) -> float:
    return mcc_fit(scores, y).p_value


# --------------------------------------------------------------------------
# Extreme-value approximation for M
# --------------------------------------------------------------------------


def extreme_value_params(M: float, p_features: int) -> ExtremeValueParams:
    if p_features < 2:
        raise ValueError("extreme-value p-values need at least 2 features")
    lp = math.log(p_features)
    return ExtremeValueParams(p_features, M - 4.0 * lp + math.log(lp))


def extreme_value_p(M: float, p_features: int) -> float:
    """``1 - exp(-exp(-t/2) / sqrt(8 pi))`` with ``t = M - 4 log p + log log p``."""
    if M < 0:
        raise ValueError("M must be non-negative")
    t = extreme_value_params(M, p_features).t
    rate = _EV_CONST * math.exp(-t / 2.0)
    return _clip_p(-math.expm1(-rate))


def exact_linear_p(scores, y) -> float:
    """Exact two-sided permutation p of ``scores^T y`` for a two-valued ``y``.

    Enumerates group relabelings; intended for small n in checks and demos.
    """
    a = _scores(scores)
    v = canonical_outcome(y)
    levels = np.unique(v)
    if levels.size != 2:
        raise ValueError("exact enumeration here needs a two-valued outcome")
    hi = v == levels[1]
    n1 = int(hi.sum())
    centered = a - a.mean()
    obs = float(centered[hi].sum())
    vals = np.array([centered[list(c)].sum() for c in combinations(range(a.size), n1)])
    tol = 1e-9 * max(1.0, np.abs(vals).max())
    return float(np.mean(np.abs(vals) >= abs(obs) - tol))
