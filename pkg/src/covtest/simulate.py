"""Data generators for the five simulation models and a Monte Carlo harness.

Models 1-3 compare two groups whose features follow moving-average
processes: group 1 is MA(1) with coefficient ``theta1``, group 2 is MA(2)
with coefficients ``theta1, theta2``. ``theta2 = 0`` gives the null (Models 1
and 2), ``theta1 = 2, theta2 = 1`` the power setting (Model 3). Model 2 swaps
the normal innovations for centered gamma(4, 0.5) draws.

Models 4-5 use a continuous outcome ``y*`` (standard normals rescaled to
[0, 1]); sample ``k`` is multivariate normal with a covariance interpolated
between two endpoint matrices at ``y*_k``.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import statistics as st
from .analysis import covariance_test
from .errors import InvalidParams
from .matrix import FeatureMatrix, Outcome, center_rows
from .permutation import PermutationPlan
from .statistics import encode_two_group

TWO_GROUP_MODELS = (1, 2, 3)
CONTINUOUS_MODELS = (4, 5)
DEFAULT_METHODS = {"S": "mcc", "C": "mcc", "Q": "permutation", "M": "permutation"}
GAMMA_SHAPE, GAMMA_SCALE = 4.0, 0.5


@dataclass(frozen=True)
class SimulationSpec:
    """One simulation setting.

    ``model4_variant`` chooses how Model 4 moves between its endpoints:
    ``"convex"`` uses ``(1 - y*) I + y* gamma2`` (identity at rho = 0),
    ``"printed"`` uses ``(1 - y*) I + gamma2``. ``model4_gamma2`` is
    ``"compound"`` (all off-diagonals rho) or ``"tridiagonal"`` (rho <= 0.45).
    """

    model: int
    p: int
    n1: int | None = None
    n2: int | None = None
    n: int | None = None
    theta1: float = 2.0
    theta2: float | None = None
    rho: float = 0.0
    replicates: int = 1000
    alpha: float = 0.05
    plan: PermutationPlan = field(default_factory=lambda: PermutationPlan(H=1000))
    seed: int = 0
    methods: dict = field(default_factory=lambda: dict(DEFAULT_METHODS))
    statistics: tuple[str, ...] = st.STATISTICS
    model4_variant: str = "convex"
    model4_gamma2: str = "compound"
    threads: int = 1

    def __post_init__(self):
        if self.model not in TWO_GROUP_MODELS + CONTINUOUS_MODELS:
            raise InvalidParams(f"model must be 1..5, got {self.model}")
        if self.replicates < 1:
            raise InvalidParams("replicates must be >= 1")
        if not 0 < self.alpha < 1:
            raise InvalidParams("alpha must lie in (0, 1)")
        if self.p < 2:
            raise InvalidParams("p must be >= 2")
        if self.seed < 0:
            raise InvalidParams("seed must be non-negative")
        if self.model in TWO_GROUP_MODELS:
            if not (self.n1 and self.n2) or self.n1 < 2 or self.n2 < 2:
                raise InvalidParams("two-group models need n1, n2 >= 2")
        else:
            if not self.n or self.n < 4:
                raise InvalidParams("continuous models need n >= 4")
            if not 0 <= self.rho < 1:
                raise InvalidParams("rho must lie in [0, 1)")
        if self.model == 5 and (self.p < 4 or self.p % 2):
            raise InvalidParams("model 5 needs an even p >= 4")
        if self.model == 4 and self.model4_gamma2 == "tridiagonal" and self.rho > 0.45:
            raise InvalidParams("tridiagonal gamma2 is indefinite for rho > 0.45")

    @property
    def effective_theta2(self) -> float:
        if self.theta2 is not None:
            return self.theta2
        return 1.0 if self.model == 3 else 0.0


@dataclass
class PowerReport:
    spec: SimulationSpec
    rates: dict[str, float]
    se: dict[str, float]
    replicates: int
    runtime: float
    p_values: dict[str, np.ndarray]
    methods_used: dict[str, dict[str, int]]


# --------------------------------------------------------------------------
# Generators
# --------------------------------------------------------------------------


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def centered_gamma(size, rng) -> np.ndarray:
    """Gamma(shape 4, scale 0.5) minus its mean 2: mean 0, variance 1, skewness 1."""
    return _rng(rng).gamma(GAMMA_SHAPE, GAMMA_SCALE, size=size) - GAMMA_SHAPE * GAMMA_SCALE


def gen_model12(group: int, n: int, p: int, theta1: float, theta2: float = 0.0,
                innovations: str = "normal", seed=None) -> FeatureMatrix:
    """``n`` samples of ``p`` moving-average features.

    Group 1: ``x_i = z_i + theta1 z_{i+1}``; group 2 adds ``theta2 z_{i+2}``.
    """
    if group not in (1, 2):
        raise InvalidParams("group must be 1 or 2")
    if n < 1 or p < 1:
        raise InvalidParams("n and p must be positive")
    rng = _rng(seed)
    lags = 1 if group == 1 else 2
    shape = (p + lags, n)
    if innovations == "normal":
        z = rng.standard_normal(shape)
    elif innovations == "centered-gamma":
        z = centered_gamma(shape, rng)
    else:
        raise InvalidParams(f"unknown innovations {innovations!r}")
    x = z[:p] + theta1 * z[1:p + 1]
    if group == 2:
        x = x + theta2 * z[2:p + 2]
    return FeatureMatrix(x)


def ma_covariance(p: int, theta1: float, theta2: float = 0.0) -> np.ndarray:
    """Population covariance of the MA construction used by :func:`gen_model12`."""
    acv = [1 + theta1**2 + theta2**2, theta1 * (1 + theta2), theta2]
    S = np.zeros((p, p))
    for lag, value in enumerate(acv):
        if lag < p:
            S += value * (np.eye(p, k=lag) + (np.eye(p, k=-lag) if lag else 0))
    return S


def gen_two_group(model: int, n1: int, n2: int, p: int, theta1: float = 2.0,
                  theta2: float | None = None, seed=None) -> tuple[FeatureMatrix, np.ndarray]:
    """Pooled matrix (group 1 columns first) and the 1/2 label vector."""
    if model not in TWO_GROUP_MODELS:
        raise InvalidParams("two-group data come from models 1-3")
    if theta2 is None:
        theta2 = 1.0 if model == 3 else 0.0
    innovations = "centered-gamma" if model == 2 else "normal"
    rng = _rng(seed)
    x1 = gen_model12(1, n1, p, theta1, 0.0, innovations, rng).values
    x2 = gen_model12(2, n2, p, theta1, theta2, innovations, rng).values
    labels = np.repeat([1, 2], [n1, n2])
    return FeatureMatrix(np.hstack([x1, x2])), labels


def rescaled_outcome(n: int, rng) -> np.ndarray:
    """Standard normal draws mapped linearly onto [0, 1]."""
    y = _rng(rng).standard_normal(n)
    return (y - y.min()) / (y.max() - y.min())


def _mvn_columns(covs: np.ndarray, rng) -> np.ndarray:
    """One N(0, covs[k]) draw per sample via symmetric square roots (p x n)."""
    evals, evecs = np.linalg.eigh(covs)
    roots = (evecs * np.sqrt(np.clip(evals, 0.0, None))[:, None, :]) @ evecs.transpose(0, 2, 1)
    z = rng.standard_normal((covs.shape[0], covs.shape[1]))
    return np.einsum("kij,kj->ik", roots, z)


def model4_gamma2(p: int, rho: float, kind: str = "compound") -> np.ndarray:
    if kind == "compound":
        return (1 - rho) * np.eye(p) + rho * np.ones((p, p))
    if kind == "tridiagonal":
        return np.eye(p) + rho * (np.eye(p, k=1) + np.eye(p, k=-1))
    raise InvalidParams(f"unknown gamma2 form {kind!r}")


def model4_covariance(ystar: float, p: int, rho: float, variant: str = "convex",
                      gamma2: str = "compound") -> np.ndarray:
    g2 = model4_gamma2(p, rho, gamma2)
    if variant == "convex":
        return (1 - ystar) * np.eye(p) + ystar * g2
    if variant == "printed":
        return (1 - ystar) * np.eye(p) + g2
    raise InvalidParams(f"unknown model 4 variant {variant!r}")


def gen_model4(n: int, p: int, rho: float, seed=None, variant: str = "convex",
               gamma2: str = "compound") -> tuple[FeatureMatrix, Outcome]:
    if not 0 <= rho < 1:
        raise InvalidParams("rho must lie in [0, 1)")
    rng = _rng(seed)
    ystar = rescaled_outcome(n, rng)
    covs = np.stack([model4_covariance(t, p, rho, variant, gamma2) for t in ystar])
    return FeatureMatrix(_mvn_columns(covs, rng)), Outcome(ystar)


def model5_endpoints(p: int, rho: float, seed=None) -> tuple[np.ndarray, np.ndarray]:
    """(Sigma_1, Sigma_2): block-correlated matrix and its row/column reversal."""
    if p < 4 or p % 2:
        raise InvalidParams("model 5 needs an even p >= 4")
    if not 0 <= rho < 1:
        raise InvalidParams("rho must lie in [0, 1)")
    rng = _rng(seed)
    half = p // 2
    base = np.eye(p)
    iu = np.triu_indices(half, k=1)
    base[iu] = rng.uniform(-rho, rho, size=iu[0].size)
    sym = base + base.T
    shift = abs(np.linalg.eigvalsh(sym)[0]) + 0.05
    sigma1 = sym + shift * np.eye(p)
    return sigma1, sigma1[::-1, ::-1].copy()


def gen_model5(n: int, p: int, rho: float, seed=None) -> tuple[FeatureMatrix, Outcome]:
    rng = _rng(seed)
    sigma1, sigma2 = model5_endpoints(p, rho, rng)
    ystar = rescaled_outcome(n, rng)
    covs = (1 - ystar)[:, None, None] * sigma1 + ystar[:, None, None] * sigma2
    return FeatureMatrix(_mvn_columns(covs, rng)), Outcome(ystar)


def generate(spec: SimulationSpec, rng) -> tuple[FeatureMatrix, Outcome]:
    """One replicate dataset for ``spec``."""
    if spec.model in TWO_GROUP_MODELS:
        X, labels = gen_two_group(spec.model, spec.n1, spec.n2, spec.p, spec.theta1,
                                  spec.effective_theta2, rng)
        return X, encode_two_group(labels)
    if spec.model == 4:
        return gen_model4(spec.n, spec.p, spec.rho, rng, spec.model4_variant,
                          spec.model4_gamma2)
    return gen_model5(spec.n, spec.p, spec.rho, rng)


# --------------------------------------------------------------------------
# Monte Carlo harness
# --------------------------------------------------------------------------


def replicate_seed(seed: int, replicate: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, replicate, stream]).generate_state(1, np.uint64)[0])


def run_replicate(spec: SimulationSpec, replicate: int) -> dict[str, tuple[float, str]]:
    """p-value and method per statistic for one replicate."""
    rng = np.random.default_rng(replicate_seed(spec.seed, replicate, 0))
    X, y = generate(spec, rng)
    X = center_rows(X)
    plan = PermutationPlan(**{**spec.plan.__dict__,
                              "seed": replicate_seed(spec.seed, replicate, 1),
                              "threads": 1, "keep_null": False})
    results = covariance_test(X, y, spec.statistics, spec.methods, plan)
    return {r.statistic: (r.p_value, r.method) for r in results}


def run_trials(spec: SimulationSpec) -> PowerReport:
    """Rejection rate at ``spec.alpha`` for each statistic over all replicates."""
    start = time.perf_counter()
    reps = range(spec.replicates)
    if spec.threads > 1:
        with ThreadPoolExecutor(max_workers=spec.threads) as pool:
            outcomes = list(pool.map(lambda r: run_replicate(spec, r), reps))
    else:
        outcomes = [run_replicate(spec, r) for r in reps]
    pvals, rates, se, used = {}, {}, {}, {}
    for stat in spec.statistics:
        pv = np.array([o[stat][0] for o in outcomes])
        pvals[stat] = pv
        rate = float(np.mean(pv <= spec.alpha))
        rates[stat] = rate
        se[stat] = float(np.sqrt(rate * (1 - rate) / spec.replicates))
        counts: dict[str, int] = {}
        for o in outcomes:
            counts[o[stat][1]] = counts.get(o[stat][1], 0) + 1
        used[stat] = counts
    return PowerReport(spec, rates, se, spec.replicates, time.perf_counter() - start,
                       pvals, used)


REPORT_COLUMNS = ("model", "n1", "n2", "p", "statistic", "rate", "se", "replicates", "seed")


def report_rows(report: PowerReport) -> list[list[str]]:
    """Table rows: for models 4-5 ``n1`` is NA and ``n2`` holds n."""
    spec = report.spec
    if spec.model in TWO_GROUP_MODELS:
        n1, n2 = str(spec.n1), str(spec.n2)
    else:
        n1, n2 = "NA", str(spec.n)
    return [[str(spec.model), n1, n2, str(spec.p), stat, f"{report.rates[stat]:.6g}",
             f"{report.se[stat]:.6g}", str(report.replicates), str(spec.seed)]
            for stat in spec.statistics]
