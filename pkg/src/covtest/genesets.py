"""Gene-set (pathway) batch testing with Benjamini-Hochberg q-values."""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import false_discovery_control

from . import statistics as st
from .analysis import covariance_test
from .errors import MalformedLine, OutOfRange, Unsupported
from .matrix import FeatureMatrix, as_array, center_rows, residualize, scale_rows
from .permutation import PermutationPlan

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("set_id", "p_matched", "statistic", "value", "p_value", "method", "q_value")


@dataclass(frozen=True)
class GeneSet:
    set_id: str
    description: str
    members: tuple[str, ...]


@dataclass(frozen=True)
class ResolvedSet:
    gene_set: GeneSet
    rows: tuple[int, ...]
    n_unmatched: int

    @property
    def skipped(self) -> bool:
        return len(self.rows) < 2


@dataclass
class GeneSetCatalog:
    sets: list[GeneSet]
    warnings: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.sets)

    def resolve(self, feature_ids) -> list[ResolvedSet]:
        """Match members to matrix rows by exact, case-sensitive id."""
        index = {}
        for i, fid in enumerate(feature_ids):
            index.setdefault(fid, i)
        out = []
        for gs in self.sets:
            rows = tuple(index[m] for m in gs.members if m in index)
            out.append(ResolvedSet(gs, rows, len(gs.members) - len(rows)))
        return out


@dataclass
class PathwayRow:
    set_id: str
    p_matched: int
    statistic: str
    value: float
    p_value: float
    method: str
    q_value: float = float("nan")


@dataclass
class PathwayResultTable:
    rows: list[PathwayRow]
    skipped: list[tuple[str, str]]

    def sorted(self) -> "PathwayResultTable":
        rows = sorted(self.rows, key=lambda r: (r.q_value, r.p_value))
        return PathwayResultTable(rows, self.skipped)

    def to_tsv(self) -> str:
        lines = ["\t".join(RESULT_COLUMNS)]
        for r in self.rows:
            lines.append("\t".join([r.set_id, str(r.p_matched), r.statistic, f"{r.value:.6g}",
                                    f"{r.p_value:.6e}", r.method, f"{r.q_value:.6e}"]))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({"results": [asdict(r) for r in self.rows],
                           "skipped": [{"set_id": s, "reason": why} for s, why in self.skipped]},
                          indent=2)


def parse_gmt(path) -> GeneSetCatalog:
    """Read a GMT file: ``set_id <TAB> description <TAB> member ...`` per line."""
    sets, warnings = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            members = [m.strip() for m in fields[2:] if m.strip()]
            if len(fields) < 3 or not fields[0].strip() or not members:
                raise MalformedLine(lineno)
            unique = list(dict.fromkeys(members))
            if len(unique) < len(members):
                msg = f"line {lineno} ({fields[0]}): {len(members) - len(unique)} duplicate members dropped"
                warnings.append(msg)
                log.warning(msg)
            sets.append(GeneSet(fields[0].strip(), fields[1], tuple(unique)))
    return GeneSetCatalog(sets, warnings)


def bh_qvalues(p) -> np.ndarray:
    """Benjamini-Hochberg step-up q-values, in input order."""
    p = np.asarray(p, dtype=float).ravel()
    if p.size == 0:
        return p
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise OutOfRange("p-values must lie in [0, 1]")
    return false_discovery_control(p, method="bh")


def set_seed(seed: int, set_id: str) -> int:
    """Per-set permutation seed, stable under adding or removing other sets."""
    digest = hashlib.sha256(f"{seed}:{set_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def preprocess(X, y=None, covariates=None, *, scale: bool = False,
               residualize_on_y: bool = False):
    """Center rows, optionally residualize on [covariates | y], optionally scale."""
    X = center_rows(X)
    if covariates is not None or residualize_on_y:
        n = as_array(X).shape[1]
        cols = [] if covariates is None else [np.asarray(covariates, dtype=float).reshape(n, -1)]
        if residualize_on_y:
            cols.append(np.asarray(getattr(y, "values", y), dtype=float).reshape(n, 1))
        X = residualize(X, np.hstack(cols))
    if scale:
        X = scale_rows(X)
    return X


def run_pathways(X, y, catalog: GeneSetCatalog, statistics=st.STATISTICS,
                 plan: PermutationPlan | None = None, covariates=None, *, methods=None,
                 residualize_in_loop: bool = False, threads: int = 1) -> PathwayResultTable:
    """Test every set of ``catalog`` on the rows of ``X`` it matches.

    ``X`` should already be preprocessed (see :func:`preprocess`). Sets with
    fewer than two matched features are skipped and listed in ``skipped``.
    q-values are computed per statistic across the sets that ran. Each set
    draws permutations from its own seed, so results do not depend on the
    other sets in the catalog or on ``threads``.
    """
    plan = plan or PermutationPlan()
    if not isinstance(X, FeatureMatrix):
        raise ValueError("pathway analysis needs feature ids on the matrix")
    A = as_array(X)

    def one(rs: ResolvedSet):
        sid = rs.gene_set.set_id
        if rs.skipped:
            return [], (sid, f"{len(rs.rows)} matched feature(s)")
        set_plan = PermutationPlan(**{**plan.__dict__, "seed": set_seed(plan.seed, sid),
                                      "threads": 1})
        try:
            results = covariance_test(A[list(rs.rows)], y, statistics, methods, set_plan,
                                      covariates=covariates,
                                      residualize_in_loop=residualize_in_loop)
        except (ArithmeticError, ValueError) as exc:
            return [], (sid, str(exc))
        return [PathwayRow(sid, len(rs.rows), r.statistic, r.value, r.p_value, r.method)
                for r in results], None

    resolved = catalog.resolve(X.feature_ids)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(one, resolved))
    else:
        outcomes = [one(rs) for rs in resolved]
    rows = [r for part, _ in outcomes for r in part]
    skipped = [s for _, s in outcomes if s is not None]
    for stat in statistics:
        mine = [r for r in rows if r.statistic == stat]
        if mine:
            for r, q in zip(mine, bh_qvalues([r.p_value for r in mine])):
                r.q_value = float(q)
    return PathwayResultTable(rows, skipped).sorted()


def risk_score_export(X, y, rows, statistic: str) -> tuple[tuple[str, ...], np.ndarray]:
    """Per-sample risk scores of ``statistic`` on the given rows.

    ``w`` for S, ``b`` for C, the winning product vector for M.
    """
    A = as_array(X)[list(rows)]
    n = A.shape[1]
    sids = getattr(X, "sample_ids", None) or tuple(f"s{k + 1}" for k in range(n))
    if statistic == "S":
        return sids, st.risk_scores_w(A).values
    if statistic == "C":
        return sids, st.risk_scores_b(A).values
    if statistic == "M":
        return sids, st.stat_M(A, y).risk_scores.values
    if statistic == "Q":
        raise Unsupported("Q has no per-sample risk score")
    raise ValueError(f"unknown statistic {statistic!r}")
