"""Set-based tests for outcome-dependent covariance (S, Q, C and M statistics)."""

from __future__ import annotations

from importlib import resources

from .analysis import CovTestResult, covariance_test
from .errors import CovTestError
from .genesets import GeneSetCatalog, PathwayResultTable, bh_qvalues, parse_gmt, run_pathways
from .matrix import FeatureMatrix, Outcome, read_matrix, sample_covariance
from .permutation import PermutationPlan, PermutationResult, enumerate_p, permute_p
from .pvalues import extreme_value_p, mcc_p, normal_p
from .simulate import PowerReport, SimulationSpec, run_trials
from .statistics import (
    encode_two_group,
    slope_matrix,
    stat_C,
    stat_M,
    stat_Q,
    stat_S,
)

__all__ = [
    "CovTestError", "CovTestResult", "FeatureMatrix", "GeneSetCatalog", "Outcome",
    "PathwayResultTable", "PermutationPlan", "PermutationResult", "PowerReport",
    "SimulationSpec", "bh_qvalues", "covariance_test", "demo_path", "encode_two_group",
    "enumerate_p", "extreme_value_p", "mcc_p", "normal_p", "parse_gmt", "permute_p",
    "read_matrix", "run_pathways", "run_trials", "sample_covariance", "slope_matrix",
    "stat_C", "stat_M", "stat_Q", "stat_S",
]


def demo_path(name: str) -> str:
    """Path of a packaged demo file: ``matrix.tsv``, ``groups.tsv`` or ``sets.gmt``."""
    return str(resources.files(__name__) / "data" / name)
