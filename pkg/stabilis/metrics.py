"""
Accuracy and stability metrics: ROC AUC, temporal stability and the
inter-run mean squared prediction difference (MSPD).
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from stabilis.errors import MetricError

logger = logging.getLogger(__name__)

WEIGHTINGS = ('ongoing', 'uniform')


@dataclass(frozen=True)
class ScoreSeries:
    case_id: str
    outcome: int
    scores: np.ndarray

    def __len__(self) -> int:
        return len(self.scores)


@dataclass
class EvaluationReport:
    auc_by_prefix_len: Dict[int, float]
    n_cases_by_prefix_len: Dict[int, int]
    overall_auc: float
    temporal_stability: float
    n_excluded: int = 0
    n_series: int = 0
    undefined_prefix_lens: List[int] = field(default_factory=list)


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    Probability that a random positive outscores a random negative (ties count 1/2).

    Uses the rank-sum form: U = sum of positive ranks - P(P+1)/2 with
    average ranks for ties, which equals the pairwise win count exactly.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=int)
    if s.shape != y.shape:
        raise MetricError(f"{s.size} scores but {y.size} labels")
    n_pos = int(np.sum(y == 1))
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise MetricError(f"AUC undefined with a single class (positives={n_pos}, negatives={n_neg})")
    ranks = rankdata(s, method='average')
    u = float(np.sum(ranks[y == 1])) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def temporal_stability(series_list: Sequence[ScoreSeries]) -> float:
    """
    1 - mean over cases of the mean absolute change between successive scores.

    Series with a single score are excluded; see `evaluate_series` for the
    excluded count.
    """
    per_case = [float(np.mean(np.abs(np.diff(s.scores)))) for s in series_list if len(s) >= 2]
    if not per_case:
        raise MetricError("Temporal stability needs at least one series with two or more scores")
    return 1.0 - math.fsum(per_case) / len(per_case)


def mspd(runs: Sequence[Sequence[float]]) -> float:
    """
    Mean squared prediction difference across R runs over N shared points.

    With c_j = f_j - mean(f_j) the run-centered predictions,
    Var_i = (1/R) sum_j c_j(x_i)^2 and Cov_i = mean over pairs j<k of
    c_j(x_i) c_k(x_i); MSPD = 2 mean_i (Var_i - Cov_i). Computed as the
    equivalent mean over run pairs and points of (c_j(x_i) - c_k(x_i))^2, so
    identical runs give exactly 0.

    Args:
        runs: R x N predictions, R >= 2.
    """
    F = np.asarray(runs, dtype=float)
    if F.ndim != 2 or F.shape[0] < 2:
        raise MetricError(f"MSPD needs at least 2 runs, got shape {F.shape}")
    if F.shape[1] == 0:
        raise MetricError("MSPD needs at least one validation point")
    centered = F - F.mean(axis=1, keepdims=True)
    pairs = [np.mean((centered[j] - centered[k]) ** 2) for j, k in combinations(range(F.shape[0]), 2)]
    return math.fsum(pairs) / len(pairs)


def overall_auc(
    auc_by_len: Dict[int, Optional[float]],
    n_cases_by_len: Dict[int, int],
    weighting: str = 'ongoing',
) -> float:
    """Weighted mean of per-length AUCs; lengths with undefined AUC are skipped."""
    if weighting not in WEIGHTINGS:
        raise MetricError(f"Unknown weighting '{weighting}'")
    numerator, denominator = 0.0, 0.0
    for length, value in auc_by_len.items():
        if value is None or (isinstance(value, float) and math.isnan(value)):
            continue
        weight = float(n_cases_by_len.get(length, 0)) if weighting == 'ongoing' else 1.0
        numerator += weight * value
        denominator += weight
    if denominator <= 0:
        raise MetricError("No prefix length has a defined AUC")
    return numerator / denominator


def evaluate_series(
    series_list: Sequence[ScoreSeries],
    weighting: str = 'ongoing',
    long_cases_only: bool = False,
    first_prefix_len: int = 1,
) -> EvaluationReport:
    """
    Full evaluation of one set of score series.

    Args:
        series_list: One series per test case; index i holds the score of
            the prefix of length first_prefix_len + i.
        weighting: 'ongoing' (cases with T >= t) or 'uniform'.
        long_cases_only: Keep only cases reaching the longest prefix length.
        first_prefix_len: Prefix length of each series' first score.

    Returns:
        EvaluationReport; prefix lengths whose cases are single-class are
        listed in `undefined_prefix_lens` and left out of `auc_by_prefix_len`.
    """
    series_list = list(series_list)
    if not series_list:
        raise MetricError("No score series to evaluate")
    if long_cases_only:
        longest = max(len(s) for s in series_list)
        series_list = [s for s in series_list if len(s) == longest]

    max_len = max(len(s) for s in series_list)
    auc_by_len: Dict[int, float] = {}
    n_by_len: Dict[int, int] = {}
    undefined: List[int] = []
    for index in range(max_len):
        t = index + first_prefix_len
        ongoing = [s for s in series_list if len(s) > index]
        n_by_len[t] = len(ongoing)
        labels = [s.outcome for s in ongoing]
        if len(set(labels)) < 2:
            undefined.append(t)
            continue
        auc_by_len[t] = auc([s.scores[index] for s in ongoing], labels)
    if undefined:
        logger.debug(f"AUC undefined at prefix lengths {undefined}")

    n_excluded = sum(1 for s in series_list if len(s) < 2)
    return EvaluationReport(
        auc_by_prefix_len=auc_by_len,
        n_cases_by_prefix_len=n_by_len,
        overall_auc=overall_auc(auc_by_len, n_by_len, weighting),
        temporal_stability=temporal_stability(series_list),
        n_excluded=n_excluded,
        n_series=len(series_list),
        undefined_prefix_lens=undefined,
    )
