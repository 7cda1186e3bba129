"""Per-viseme recognition analysis over confusion matrices.

Pr{v | v-hat}: of all the times the recognizer said v, the share where the
reference really was v. Visemes are ranked on it, rankings compared with
Spearman's coefficient, and per-fold numbers summarized as mean and standard
error.
"""

import logging
import math
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .config import config
from .errors import AnalysisError
from .models import (
    CorrelationResult,
    DeclineComparison,
    DeclinePoint,
    FeatureComparison,
    FoldStatistics,
    ProbabilityMode,
    RankingResult,
    VisemeProbability,
)
from .scoring import ConfusionMatrix

logger = logging.getLogger(__name__)

# Largest item count whose permutation distribution is enumerated exactly
EXACT_P_LIMIT = 10


def inverse_recognition_prob(cm: ConfusionMatrix, viseme: str) -> Optional[float]:
    """counts[v][v] over the hypothesis column total; None if v was never output"""
    column = cm.column_total(viseme)
    if column == 0:
        logger.warning("Viseme '%s' was never recognized; probability undefined", viseme)
        return None
    return cm.get(viseme, viseme) / column


def _mean_and_error(values: Sequence[float]) -> Tuple[float, float]:
    array = np.asarray(values, dtype=float)
    if array.size < 2:
        return float(array.mean()), 0.0
    return float(array.mean()), float(array.std(ddof=1) / math.sqrt(array.size))


def viseme_probabilities(
    matrices: Sequence[ConfusionMatrix],
    mode: ProbabilityMode = ProbabilityMode.PER_FOLD,
    visemes: Optional[Sequence[str]] = None,
) -> List[VisemeProbability]:
    if not matrices:
        raise AnalysisError("No confusion matrices to analyse")
    if visemes is None:
        visemes = ConfusionMatrix.merge(matrices).labels

    result: List[VisemeProbability] = []
    if mode == ProbabilityMode.POOLED:
        pooled = ConfusionMatrix.merge(matrices)
        for viseme in visemes:
            p = inverse_recognition_prob(pooled, viseme) if viseme in pooled.labels else None
            result.append(VisemeProbability(viseme=viseme, p=p, se=0.0, n_folds=len(matrices) if p is not None else 0))
        return result

    for viseme in visemes:
        values = [
            p
            for p in (inverse_recognition_prob(m, viseme) for m in matrices if viseme in m.labels)
            if p is not None
        ]
        if not values:
            result.append(VisemeProbability(viseme=viseme, p=None, se=0.0, n_folds=0))
            continue
        mean, error = _mean_and_error(values)
        result.append(VisemeProbability(viseme=viseme, p=min(max(mean, 0.0), 1.0), se=error, n_folds=len(values)))
    return result


def _as_values(probs: Union[Mapping[str, Optional[float]], Sequence[VisemeProbability]]) -> Dict[str, Optional[float]]:
    if isinstance(probs, Mapping):
        return dict(probs)
    return {item.viseme: item.p for item in probs}


def rank_visemes(
    probs: Union[Mapping[str, Optional[float]], Sequence[VisemeProbability]],
    tie_epsilon: Optional[float] = None,
) -> RankingResult:
    """Descending ranking; values within `tie_epsilon` of a group's leader tie"""
    epsilon = config.TIE_EPSILON if tie_epsilon is None else tie_epsilon
    values = _as_values(probs)
    defined = {v: float(p) for v, p in values.items() if p is not None}
    if any(not math.isfinite(p) for p in defined.values()):
        raise AnalysisError("Probabilities must be finite to rank")
    undefined = sorted(v for v, p in values.items() if p is None)

    ordered = sorted(defined, key=lambda v: (-defined[v], v))
    groups: List[List[str]] = []
    for viseme in ordered:
        if groups and defined[groups[-1][0]] - defined[viseme] <= epsilon:
            groups[-1].append(viseme)
        else:
            groups.append([viseme])

    ranks: Dict[str, float] = {}
    position = 1
    for group in groups:
        shared = position + (len(group) - 1) / 2.0
        for viseme in group:
            ranks[viseme] = shared
        position += len(group)
    if undefined:
        groups.append(undefined)
    return RankingResult(groups=groups, ranks=ranks, values=defined, undefined=undefined)


def fractional_ranks(values: Sequence[float]) -> np.ndarray:
    """Ascending ranks 1..n, ties sharing the mean of the ranks they span"""
    return stats.rankdata(np.asarray(values, dtype=float), method="average")


def _exact_p_value(a: np.ndarray, b: np.ndarray) -> float:
    """Two-tailed permutation p-value of sum(a * b), by dynamic programming over
    partial assignments of b's entries to a's positions."""
    n = a.size
    # Fractional ranks are multiples of 1/2, so doubled ranks are integers
    a2 = np.rint(2 * a).astype(int).tolist()
    b2 = np.rint(2 * b).astype(int).tolist()
    centre = sum(a2) * sum(b2)
    observed = abs(n * sum(x * y for x, y in zip(a2, b2)) - centre)

    layers: List[Dict[int, int]] = [dict() for _ in range(1 << n)]
    layers[0][0] = 1
    for mask in range(1 << n):
        current = layers[mask]
        if not current:
            continue
        k = bin(mask).count("1")
        if k == n:
            continue
        for j in range(n):
            if mask & (1 << j):
                continue
            target = layers[mask | (1 << j)]
            step = a2[k] * b2[j]
            for total, count in current.items():
                target[total + step] = target.get(total + step, 0) + count
        layers[mask] = {} if k < n else current

    final = layers[(1 << n) - 1]
    extreme = sum(count for total, count in final.items() if abs(n * total - centre) >= observed)
    return extreme / math.factorial(n)


def _t_p_value(r: float, n: int) -> Optional[float]:
    if n <= 2:
        return None
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return float(2.0 * stats.t.sf(abs(t), n - 2))


def _rank_map(ranking: Union[RankingResult, Mapping[str, float]]) -> Dict[str, float]:
    if isinstance(ranking, RankingResult):
        return dict(ranking.ranks)
    return {k: float(v) for k, v in ranking.items()}


def spearman(
    a: Union[RankingResult, Mapping[str, float]],
    b: Union[RankingResult, Mapping[str, float]],
) -> CorrelationResult:
    """Tie-corrected Spearman coefficient over the items ranked in both"""
    ranks_a, ranks_b = _rank_map(a), _rank_map(b)
    items = sorted(set(ranks_a) & set(ranks_b))
    if len(items) < 3:
        raise AnalysisError(f"Spearman needs at least 3 shared items, got {len(items)}")
    x = fractional_ranks([ranks_a[i] for i in items])
    y = fractional_ranks([ranks_b[i] for i in items])
    dx, dy = x - x.mean(), y - y.mean()
    denominator = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denominator == 0:
        raise AnalysisError("Correlation undefined: a ranking has no variance")
    r = float(np.clip((dx @ dy) / denominator, -1.0, 1.0))

    n = len(items)
    t_p = _t_p_value(r, n)
    if n <= EXACT_P_LIMIT:
        p, method = _exact_p_value(x, y), "exact"
    else:
        p, method = (t_p if t_p is not None else 1.0), "t"
    return CorrelationResult(r=r, p_value=min(max(p, 0.0), 1.0), n=n, method=method, t_p_value=t_p)


def correlation_table(rankings: Mapping[str, RankingResult]) -> Dict[Tuple[str, str], CorrelationResult]:
    """Spearman results for every unordered pair of named rankings"""
    names = list(rankings)
    table: Dict[Tuple[str, str], CorrelationResult] = {}
    for i, first in enumerate(names):
        for second in names[i + 1 :]:
            try:
                table[(first, second)] = spearman(rankings[first], rankings[second])
            except AnalysisError as e:
                logger.warning("No correlation for %s vs %s: %s", first, second, e)
    return table


def fold_stats(values: Iterable[float]) -> FoldStatistics:
    array = np.asarray(list(values), dtype=float)
    if array.size < 2:
        raise AnalysisError("Fold statistics need at least two folds")
    mean, error = _mean_and_error(array)
    return FoldStatistics(mean=mean, standard_error=error, n_folds=int(array.size))


def feature_table(rows: Sequence[Tuple[str, FoldStatistics]]) -> str:
    """Rows of ``NAME MEAN SE`` with four decimals"""
    return "".join(f"{name} {s.mean:.4f} {s.standard_error:.4f}\n" for name, s in rows)


def decline_curve(probs: Sequence[VisemeProbability], k: int) -> List[DeclinePoint]:
    """The k best-recognized visemes, best first, with their standard errors"""
    if k < 0:
        raise AnalysisError("k must be non-negative")
    defined = [p for p in probs if p.p is not None]
    if k > len(defined):
        raise AnalysisError(f"Only {len(defined)} visemes have defined probabilities, asked for {k}")
    best = sorted(defined, key=lambda item: (-float(item.p), item.viseme))[:k]  # type: ignore[arg-type]
    return [
        DeclinePoint(position=i, viseme=item.viseme, p=float(item.p), se=item.se)  # type: ignore[arg-type]
        for i, item in enumerate(best, 1)
    ]


def decline_slope(series: Sequence[DeclinePoint]) -> float:
    """Mean first difference of a curve; more negative is steeper"""
    if len(series) < 2:
        return 0.0
    return float(np.mean(np.diff([point.p for point in series])))


def compare_declines(a: Sequence[DeclinePoint], b: Sequence[DeclinePoint]) -> DeclineComparison:
    slope_a, slope_b = decline_slope(a), decline_slope(b)
    if math.isclose(slope_a, slope_b, abs_tol=1e-12):
        steeper = "equal"
    else:
        steeper = "a" if slope_a < slope_b else "b"
    return DeclineComparison(slope_a=slope_a, slope_b=slope_b, steeper=steeper)


def compare_features(a: Sequence[VisemeProbability], b: Sequence[VisemeProbability]) -> List[FeatureComparison]:
    """Paired probabilities of two feature types for visemes defined in both"""
    second = {item.viseme: item for item in b if item.p is not None}
    return [
        FeatureComparison(
            viseme=item.viseme, p_a=item.p, se_a=item.se, p_b=second[item.viseme].p, se_b=second[item.viseme].se
        )
        for item in a
        if item.p is not None and item.viseme in second
    ]
