"""Fairness, efficiency and correlation metrics.

All functions are pure. Gini is computed over per-agent task counts and is
reported as ``fairness = 1 - gini``; efficiency is the ROI of accumulated
reward over accumulated cost; the SWF score is their product.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats as sps

EXACT_PVALUE_MAX_N = 8


class InvalidInput(ValueError):
    pass


@dataclass(frozen=True)
class MetricSnapshot:
    round: int
    gini: float
    fairness: float
    roi: float
    swf: float

    @classmethod
    def at(cls, round: int, gini_value: float, roi_value: float) -> "MetricSnapshot":
        fairness = 1.0 - gini_value
        return cls(round, gini_value, fairness, roi_value, swf_score(fairness, roi_value))


def gini(counts: Sequence[float]) -> float:
    """Gini coefficient via the mean absolute pairwise difference.

    ``sum_jk |x_j - x_k| / (2 n^2 mean(x))``; returns 0 for an all-zero vector.
    """
    x = np.asarray(counts, dtype=np.float64)
    n = x.size
    if n < 2:
        raise InvalidInput("gini needs at least two agents")
    if np.any(x < 0):
        raise InvalidInput("gini is undefined for negative counts")
    total = x.sum()
    if total == 0:
        return 0.0
    pairwise = np.abs(x[:, None] - x[None, :]).sum()
    return float(pairwise / (2.0 * n * total))


def gini_sorted_cumsum(wealth: Sequence[float]) -> float:
    # Closed form over sorted cumulative sums; independent of the pairwise path.
    w = np.sort(np.asarray(wealth, dtype=np.float64))
    total = w.sum()
    n = w.size
    if total == 0:
        return 0.0
    cumulative = np.cumsum(w)
    return float((n + 1 - 2 * np.sum(cumulative) / total) / n)


def roi(rewards: Sequence[float], costs: Sequence[float]) -> float:
    if len(rewards) != len(costs):
        raise InvalidInput("rewards and costs must have equal length")
    if any(r < 0 for r in rewards) or any(c < 0 for c in costs):
        raise InvalidInput("rewards and costs must be non-negative")
    total_cost = math.fsum(costs)
    if total_cost == 0:
        return 0.0
    return math.fsum(rewards) / total_cost


def swf_score(fairness: float, roi_value: float) -> float:
    return fairness * roi_value


class Aggregate(NamedTuple):
    score: float
    fairness: float
    efficiency: float


def aggregate_runs(snapshots: Sequence[MetricSnapshot]) -> Aggregate:
    """Average per-flow final snapshots.

    The score is the mean of per-flow products, which is generally not the
    product of mean fairness and mean efficiency.
    """
    if not snapshots:
        raise InvalidInput("aggregate_runs needs at least one snapshot")
    n = len(snapshots)
    return Aggregate(
        score=math.fsum(s.swf for s in snapshots) / n,
        fairness=math.fsum(s.fairness for s in snapshots) / n,
        efficiency=math.fsum(s.roi for s in snapshots) / n,
    )


def midranks(x: Sequence[float]) -> np.ndarray:
    return sps.rankdata(np.asarray(x, dtype=np.float64), method="average")


class SpearmanResult(NamedTuple):
    rho: float
    pvalue: float
    n: int
    degenerate: bool


def _spearman(x: Sequence[float], y: Sequence[float]) -> tuple[float, bool]:
    if len(x) != len(y):
        raise InvalidInput(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise InvalidInput("spearman needs at least two observations")
    rx = midranks(x)
    ry = midranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    sxx, syy = float(rx @ rx), float(ry @ ry)
    if sxx == 0 or syy == 0:
        return 0.0, True
    rho = float(rx @ ry) / math.sqrt(sxx * syy)
    if abs(abs(rho) - 1.0) < 1e-12:
        rho = math.copysign(1.0, rho)  # exact rank agreement, free of rounding residue
    return max(-1.0, min(1.0, rho)), False


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Tie-corrected Spearman rho (Pearson over mid-ranks); 0 for constant input."""
    return _spearman(x, y)[0]


def spearman_test(x: Sequence[float], y: Sequence[float], method: str = "auto") -> SpearmanResult:
    rho, degenerate = _spearman(x, y)
    n = len(x)
    p = 1.0 if degenerate or n < 4 else spearman_pvalue(rho, n, method=method)
    return SpearmanResult(rho, p, n, degenerate)


@lru_cache(maxsize=None)
def _null_rhos(n: int) -> np.ndarray:
    base = np.arange(n, dtype=np.int64)
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    d2 = ((perms - base) ** 2).sum(axis=1)
    # Integer d^2 keeps the distribution exact; rho = 1 - 6 d2 / (n^3 - n).
    return 1.0 - 6.0 * d2 / (n**3 - n)


def spearman_pvalue_exact(rho: float, n: int) -> float:
    """Two-sided p from the full permutation null (untied ranks)."""
    if n > 10:
        raise InvalidInput("exact enumeration is limited to n <= 10")
    null = _null_rhos(n)
    return float(np.mean(np.abs(null) >= abs(rho) - 1e-12))


def spearman_pvalue_t(rho: float, n: int) -> float:
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return float(min(1.0, 2.0 * sps.t.sf(abs(t), df=n - 2)))


def spearman_pvalue(rho: float, n: int, method: str = "auto") -> float:
    """Two-sided p-value for a Spearman rho over ``n`` pairs.

    ``method`` is ``"auto"`` (exact enumeration for n <= 8, else Student t),
    ``"exact"`` or ``"t"``. ``|rho| == 1`` maps to 0 by convention.
    """
    if n < 4:
        raise InvalidInput("spearman_pvalue needs n >= 4")
    if abs(rho) >= 1.0:
        return 0.0
    if rho == 0:
        return 1.0
    if method == "auto":
        method = "exact" if n <= EXACT_PVALUE_MAX_N else "t"
    if method == "exact":
        return spearman_pvalue_exact(rho, n)
    if method == "t":
        return spearman_pvalue_t(rho, n)
    raise InvalidInput(f"unknown p-value method {method!r}")
