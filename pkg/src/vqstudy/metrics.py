"""Correlation metrics and level accuracy for predictor benchmarking.

SRCC uses average ranks for ties; KRCC is Kendall tau-b computed in
O(n log n) via merge-sort inversion counting; PLCC is plain Pearson on raw
scores (no logistic mapping). Constant inputs raise
UndefinedCorrelationError instead of propagating NaN.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import UndefinedCorrelationError
from .kernels import count_inversions


def _paired(predictions, targets) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.ndim != 1 or t.ndim != 1 or p.size != t.size:
        raise ValueError(
            f"paired series must be 1-d and equal length, got {p.shape} vs {t.shape}"
        )
    if p.size < 2:
        raise ValueError(f"need n >= 2 samples, got {p.size}")
    if not (np.isfinite(p).all() and np.isfinite(t).all()):
        raise ValueError("series contain non-finite values")
    return p, t


def average_ranks(values) -> np.ndarray:
    """1-based ranks; tied values receive the mean of the ranks they span."""
    x = np.asarray(values, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    sx = x[order]
    new_group = np.empty(x.size, dtype=bool)
    new_group[0] = True
    new_group[1:] = sx[1:] != sx[:-1]
    group = np.cumsum(new_group) - 1
    counts = np.bincount(group)
    ends = np.cumsum(counts).astype(np.float64)
    mean_rank = ends - (counts - 1) / 2.0
    ranks = np.empty(x.size, dtype=np.float64)
    ranks[order] = mean_rank[group]
    return ranks


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    # two-pass: center first, then normalized dot product; the product of
    # squared norms keeps r exactly +-1.0 for perfectly correlated input
    da = a - a.mean()
    db = b - b.mean()
    na2 = float(da @ da)
    nb2 = float(db @ db)
    if na2 == 0.0 or nb2 == 0.0:
        raise UndefinedCorrelationError("constant series has no correlation")
    denom = math.sqrt(na2 * nb2)
    if denom == 0.0:  # product underflowed despite positive norms
        denom = math.sqrt(na2) * math.sqrt(nb2)
    r = float(da @ db) / denom
    return min(1.0, max(-1.0, r))


def plcc(predictions, targets) -> float:
    """Pearson linear correlation on raw values."""
    p, t = _paired(predictions, targets)
    return _pearson(p, t)


def srcc(predictions, targets) -> float:
    """Spearman rank correlation: Pearson over average ranks."""
    p, t = _paired(predictions, targets)
    return _pearson(average_ranks(p), average_ranks(t))


def _tie_pair_count(sorted_vals: np.ndarray) -> int:
    """Sum of c*(c-1)/2 over tie groups of a sorted array."""
    if sorted_vals.size < 2:
        return 0
    change = np.nonzero(sorted_vals[1:] != sorted_vals[:-1])[0] + 1
    bounds = np.concatenate(([0], change, [sorted_vals.size]))
    counts = np.diff(bounds)
    return int((counts * (counts - 1) // 2).sum())


def krcc(predictions, targets) -> float:
    """Kendall tau-b with tie corrections, O(n log n).

    tau_b = (C - D) / sqrt((n0 - n1)(n0 - n2)) where n0 = n(n-1)/2 and
    n1, n2 are tied-pair counts in each series. Discordant pairs come from
    inversion counting over targets after a (predictions, targets) lexsort.
    """
    p, t = _paired(predictions, targets)
    n = p.size
    perm = np.lexsort((t, p))
    x = p[perm]
    y = t[perm]

    n0 = n * (n - 1) // 2
    n1 = _tie_pair_count(x)
    n2 = _tie_pair_count(np.sort(t, kind="stable"))
    # joint ties: consecutive equal (x, y) pairs in lexsorted order
    same_xy = (x[1:] == x[:-1]) & (y[1:] == y[:-1])
    change = np.nonzero(~same_xy)[0] + 1
    bounds = np.concatenate(([0], change, [n]))
    counts = np.diff(bounds)
    n3 = int((counts * (counts - 1) // 2).sum())

    if n0 == n1 or n0 == n2:
        raise UndefinedCorrelationError("all-tied series has no rank correlation")
    discordant = count_inversions(y)
    numer = float(n0 - n1 - n2 + n3 - 2 * discordant)
    tau = numer / math.sqrt(float(n0 - n1) * float(n0 - n2))
    return min(1.0, max(-1.0, tau))


def level_accuracy(predicted_levels: Sequence, true_levels: Sequence) -> float:
    """Fraction of exact level matches."""
    if len(predicted_levels) != len(true_levels):
        raise ValueError(
            f"length mismatch: {len(predicted_levels)} vs {len(true_levels)}"
        )
    if len(true_levels) == 0:
        raise ValueError("need n >= 1 levels")
    hits = sum(1 for a, b in zip(predicted_levels, true_levels) if a == b)
    return hits / len(true_levels)
