"""Paired t-test and Wilcoxon signed-rank test."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr, stdtr

EXACT_LIMIT = 20


class StatError(ValueError):
    pass


@dataclass(frozen=True)
class StatResult:
    test_name: str  # "pairedT" | "wilcoxonSignedRank"
    statistic: float
    p_value: float
    n: int

    def to_dict(self) -> dict:
        return {"test": self.test_name, "statistic": self.statistic, "p_value": self.p_value, "n": self.n}


def _differences(a: Sequence[float], b: Sequence[float]) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise StatError("samples must be 1-D and of equal length")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise StatError("samples must be finite")
    return a - b


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> StatResult:
    """One-sample t on ``a - b`` with a two-sided p from t(n-1)."""
    d = _differences(a, b)
    n = d.size
    if n < 2:
        raise StatError("paired t-test needs n >= 2")
    sd = d.std(ddof=1)
    if sd == 0:
        raise StatError("degenerate sample: differences have zero variance")
    t = d.mean() / (sd / math.sqrt(n))
    p = 2.0 * stdtr(n - 1, -abs(t))
    return StatResult("pairedT", float(t), float(min(1.0, p)), n)


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(x.size)
    xs = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def _exact_p(ranks: np.ndarray, w: float) -> float:
    """Two-sided P(W <= w) under random signs, via a DP over doubled ranks."""
    doubled = np.rint(2 * ranks).astype(int)
    total = int(doubled.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    limit = int(round(2 * w))
    p = counts[:limit + 1].sum() / 2.0 ** len(ranks)
    return min(1.0, 2.0 * p)


def wilcoxon_signed_rank(a: Sequence[float], b: Sequence[float]) -> StatResult:
    """Signed-rank test, W = min(W+, W-).

    Zero differences are dropped and tied magnitudes share their average
    rank.  Up to 20 pairs the p-value is exact; beyond, a normal
    approximation with continuity and tie corrections is used.
    """
    d = _differences(a, b)
    if d.size and not d.any():
        raise StatError("degenerate sample: all differences are zero")
    d = d[d != 0]
    n = d.size
    if n < 5:
        raise StatError("Wilcoxon test needs at least 5 nonzero differences")
    ranks = _average_ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)
    if n <= EXACT_LIMIT:
        p = _exact_p(ranks, w)
    else:
        mean = n * (n + 1) / 4
        _, tie_counts = np.unique(np.abs(d), return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24 - (tie_counts ** 3 - tie_counts).sum() / 48
        z = (w - mean + 0.5) / math.sqrt(var)
        p = min(1.0, 2.0 * float(ndtr(min(z, 0.0))))
    return StatResult("wilcoxonSignedRank", w, float(p), n)
