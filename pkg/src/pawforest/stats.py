"""Nonparametric test and correlation statistics for the benchmark reports.

The Wilcoxon signed-rank test drops zero deltas, average-ranks tied absolute
values, and reports the sum of positive ranks; the two-sided p-value comes
from exact enumeration of sign assignments for small samples and from a
continuity-corrected normal approximation (with tie correction) otherwise.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "average_ranks",
    "pearson",
    "quintile_table",
    "spearman",
    "wilcoxon_signed_rank",
]

EXACT_LIMIT = 20


def average_ranks(values) -> np.ndarray:
    """Ranks starting at 1, ties replaced by their group mean."""
    a = np.asarray(values, dtype=np.float64)
    order = np.argsort(a, kind="stable")
    ranks = np.empty(a.size, dtype=np.float64)
    i = 0
    while i < a.size:
        j = i
        while j < a.size and a[order[j]] == a[order[i]]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + 1 + j)  # mean of ranks i+1 .. j
        i = j
    return ranks


def _exact_two_sided_p(doubled_ranks: np.ndarray, doubled_w: int) -> float:
    """Exact two-sided tail by dynamic programming over sign assignments.

    ``doubled_ranks`` are 2x the (possibly half-integer) ranks, so all sums
    are integers; counts fit exactly in float64 for n <= 20.
    """
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled_ranks:
        r = int(r)
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: counts.size - r]
        counts = counts + shifted
    n_assign = counts.sum()
    p_le = counts[: doubled_w + 1].sum() / n_assign
    p_ge = counts[doubled_w:].sum() / n_assign
    return min(1.0, 2.0 * min(p_le, p_ge))


def wilcoxon_signed_rank(deltas, mode: str = "auto") -> tuple[float, float]:
    """Paired signed-rank test; returns (W, two-sided p) with W the sum of
    the ranks of positive deltas.

    Zero deltas are dropped; at least 5 nonzero deltas are required.
    ``mode`` is "exact", "approx", or "auto" (exact up to n = 20).
    """
    d = np.asarray(deltas, dtype=np.float64)
    d = d[d != 0]
    n = d.size
    if n < 5:
        raise ValueError(f"need at least 5 nonzero deltas, got {n}")
    ranks = average_ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if mode not in ("auto", "exact", "approx"):
        raise ValueError(f"unknown mode {mode!r}")
    exact = mode == "exact" or (mode == "auto" and n <= EXACT_LIMIT)
    if exact:
        doubled = np.rint(2 * ranks).astype(np.int64)
        p = _exact_two_sided_p(doubled, int(round(2 * w_plus)))
        return w_plus, p
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    var -= float(((tie_counts**3 - tie_counts) / 48.0).sum())
    diff = w_plus - mean
    # continuity correction shrinks the deviation by half a step
    adj = max(abs(diff) - 0.5, 0.0)
    z = adj / math.sqrt(var)
    p = math.erfc(z / math.sqrt(2.0))
    return w_plus, min(1.0, p)


def pearson(x, y) -> float:
    """Product-moment correlation coefficient."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 3:
        raise ValueError("need two equal-length 1-D arrays with at least 3 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float((dx**2).sum())
    sy = float((dy**2).sum())
    if sx == 0 or sy == 0:
        raise ValueError("constant input has no defined correlation")
    return float((dx * dy).sum() / math.sqrt(sx * sy))


def spearman(x, y) -> float:
    """Rank correlation: Pearson on average ranks."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 3:
        raise ValueError("need two equal-length 1-D arrays with at least 3 points")
    return pearson(average_ranks(x), average_ranks(y))


def quintile_table(ms, deltas, labels=None) -> list[dict]:
    """Group datasets into 5 contiguous quintiles by ascending ``ms``.

    Sizes differ by at most the remainder, which goes entirely to the lowest
    quintile (n = 36 gives sizes 8,7,7,7,7).  Each row reports the ms range,
    mean delta, and full-precision win/tie/loss counts of its group.
    """
    ms = np.asarray(ms, dtype=np.float64)
    deltas = np.asarray(deltas, dtype=np.float64)
    n = ms.size
    if n < 5 or deltas.size != n:
        raise ValueError("need at least 5 paired (ms, delta) values")
    order = np.argsort(ms, kind="stable")
    sizes = [n // 5] * 5
    sizes[0] += n % 5
    rows = []
    offset = 0
    for q, size in enumerate(sizes, start=1):
        idx = order[offset : offset + size]
        offset += size
        d = deltas[idx]
        rows.append(
            {
                "quintile": q,
                "size": int(size),
                "ms_min": float(ms[idx].min()),
                "ms_max": float(ms[idx].max()),
                "mean_delta": float(d.mean()),
                "wins": int((d > 0).sum()),
                "ties": int((d == 0).sum()),
                "losses": int((d < 0).sum()),
                "datasets": [labels[i] for i in idx] if labels is not None else None,
            }
        )
    return rows
