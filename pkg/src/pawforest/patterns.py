"""Flip-pattern taxonomy for root-to-leaf decision paths.

Every node of a fitted classification tree has a majority class; following a
root-to-leaf path therefore yields a sequence of class labels that either
stays constant or "flips" at some depths.  This module reduces such a label
sequence to its flip statistics and classifies it into one of six mutually
exclusive structural types, keyed by where the flips happen (early, middle,
late thirds of the normalized path) and how often the flip direction
reverses.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

__all__ = [
    "FlipPattern",
    "FlipStats",
    "PATTERN_NAMES",
    "classify",
    "classify_arrays",
    "flip_rate",
    "flip_stats",
]

ONE_THIRD = 1.0 / 3.0
TWO_THIRDS = 2.0 / 3.0


class FlipPattern(IntEnum):
    """Six mutually exclusive structural types of a path label sequence."""

    NOFLIP = 0
    EARLY_SW = 1
    LATE_SW = 2
    OSCILLAT = 3
    RECOVER = 4
    OTHER = 5

    @property
    def label(self) -> str:
        """Lowercase wire name: "noflip", "early_sw", ..."""
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "FlipPattern":
        return cls[label.upper()]


PATTERN_NAMES: tuple[str, ...] = tuple(p.label for p in FlipPattern)


@dataclass(frozen=True)
class FlipStats:
    """Flip summary of a single path label sequence.

    ``positions`` are flip depths normalized by the total path depth, so the
    deepest possible flip (at the leaf) sits at exactly 1.0.  For binary
    labels consecutive flips always alternate in direction, which forces
    ``n_rev == max(0, k - 1)``.
    """

    k: int
    positions: tuple[float, ...]
    n_rev: int
    depth: int


def flip_stats(labels) -> FlipStats:
    """Compute flip statistics of a binary label sequence of length depth + 1.

    A flip occurs at index ``i`` when ``labels[i] != labels[i - 1]``; its
    normalized position is ``i / depth``.  A root-only sequence (depth 0) has
    no flips by construction.
    """
    arr = np.asarray(labels)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("label sequence must be a non-empty 1-D sequence")
    d = int(arr.size - 1)
    flips = np.flatnonzero(arr[1:] != arr[:-1]) + 1
    k = int(flips.size)
    if k == 0:
        return FlipStats(k=0, positions=(), n_rev=0, depth=d)
    # direction of each flip (+1 upward, -1 downward); reversals are sign changes
    dirs = np.sign(arr[flips].astype(np.int64) - arr[flips - 1].astype(np.int64))
    n_rev = int(np.count_nonzero(dirs[1:] != dirs[:-1]))
    positions = tuple((flips / d).tolist())
    return FlipStats(k=k, positions=positions, n_rev=n_rev, depth=d)


def classify(stats: FlipStats) -> FlipPattern:
    """Map flip statistics to exactly one pattern type.

    Boundary convention: a first/last flip position exactly at 1/3 or 2/3
    fails the strict early/late inequalities and falls through to OTHER.
    """
    if stats.k == 0:
        return FlipPattern.NOFLIP
    f1 = stats.positions[0]
    fk = stats.positions[-1]
    if stats.n_rev >= 2 or (stats.n_rev == 1 and fk >= TWO_THIRDS):
        return FlipPattern.OSCILLAT
    if stats.n_rev == 1:
        return FlipPattern.RECOVER
    # from here on n_rev == 0
    if f1 < ONE_THIRD and fk < TWO_THIRDS:
        return FlipPattern.EARLY_SW
    if f1 > TWO_THIRDS:
        return FlipPattern.LATE_SW
    return FlipPattern.OTHER


def classify_arrays(k, f1, fk, n_rev) -> np.ndarray:
    """Vectorized :func:`classify` over parallel arrays.

    ``f1``/``fk`` entries are ignored wherever ``k == 0``; any finite filler
    value is acceptable there.  Returns int8 pattern codes.
    """
    k = np.asarray(k)
    f1 = np.asarray(f1, dtype=np.float64)
    fk = np.asarray(fk, dtype=np.float64)
    n_rev = np.asarray(n_rev)
    out = np.full(k.shape, int(FlipPattern.OTHER), dtype=np.int8)
    osc = (n_rev >= 2) | ((n_rev == 1) & (fk >= TWO_THIRDS))
    rec = ~osc & (n_rev == 1)
    early = ~osc & ~rec & (f1 < ONE_THIRD) & (fk < TWO_THIRDS)
    late = ~osc & ~rec & ~early & (f1 > TWO_THIRDS)
    out[osc] = int(FlipPattern.OSCILLAT)
    out[rec] = int(FlipPattern.RECOVER)
    out[early] = int(FlipPattern.EARLY_SW)
    out[late] = int(FlipPattern.LATE_SW)
    out[k == 0] = int(FlipPattern.NOFLIP)
    return out


def flip_rate(stats: FlipStats) -> float:
    """Flip count over path depth, in [0, 1]; a depth-0 path has rate 0."""
    if stats.depth == 0:
        return 0.0
    return stats.k / stats.depth
