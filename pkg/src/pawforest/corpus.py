"""Benchmark dataset helpers.

Provides the datasets that can be materialized without any network access:
the tic-tac-toe endgame table (reconstructed exactly by enumerating all
reachable game-over boards), the WDBC breast-cancer table bundled with
scikit-learn, and the four synthetic geometries.  Every other benchmark
dataset must be supplied as a CSV in a data directory; ``resolve`` looks
there after the built-in sources.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import SYNTHETIC_KINDS, Dataset, gen_synthetic, load_csv

__all__ = [
    "available_builtin",
    "resolve",
    "synthetic_suite",
    "tictactoe_endgame",
    "wdbc",
]

_LINES = (
    (0, 1, 2), (3, 4, 5), (6, 7, 8),  # rows
    (0, 3, 6), (1, 4, 7), (2, 5, 8),  # columns
    (0, 4, 8), (2, 4, 6),             # diagonals
)

_TTT_CACHE: Dataset | None = None


def _winner(board: tuple[int, ...], player: int) -> bool:
    return any(all(board[i] == player for i in line) for line in _LINES)


def tictactoe_endgame() -> Dataset:
    """All 958 distinct legal end-of-game tic-tac-toe boards, x moving first.

    Cells are encoded b=0, o=1, x=2 (alphabetical); the label is 1 when x
    has a three-in-a-row ("positive", 626 boards) and 0 otherwise
    ("negative", 332 boards).  Rows are in sorted board order.
    """
    global _TTT_CACHE
    if _TTT_CACHE is not None:
        return _TTT_CACHE
    terminal: set[tuple[int, ...]] = set()

    def play(board: tuple[int, ...], player: int) -> None:
        for cell in range(9):
            if board[cell] != 0:
                continue
            nxt = board[:cell] + (player,) + board[cell + 1 :]
            if _winner(nxt, player) or all(v != 0 for v in nxt):
                terminal.add(nxt)
            else:
                play(nxt, 3 - player)

    play((0,) * 9, 1)  # player 1 = x, player 2 = o
    boards = sorted(terminal)
    # map internal {0 empty, 1 x, 2 o} to the b=0, o=1, x=2 ordinal encoding
    encode = np.array([0, 2, 1], dtype=np.float64)
    X = encode[np.array(boards, dtype=np.int64)]
    y = np.array([1 if _winner(b, 1) else 0 for b in boards], dtype=np.int8)
    names = tuple(f"cell_{r}{c}" for r in "tmb" for c in "lmr")
    _TTT_CACHE = Dataset.from_arrays(
        "tic-tac-toe", X, y, feature_names=names, label_names=("negative", "positive")
    )
    return _TTT_CACHE


def wdbc() -> Dataset:
    """WDBC breast-cancer table (569 x 30) from scikit-learn's bundled copy."""
    try:
        from sklearn.datasets import load_breast_cancer
    except ImportError as exc:  # pragma: no cover
        raise RuntimeError("wdbc requires scikit-learn") from exc
    raw = load_breast_cancer()
    return Dataset.from_arrays(
        "wdbc",
        raw.data,
        raw.target,
        feature_names=tuple(raw.feature_names),
        label_names=("malignant", "benign"),
    )


def synthetic_suite(n: int = 800, seed: int = 42) -> list[Dataset]:
    """One dataset per synthetic geometry at default noise."""
    return [gen_synthetic(kind, n=n, seed=seed) for kind in SYNTHETIC_KINDS]


def available_builtin() -> tuple[str, ...]:
    names = ["tic-tac-toe"]
    try:
        import sklearn  # noqa: F401

        names.append("wdbc")
    except ImportError:  # pragma: no cover
        pass
    names.extend(f"synth-{kind}" for kind in SYNTHETIC_KINDS)
    return tuple(names)


def resolve(name: str, data_dir=None, label_column: str | int = "label") -> Dataset | None:
    """Materialize a dataset by name: built-in sources first, then
    ``<data_dir>/<name>.csv``.  Returns None when unavailable."""
    if name == "tic-tac-toe":
        return tictactoe_endgame()
    if name == "wdbc":
        try:
            return wdbc()
        except RuntimeError:
            pass
    if name.startswith("synth-"):
        kind = name.removeprefix("synth-")
        if kind in SYNTHETIC_KINDS:
            return gen_synthetic(kind, n=800, seed=42)
    if data_dir is not None:
        path = Path(data_dir) / f"{name}.csv"
        if path.exists():
            return load_csv(path, label_column, name=name)
    return None
