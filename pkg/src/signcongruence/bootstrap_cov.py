"""Correlation between two estimators from bootstrap replicate pairs.

Replicates are centred, the ``ceil(trim_frac * B)`` pairs with the largest
Euclidean norm are set to zero (or dropped, optionally), and the Pearson
correlation of the result is reported.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "ReplicateSet",
    "ReplicateParseError",
    "UndefinedCorrelation",
    "trimmed_bootstrap_correlation",
    "load_replicates",
]

MIN_REPLICATES = 10


class ReplicateParseError(ValueError):
    pass


class UndefinedCorrelation(ValueError):
    pass


@dataclass(frozen=True)
class ReplicateSet:
    pairs: np.ndarray
    trim_frac: float = 0.01

    def __post_init__(self) -> None:
        pairs = np.asarray(self.pairs, dtype=float)
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise ValueError("replicates must be an array of pairs")
        if len(pairs) < MIN_REPLICATES:
            raise ValueError(f"need at least {MIN_REPLICATES} replicates, got {len(pairs)}")
        if not np.all(np.isfinite(pairs)):
            raise ValueError("replicates must be finite")
        if not 0.0 <= self.trim_frac < 0.5:
            raise ValueError("trim_frac must lie in [0, 0.5)")
        object.__setattr__(self, "pairs", pairs)

    @property
    def B(self) -> int:
        return len(self.pairs)

    def n_trimmed(self) -> int:
        # guard against 0.07 * 100 == 7.000000000000001
        return int(math.ceil(self.trim_frac * self.B - 1e-9))


def trimmed_bootstrap_correlation(reps: ReplicateSet, center=None, drop: bool = False) -> float:
    """Pearson correlation after trimming the largest-norm replicates.

    Parameters
    ----------
    center : pair of float, optional
        Point to centre at (typically the full-sample estimate). Defaults to
        the replicate mean.
    drop : bool
        Remove trimmed pairs instead of setting them to zero.
    """
    x = reps.pairs
    c = x.mean(axis=0) if center is None else np.asarray(center, dtype=float)
    dev = x - c
    k = reps.n_trimmed()
    if k:
        norms = np.hypot(dev[:, 0], dev[:, 1])
        # stable sort keeps input order among ties
        order = np.argsort(-norms, kind="stable")[:k]
        if drop:
            dev = np.delete(dev, order, axis=0)
        else:
            dev = dev.copy()
            dev[order] = 0.0
    d = dev - dev.mean(axis=0)
    sxx, syy = float(d[:, 0] @ d[:, 0]), float(d[:, 1] @ d[:, 1])
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelation("a coordinate has zero variance after trimming")
    r = float(d[:, 0] @ d[:, 1]) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def _parse_float(cell: str, line: int) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise ReplicateParseError(f"line {line}: non-numeric value {cell.strip()!r}") from None
    if not math.isfinite(v):
        raise ReplicateParseError(f"line {line}: non-finite value {cell.strip()!r}")
    return v


def load_replicates(path, fmt: str | None = None, trim_frac: float = 0.01) -> ReplicateSet:
    """Read replicate pairs from a two-column CSV (header optional) or a JSON array of pairs."""
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".") or "csv").lower()
    rows: list[tuple[float, float]] = []
    if fmt == "json":
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ReplicateParseError(f"line {exc.lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(data, list):
            raise ReplicateParseError("JSON replicates must be an array of [r1, r2] pairs")
        for i, item in enumerate(data):
            if not (isinstance(item, (list, tuple)) and len(item) == 2):
                raise ReplicateParseError(f"entry {i}: expected a pair, got {item!r}")
            try:
                rows.append((float(item[0]), float(item[1])))
            except (TypeError, ValueError):
                raise ReplicateParseError(f"entry {i}: non-numeric pair {item!r}") from None
    elif fmt == "csv":
        with path.open(newline="") as fh:
            for line, cells in enumerate(csv.reader(fh), start=1):
                if not cells or all(not c.strip() for c in cells):
                    continue
                if len(cells) != 2:
                    raise ReplicateParseError(f"line {line}: expected 2 columns, got {len(cells)}")
                if line == 1 and not rows:
                    try:
                        float(cells[0]), float(cells[1])
                    except ValueError:
                        continue  # header row
                rows.append((_parse_float(cells[0], line), _parse_float(cells[1], line)))
    else:
        raise ValueError(f"unknown replicate format {fmt!r}; use csv or json")
    if len(rows) < MIN_REPLICATES:
        raise ReplicateParseError(f"need at least {MIN_REPLICATES} replicates, found {len(rows)}")
    return ReplicateSet(np.array(rows), trim_frac)
