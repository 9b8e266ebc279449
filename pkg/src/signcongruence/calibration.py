"""Critical values for the recommended test under negative correlation.

The critical value ``c`` at level ``alpha`` solves

    sup_{mu2 >= 0} P(X1 * (mu2 + X2) < 0, min(|X1|, |mu2 + X2|) > c) = alpha

with ``(X1, X2)`` standard bivariate normal with correlation ``rho``. The
supremum is taken over a regular ``mu2`` grid and augmented with the
``mu2 -> inf`` limit ``1 - Phi(c)``; ``c`` is then found by bisection between
the one-sided and two-sided normal quantiles.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from .normal_math import Correlation, bvn_upper_orthant, std_normal_cdf, std_normal_quantile

__all__ = [
    "CalibrationConfig",
    "CriticalValueEntry",
    "CalibrationError",
    "boundary_sup_rejection",
    "critical_value",
    "emit_critical_table",
    "pvalue_from_min_stat",
    "table_to_csv",
    "table_to_json",
    "TABLE_COLUMNS",
]

TABLE_COLUMNS = ("alpha", "rho", "c", "argmax_mu2", "achieved_size", "one_sided_flag")

# cells within this distance of the one-sided quantile are flagged
ONE_SIDED_TOL = 1e-15
# slack for rounding in the bracket check; sup at the lower end equals alpha
_BRACKET_SLACK = 1e-12


class CalibrationError(RuntimeError):
    """Bisection could not be set up or did not converge."""

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        extra = ", ".join(f"{k}={v!r}" for k, v in self.diagnostics.items())
        return f"{base} ({extra})"


@dataclass(frozen=True)
class CalibrationConfig:
    grid_step: float = 0.001
    grid_max: float = 20.0
    extended_grid_max: float = 30.0
    bisection_steps: int = 60
    bracket_low: float | None = None
    bracket_high: float | None = None

    def __post_init__(self) -> None:
        if not self.grid_step > 0:
            raise ValueError("grid_step must be positive")
        if self.grid_max < 10:
            raise ValueError("grid_max must be at least 10")
        if self.extended_grid_max < self.grid_max:
            raise ValueError("extended_grid_max must not be below grid_max")
        if self.bisection_steps < 30:
            raise ValueError("bisection_steps must be at least 30")
        lo, hi = self.bracket_low, self.bracket_high
        if lo is not None and hi is not None and not lo < hi:
            raise ValueError("bracket_low must be below bracket_high")

    def bracket(self, alpha: float) -> tuple[float, float]:
        lo = self.bracket_low if self.bracket_low is not None else std_normal_quantile(1.0 - alpha)
        hi = self.bracket_high if self.bracket_high is not None else std_normal_quantile(1.0 - alpha / 2.0)
        if not lo < hi:
            raise ValueError("bracket_low must be below bracket_high")
        return lo, hi


@dataclass(frozen=True)
class CriticalValueEntry:
    alpha: float
    rho: float
    c: float
    argmax_mu2: float
    achieved_size: float
    one_sided_flag: bool = field(default=False)


@lru_cache(maxsize=8)
def _grid(step: float, top: float) -> np.ndarray:
    n = int(round(top / step))
    return np.arange(n + 1) * step


def _grid_sup(c: float, rho: float, grid: np.ndarray) -> tuple[float, float]:
    # mu1 = 0, unit scales; the reflected second coordinate carries -rho
    vals = bvn_upper_orthant(c, c + grid, -rho) + bvn_upper_orthant(c, c - grid, -rho)
    i = int(np.argmax(vals))
    return float(vals[i]), float(grid[i])


def boundary_sup_rejection(c: float, rho: float, config: CalibrationConfig | None = None) -> tuple[float, float]:
    """Largest rejection probability along the null boundary ``(0, mu2), mu2 >= 0``.

    Returns
    -------
    (sup, argmax) : tuple of float
        ``argmax`` is ``inf`` when the ``mu2 -> inf`` limit ``1 - Phi(c)``
        is at least as large as every grid value.
    """
    config = config or CalibrationConfig()
    rho = float(Correlation(rho))
    limit = std_normal_cdf(-c)
    best, where = _grid_sup(c, rho, _grid(config.grid_step, config.grid_max))
    if best > limit and where >= 0.95 * config.grid_max and config.extended_grid_max > config.grid_max:
        best, where = _grid_sup(c, rho, _grid(config.grid_step, config.extended_grid_max))
    if limit >= best:
        return limit, math.inf
    return best, where


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 0.5:
        raise ValueError(f"alpha must lie in (0, 0.5), got {alpha!r}")
    return alpha


def critical_value(alpha: float, rho: float, config: CalibrationConfig | None = None) -> CriticalValueEntry:
    """Calibrated critical value ``c_alpha(rho)``.

    For ``rho >= 0`` this is the one-sided quantile ``Phi^-1(1 - alpha)``.
    Otherwise the boundary supremum is bisected to ``alpha``; the upper end
    of the final bracket is returned so the achieved size never exceeds
    ``alpha`` by more than rounding.

    Raises
    ------
    CalibrationError
        If the supremum does not straddle ``alpha`` on the bracket.
    """
    return _critical_value_cached(_check_alpha(alpha), float(Correlation(rho)), config or CalibrationConfig())


@lru_cache(maxsize=4096)
def _critical_value_cached(alpha: float, rho: float, config: CalibrationConfig) -> CriticalValueEntry:
    q1 = std_normal_quantile(1.0 - alpha)
    if rho >= 0:
        return CriticalValueEntry(alpha, rho, q1, math.inf, std_normal_cdf(-q1), True)

    lo, hi = config.bracket(alpha)
    f_lo, _ = boundary_sup_rejection(lo, rho, config)
    f_hi, arg_hi = boundary_sup_rejection(hi, rho, config)
    if f_lo < alpha - _BRACKET_SLACK or f_hi > alpha + _BRACKET_SLACK:
        raise CalibrationError(
            "boundary supremum does not straddle alpha on the bracket",
            alpha=alpha, rho=rho, bracket=(lo, hi), sup_at_low=f_lo, sup_at_high=f_hi,
        )
    size, arg = f_hi, arg_hi
    for _ in range(config.bisection_steps):
        mid = 0.5 * (lo + hi)
        s, a = boundary_sup_rejection(mid, rho, config)
        if s > alpha:
            lo = mid
        else:
            hi, size, arg = mid, s, a
    if abs(size - alpha) > 1e-8:
        raise CalibrationError(
            "bisection did not reach the target size",
            alpha=alpha, rho=rho, c=hi, achieved_size=size,
        )
    return CriticalValueEntry(alpha, rho, hi, arg, size, abs(hi - q1) <= ONE_SIDED_TOL)


def pvalue_from_min_stat(min_t: float, rho: float, config: CalibrationConfig | None = None) -> float:
    """Smallest level at which ``min(|t1|, |t2|) = min_t`` is rejected.

    The caller is responsible for checking that the estimated signs disagree.
    Because the boundary supremum is strictly decreasing in the threshold,
    the p-value is that supremum evaluated at ``min_t`` itself, capped at 0.5.
    """
    min_t = float(min_t)
    if not min_t >= 0:
        raise ValueError("min_t must be nonnegative")
    rho = float(Correlation(rho))
    if min_t == 0.0:
        return 0.5
    if rho >= 0:
        return min(0.5, std_normal_cdf(-min_t))
    sup, _ = boundary_sup_rejection(min_t, rho, config)
    return min(0.5, sup)


def emit_critical_table(alphas, rhos, config: CalibrationConfig | None = None, workers: int = 1) -> list[dict]:
    """Critical values for every ``(rho, alpha)`` cell, rows ordered by rho then alpha.

    A cell that fails to calibrate carries an ``error`` entry instead of
    aborting the table.
    """
    alphas = [float(a) for a in alphas]
    rhos = [float(r) for r in rhos]
    if not alphas or not rhos:
        raise ValueError("alphas and rhos must both be nonempty")
    config = config or CalibrationConfig()
    cells = [(r, a) for r in rhos for a in alphas]

    def one(cell):
        r, a = cell
        try:
            row = asdict(critical_value(a, r, config))
            row["error"] = ""
        except (CalibrationError, ValueError) as exc:
            row = {"alpha": a, "rho": r, "c": math.nan, "argmax_mu2": math.nan,
                   "achieved_size": math.nan, "one_sided_flag": False, "error": str(exc)}
        return row

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, cells))
    return [one(cell) for cell in cells]


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return repr(x)
    return str(x)


def table_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    with_error = any(row.get("error") for row in rows)
    cols = TABLE_COLUMNS + (("error",) if with_error else ())
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in rows:
        writer.writerow([_fmt(row.get(col, "")) for col in cols])
    return buf.getvalue()


def table_to_json(rows: list[dict]) -> str:
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return _fmt(v)
        return v

    payload = [{k: clean(v) for k, v in row.items() if k != "error" or v} for row in rows]
    return json.dumps(payload, indent=2)
