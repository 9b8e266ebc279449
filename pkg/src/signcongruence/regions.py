"""Rejection regions and their analytic rejection probabilities.

All predicates operate on standardized statistics ``t_j = mu_hat_j / sigma_j``
and accept scalars or numpy arrays. Decision thresholds are inclusive
(``min(|t1|, |t2|) >= c``); the probability functions integrate over the open
region, which differs only on a null set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .normal_math import Covariance2, bvn_upper_orthant, std_normal_quantile

__all__ = [
    "StandardizedPoint",
    "QuantileBins",
    "recommended_region_contains",
    "recommended_reject_prob",
    "bmw_region_contains",
    "heuristic_pvalue",
    "fractal_region_contains",
]


@dataclass(frozen=True)
class StandardizedPoint:
    t1: float
    t2: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.t1) and math.isfinite(self.t2)):
            raise ValueError("standardized statistics must be finite")

    def __iter__(self):
        yield self.t1
        yield self.t2


@dataclass(frozen=True)
class QuantileBins:
    """Standard normal quantile bins of probability width ``alpha`` on ``[0, inf)``.

    The cut points are ``Phi^-1(0.5), Phi^-1(0.5 + alpha), ..., Phi^-1(1 - alpha)``;
    the last bin is unbounded. Requires ``0.5 / alpha`` to be an integer.
    """

    alpha: float = 0.05
    cut_points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        a = float(self.alpha)
        if not 0.0 < a < 0.5:
            raise ValueError(f"alpha must lie in (0, 0.5), got {a!r}")
        n_bins = 0.5 / a
        if abs(n_bins - round(n_bins)) > 1e-9:
            raise ValueError(
                f"quantile bins need 0.5/alpha to be an integer (got alpha={a}); "
                "the construction relies on alpha evenly dividing one half"
            )
        n_bins = int(round(n_bins))
        cuts = np.array([0.0] + [std_normal_quantile(0.5 + i * a) for i in range(1, n_bins)])
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "cut_points", cuts)

    @property
    def n_bins(self) -> int:
        return len(self.cut_points)

    def bin_index(self, x):
        """Index of the bin holding ``|x|``; bins are closed on the left."""
        return np.searchsorted(self.cut_points, np.abs(x), side="right") - 1


def _unpack(p):
    if isinstance(p, StandardizedPoint):
        return p.t1, p.t2
    t1, t2 = p
    return np.asarray(t1, dtype=float), np.asarray(t2, dtype=float)


def _as_result(x):
    return bool(x) if np.ndim(x) == 0 else x


def recommended_region_contains(p, c: float):
    """Signs disagree and ``min(|t1|, |t2|) >= c``."""
    if not c > 0:
        raise ValueError("critical value must be positive")
    t1, t2 = _unpack(p)
    inside = (np.multiply(t1, t2) < 0) & (np.minimum(np.abs(t1), np.abs(t2)) >= c)
    return _as_result(inside)


def bmw_region_contains(p, alpha: float):
    """Bonferroni version: threshold is the two-sided quantile ``Phi^-1(1 - alpha/2)``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return recommended_region_contains(p, std_normal_quantile(1.0 - alpha / 2.0))


def recommended_reject_prob(mu1, mu2, cov: Covariance2, c: float):
    """Probability that the recommended region with threshold ``c`` is hit.

    ``mu1``/``mu2`` are raw means; they are standardized by ``cov``. The two
    components are the south-east and north-west corners of the region.
    """
    if not c > 0:
        raise ValueError("critical value must be positive")
    m1 = np.asarray(mu1, dtype=float) / cov.sigma1
    m2 = np.asarray(mu2, dtype=float) / cov.sigma2
    # P(T1 > c, T2 < -c) and P(T1 < -c, T2 > c); reflecting T2 flips rho
    se = bvn_upper_orthant(c - m1, c + m2, -cov.rho)
    nw = bvn_upper_orthant(c + m1, c - m2, -cov.rho)
    return se + nw


def heuristic_pvalue(m, rho: float):
    """Bootstrap probability of a positive product, centred at ``m``.

    This is the perfect-bootstrap version of the percentile rule: the
    resampling law is taken to be N(m, [[1, rho], [rho, 1]]).
    """
    t1, t2 = _unpack(m)
    pos = bvn_upper_orthant(-t1, -t2, rho)
    neg = bvn_upper_orthant(t1, t2, rho)
    return pos + neg


def heuristic_pvalue_mc(m, rho: float, resamples: int, seed: int) -> float:
    """Monte Carlo version of :func:`heuristic_pvalue` with ``resamples`` draws."""
    from .normal_math import sample_bvn

    t1, t2 = _unpack(m)
    draws = sample_bvn((float(t1), float(t2)), Covariance2(1.0, 1.0, rho), resamples, seed)
    return float(np.mean(draws[:, 0] * draws[:, 1] > 0))


def fractal_region_contains(p, bins: QuantileBins):
    """Signs disagree and ``|t1|``, ``|t2|`` fall in the same quantile bin."""
    t1, t2 = _unpack(p)
    same = bins.bin_index(t1) == bins.bin_index(t2)
    return _as_result((np.multiply(t1, t2) < 0) & same)
