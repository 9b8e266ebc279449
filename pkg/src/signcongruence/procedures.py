"""Sign-congruence test procedures.

Each procedure takes an :class:`EstimatePair` and returns a
:class:`TestOutcome`. Two nulls are supported:

* ``CONGRUENT``   H0: mu1 * mu2 >= 0 (reject when the signs plausibly differ)
* ``INCONGRUENT`` H0: mu1 * mu2 <= 0 (reject when the signs plausibly agree)

The second is reduced to the first by negating the second estimate, which
also negates the correlation.

Conventions
-----------
Decisions use an inclusive threshold, ``min(|t1|, |t2|) >= c``. When the
estimated signs do not point away from the null (including an exact zero
estimate) the test never rejects and the p-value is 1.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

from .calibration import CalibrationConfig, critical_value, pvalue_from_min_stat
from .normal_math import Covariance2, std_normal_cdf, std_normal_quantile
from .regions import QuantileBins, fractal_region_contains, heuristic_pvalue, heuristic_pvalue_mc

__all__ = [
    "NullDirection",
    "EstimatePair",
    "TestOutcome",
    "UnsupportedConfiguration",
    "recommended_test",
    "feasible_test",
    "bmw_test",
    "heuristic_bootstrap_test",
    "fractal_test",
    "run_test",
    "TEST_NAMES",
]


class UnsupportedConfiguration(ValueError):
    """The requested procedure does not apply to these inputs."""


class NullDirection(str, enum.Enum):
    CONGRUENT = "congruent"
    INCONGRUENT = "incongruent"

    @classmethod
    def parse(cls, value) -> "NullDirection":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown null direction {value!r}; use 'congruent' or 'incongruent'") from None


@dataclass(frozen=True)
class EstimatePair:
    """Point estimates with their standard errors and correlation.

    For the feasible test, ``sigma`` values are per-observation standard
    deviations and ``n`` is the sample size, so that ``sqrt(n) * mu_hat / sigma_hat``
    is the t-statistic.
    """

    mu1_hat: float
    mu2_hat: float
    cov: Covariance2 = field(default_factory=Covariance2)
    n: int | None = None
    scales_estimated: bool = False

    def __post_init__(self) -> None:
        for name in ("mu1_hat", "mu2_hat"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if self.n is not None:
            if int(self.n) != self.n or self.n < 1:
                raise ValueError("n must be a positive integer")
            object.__setattr__(self, "n", int(self.n))
        if self.scales_estimated and self.n is None:
            raise ValueError("estimated scales require the sample size n")

    @classmethod
    def from_values(cls, mu1, mu2, sigma1=1.0, sigma2=1.0, rho=0.0, n=None) -> "EstimatePair":
        """Build from raw numbers; supplying ``n`` marks the scales as estimated."""
        return cls(mu1, mu2, Covariance2(sigma1, sigma2, rho), n, n is not None)

    @classmethod
    def from_two_sided_pvalues(cls, p1: float, p2: float, sign1: int, sign2: int, rho: float = 0.0) -> "EstimatePair":
        """Standardized pair implied by two-sided p-values and estimate signs."""
        t1 = math.copysign(std_normal_quantile(1.0 - p1 / 2.0), sign1)
        t2 = math.copysign(std_normal_quantile(1.0 - p2 / 2.0), sign2)
        return cls(t1, t2, Covariance2(1.0, 1.0, rho))

    def standardized(self) -> tuple[float, float]:
        scale = math.sqrt(self.n) if self.scales_estimated else 1.0
        return scale * self.mu1_hat / self.cov.sigma1, scale * self.mu2_hat / self.cov.sigma2

    def flipped(self) -> "EstimatePair":
        """Negate the second estimate (and with it the correlation)."""
        cov = replace(self.cov, rho=-self.cov.rho)
        return replace(self, mu2_hat=-self.mu2_hat, cov=cov)


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False  # keep pytest from collecting this class

    reject: bool
    p_value: float | None
    critical_value: float | None
    alpha: float
    test_name: str
    direction: NullDirection
    min_stat: float
    diagnostics: dict = field(default_factory=dict, compare=True)

    def as_record(self) -> dict:
        return {
            "test": self.test_name,
            "reject": self.reject,
            "p_value": self.p_value,
            "critical_value": self.critical_value,
            "alpha": self.alpha,
            "direction": self.direction.value,
            "min_stat": self.min_stat,
        }


def _prepare(est: EstimatePair, alpha: float, direction) -> tuple[EstimatePair, NullDirection, float, float, bool, float]:
    alpha = float(alpha)
    if not 0.0 < alpha < 0.5:
        raise ValueError(f"alpha must lie in (0, 0.5), got {alpha!r}")
    direction = NullDirection.parse(direction)
    work = est.flipped() if direction is NullDirection.INCONGRUENT else est
    t1, t2 = work.standardized()
    disagree = t1 * t2 < 0
    return work, direction, t1, t2, disagree, min(abs(t1), abs(t2))


def _require_known_scales(est: EstimatePair) -> None:
    if est.scales_estimated:
        raise UnsupportedConfiguration("scales are estimated; use feasible_test instead")


def _calibrated(work, direction, alpha, min_stat, disagree, name, config, diag) -> TestOutcome:
    rho = work.cov.rho
    entry = critical_value(alpha, rho, config)
    reject = bool(disagree and min_stat >= entry.c)
    p = pvalue_from_min_stat(min_stat, rho, config) if disagree else 1.0
    diag = dict(diag, rho_used=rho, boundary="reject when min_stat >= c; p-value <= alpha at equality")
    return TestOutcome(reject, p, entry.c, alpha, name, direction, min_stat, diag)


def recommended_test(est: EstimatePair, alpha: float = 0.05, direction=NullDirection.CONGRUENT,
                     config: CalibrationConfig | None = None) -> TestOutcome:
    """Reject when signs point away from the null and ``min |t_j| >= c_alpha(rho)``."""
    _require_known_scales(est)
    work, direction, _, _, disagree, min_stat = _prepare(est, alpha, direction)
    return _calibrated(work, direction, alpha, min_stat, disagree, "recommended", config, {})


def feasible_test(est: EstimatePair, alpha: float = 0.05, direction=NullDirection.CONGRUENT,
                  config: CalibrationConfig | None = None) -> TestOutcome:
    """Recommended test with estimated scales: statistic ``sqrt(n) min |mu_hat_j| / sigma_hat_j``,
    critical value calibrated at the estimated correlation."""
    if est.n is None:
        raise ValueError("feasible_test needs the sample size n")
    if not est.scales_estimated:
        est = replace(est, scales_estimated=True)
    work, direction, _, _, disagree, min_stat = _prepare(est, alpha, direction)
    return _calibrated(work, direction, alpha, min_stat, disagree, "feasible", config, {"n": est.n})


def bmw_test(est: EstimatePair, alpha: float = 0.05, direction=NullDirection.CONGRUENT) -> TestOutcome:
    """Bonferroni-adjusted test with threshold ``Phi^-1(1 - alpha/2)``."""
    _require_known_scales(est)
    _, direction, _, _, disagree, min_stat = _prepare(est, alpha, direction)
    c = std_normal_quantile(1.0 - alpha / 2.0)
    p = min(1.0, 2.0 * std_normal_cdf(-min_stat)) if disagree else 1.0
    return TestOutcome(bool(disagree and min_stat >= c), p, c, alpha, "bmw", direction, min_stat, {})


def heuristic_bootstrap_test(est: EstimatePair, alpha: float = 0.05, direction=NullDirection.CONGRUENT,
                             resamples: int | None = None, seed: int | None = None) -> TestOutcome:
    """Percentile-bootstrap rule: reject when P*(product has the null's sign) < alpha.

    Evaluated in the perfect-bootstrap limit unless ``resamples`` is given,
    in which case that many Monte Carlo draws are used (requires ``seed``).
    """
    _require_known_scales(est)
    work, direction, t1, t2, _, min_stat = _prepare(est, alpha, direction)
    rho = work.cov.rho
    diag: dict = {}
    if resamples:
        if seed is None:
            raise ValueError("Monte Carlo bootstrap needs a seed")
        p = heuristic_pvalue_mc((t1, t2), rho, int(resamples), int(seed))
        diag.update(resamples=int(resamples), seed=int(seed))
    else:
        p = float(heuristic_pvalue((t1, t2), rho))
    if rho != 0.0:
        diag["warning"] = "heuristic bootstrap test is not valid when rho != 0; size can be anywhere in (0, 1)"
    return TestOutcome(p < alpha, p, None, alpha, "heuristic", direction, min_stat, diag)


def fractal_test(est: EstimatePair, alpha: float = 0.05, direction=NullDirection.CONGRUENT) -> TestOutcome:
    """Quantile-bin test with exact size on the null boundary; decision only, no p-value."""
    _require_known_scales(est)
    work, direction, t1, t2, _, min_stat = _prepare(est, alpha, direction)
    if work.cov.rho != 0.0:
        raise UnsupportedConfiguration("the fractal test is only defined for rho = 0")
    bins = QuantileBins(alpha)
    reject = bool(fractal_region_contains((t1, t2), bins))
    diag = {"bin_t1": int(bins.bin_index(t1)), "bin_t2": int(bins.bin_index(t2)),
            "p_value": "not defined for this test"}
    return TestOutcome(reject, None, None, alpha, "fractal", direction, min_stat, diag)


TEST_NAMES = ("recommended", "feasible", "bmw", "heuristic", "fractal")


def run_test(name: str, est: EstimatePair, alpha: float = 0.05, direction=NullDirection.CONGRUENT,
             config: CalibrationConfig | None = None, **kwargs) -> TestOutcome:
    """Dispatch by test name; ``feasible`` is chosen automatically for estimated scales."""
    if name == "recommended" and est.scales_estimated:
        name = "feasible"
    if name == "recommended":
        return recommended_test(est, alpha, direction, config)
    if name == "feasible":
        return feasible_test(est, alpha, direction, config)
    if name == "bmw":
        return bmw_test(est, alpha, direction)
    if name == "heuristic":
        return heuristic_bootstrap_test(est, alpha, direction, **kwargs)
    if name == "fractal":
        return fractal_test(est, alpha, direction)
    raise ValueError(f"unknown test {name!r}; choose from {', '.join(TEST_NAMES)}")

