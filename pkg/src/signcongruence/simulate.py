"""Monte Carlo size/power estimates and region audits.

Random draws are produced in fixed-size chunks; chunk ``i`` of a run seeded
with ``seed`` always uses the stream ``SeedSequence(seed, spawn_key=(i,))``,
so results do not depend on the number of worker threads.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .calibration import CalibrationConfig, boundary_sup_rejection, critical_value
from .normal_math import Covariance2, derive_rng, std_normal_quantile
from .regions import QuantileBins, fractal_region_contains, heuristic_pvalue, recommended_reject_prob

__all__ = [
    "SimScenario",
    "RateEstimate",
    "SIM_TESTS",
    "reject_mask",
    "mc_rejection_rate",
    "run_scenario",
    "load_scenario",
    "verify_containment",
    "heuristic_size_extremes",
    "monotonic_region_audit",
    "slice_monotonicity_audit",
    "delta_demo",
    "feasible_size_sweep",
    "REPORT_COLUMNS",
]

SIM_TESTS = ("recommended", "bmw", "heuristic", "fractal")
REPORT_COLUMNS = ("mu1", "mu2", "rho", "test", "rate", "se", "reps", "seed")
CHUNK = 1 << 17


@dataclass(frozen=True)
class RateEstimate:
    rate: float
    std_error: float
    reps: int

    @classmethod
    def from_count(cls, hits: int, reps: int) -> "RateEstimate":
        rate = hits / reps
        return cls(rate, math.sqrt(rate * (1.0 - rate) / reps), reps)

    def within(self, target: float, k: float) -> bool:
        return abs(self.rate - target) <= k * self.std_error


@dataclass(frozen=True)
class SimScenario:
    test_id: str
    mu_grid: tuple = ((0.0, 0.0),)
    cov: Covariance2 = field(default_factory=Covariance2)
    alpha: float = 0.05
    reps: int = 100_000
    seed: int = 0
    n_schedule: tuple | None = None

    def __post_init__(self) -> None:
        if self.test_id not in SIM_TESTS:
            raise ValueError(f"unknown test_id {self.test_id!r}; choose from {', '.join(SIM_TESTS)}")
        if int(self.reps) < 1:
            raise ValueError("reps must be positive")
        object.__setattr__(self, "mu_grid", tuple((float(a), float(b)) for a, b in self.mu_grid))


def load_scenario(path) -> SimScenario:
    """Scenario from a JSON (or, where supported, TOML) file."""
    path = Path(path)
    if path.suffix == ".toml":
        import tomllib  # Python >= 3.11

        data = tomllib.loads(path.read_text())
    else:
        data = json.loads(path.read_text())
    cov = Covariance2(data.pop("sigma1", 1.0), data.pop("sigma2", 1.0), data.pop("rho", 0.0))
    grid = data.pop("mu_grid")
    sched = data.pop("n_schedule", None)
    return SimScenario(cov=cov, mu_grid=tuple(map(tuple, grid)),
                       n_schedule=tuple(sched) if sched else None, **data)


def reject_mask(test_id: str, t1: np.ndarray, t2: np.ndarray, rho: float, alpha: float,
                config: CalibrationConfig | None = None) -> np.ndarray:
    """Vectorised decisions of a known-scale test on standardized statistics."""
    disagree = t1 * t2 < 0
    m = np.minimum(np.abs(t1), np.abs(t2))
    if test_id == "recommended":
        return disagree & (m >= critical_value(alpha, rho, config).c)
    if test_id == "bmw":
        return disagree & (m >= std_normal_quantile(1.0 - alpha / 2.0))
    if test_id == "heuristic":
        return heuristic_pvalue((t1, t2), rho) < alpha
    if test_id == "fractal":
        if rho != 0.0:
            raise ValueError("the fractal test is only defined for rho = 0")
        return fractal_region_contains((t1, t2), QuantileBins(alpha))
    raise ValueError(f"unknown test_id {test_id!r}")


def _chunks(reps: int, chunk: int):
    return [(i, min(chunk, reps - start)) for i, start in enumerate(range(0, reps, chunk))]


def _count_hits(fn, reps: int, workers: int, chunk: int = CHUNK) -> int:
    jobs = _chunks(reps, chunk)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return int(sum(pool.map(lambda job: fn(*job), jobs)))
    return int(sum(fn(*job) for job in jobs))


def mc_rejection_rate(scenario: SimScenario, point, workers: int = 1,
                      config: CalibrationConfig | None = None) -> RateEstimate:
    """Empirical rejection frequency at the true mean ``point``."""
    cov = scenario.cov
    m1, m2 = point[0] / cov.sigma1, point[1] / cov.sigma2
    r = cov.rho
    s = math.sqrt(max(0.0, 1.0 - r * r))
    if scenario.test_id == "recommended":
        critical_value(scenario.alpha, r, config)  # warm the cache before threads start

    def run(i: int, size: int) -> int:
        z = derive_rng(scenario.seed, i).standard_normal((size, 2))
        t1 = m1 + z[:, 0]
        t2 = m2 + r * z[:, 0] + s * z[:, 1]
        return int(np.count_nonzero(reject_mask(scenario.test_id, t1, t2, r, scenario.alpha, config)))

    return RateEstimate.from_count(_count_hits(run, int(scenario.reps), workers), int(scenario.reps))


def run_scenario(scenario: SimScenario, workers: int = 1, with_analytic: bool = True) -> list[dict]:
    """One report row per grid point; adds the analytic rate for the recommended test."""
    rows = []
    c = None
    if with_analytic and scenario.test_id == "recommended":
        c = critical_value(scenario.alpha, scenario.cov.rho).c
    for point in scenario.mu_grid:
        est = mc_rejection_rate(scenario, point, workers)
        row = {"mu1": point[0], "mu2": point[1], "rho": scenario.cov.rho, "test": scenario.test_id,
               "rate": est.rate, "se": est.std_error, "reps": est.reps, "seed": scenario.seed}
        if c is not None:
            row["analytic"] = float(recommended_reject_prob(point[0], point[1], scenario.cov, c))
        rows.append(row)
    return rows


def verify_containment(count: int = 10_000, seed: int = 0, alpha: float = 0.05, extent: float = 5.0) -> dict:
    """Check BMW-reject => heuristic-reject => recommended-reject at rho = 0.

    Points are a scrambled Halton sequence on ``[-extent, extent]^2``.
    """
    pts = stats.qmc.Halton(d=2, scramble=True, seed=seed).random(count)
    pts = (2.0 * pts - 1.0) * extent
    t1, t2 = pts[:, 0], pts[:, 1]
    bmw = reject_mask("bmw", t1, t2, 0.0, alpha)
    heur = reject_mask("heuristic", t1, t2, 0.0, alpha)
    rec = reject_mask("recommended", t1, t2, 0.0, alpha)
    bad = (bmw & ~heur) | (heur & ~rec)
    return {
        "count": count,
        "seed": seed,
        "alpha": alpha,
        "bmw_rejections": int(bmw.sum()),
        "heuristic_rejections": int(heur.sum()),
        "recommended_rejections": int(rec.sum()),
        "violations": int(bad.sum()),
        "witnesses": [tuple(p) for p in pts[bad][:10].tolist()],
    }


def heuristic_size_extremes(rho_values=(-0.99, 0.0, 0.99), reps: int = 100_000, seed: int = 0,
                            alpha: float = 0.05, workers: int = 1) -> list[dict]:
    """Rejection rate of the heuristic bootstrap test at the origin for each rho."""
    out = []
    for rho in rho_values:
        sc = SimScenario("heuristic", ((0.0, 0.0),), Covariance2(1.0, 1.0, rho), alpha, reps, seed)
        est = mc_rejection_rate(sc, (0.0, 0.0), workers)
        out.append({"rho": float(rho), "rate": est.rate, "se": est.std_error, "reps": reps, "seed": seed})
    return out


def monotonic_region_audit(test_id: str, grid_step: float = 0.01, extent: float = 5.0,
                           alpha: float = 0.05, rho: float = 0.0, max_witnesses: int = 10) -> dict:
    """Scan a grid for rejected points that a one-step move away from zero un-rejects.

    One-step checks suffice: any sign-preserving increase of absolute values
    on the grid is a chain of such steps.
    """
    k = int(round(extent / grid_step))
    axis = np.arange(-k, k + 1) * grid_step
    T1, T2 = np.meshgrid(axis, axis, indexing="ij")
    R = reject_mask(test_id, T1, T2, rho, alpha)

    viol = np.zeros_like(R)
    witnesses = []
    # index k is zero; moving outward means i+1 for positive, i-1 for negative
    for ax in (0, 1):
        pos = np.zeros_like(R)
        neg = np.zeros_like(R)
        sl_pos = [slice(None), slice(None)]
        sl_pos_next = [slice(None), slice(None)]
        sl_pos[ax], sl_pos_next[ax] = slice(k + 1, 2 * k), slice(k + 2, 2 * k + 1)
        pos[tuple(sl_pos)] = R[tuple(sl_pos)] & ~R[tuple(sl_pos_next)]
        sl_neg = [slice(None), slice(None)]
        sl_neg_next = [slice(None), slice(None)]
        sl_neg[ax], sl_neg_next[ax] = slice(1, k), slice(0, k - 1)
        neg[tuple(sl_neg)] = R[tuple(sl_neg)] & ~R[tuple(sl_neg_next)]
        for mask, step in ((pos, 1), (neg, -1)):
            viol |= mask
            for i, j in np.argwhere(mask)[: max_witnesses - len(witnesses)]:
                src = (float(axis[i]), float(axis[j]))
                dst = (float(axis[i + step]), float(axis[j])) if ax == 0 else (float(axis[i]), float(axis[j + step]))
                witnesses.append({"inside": src, "outside": dst})
    return {
        "test": test_id,
        "grid_step": grid_step,
        "extent": extent,
        "rejected_points": int(R.sum()),
        "violations": int(viol.sum()),
        "witnesses": witnesses,
    }


def slice_monotonicity_audit(lambdas=(0.0, 0.5, 1.0, 2.0), rhos=(-0.9, 0.0, 0.5), alpha: float = 0.05,
                 a_step: float = 0.05, a_max: float = 6.0, config: CalibrationConfig | None = None) -> dict:
    """Largest increase of the analytic rejection probability along fixed-lambda slices.

    With ``mu = (a - lambda, a + lambda)``, the probability should not grow
    as ``|a|`` grows.
    """
    a = np.arange(0, int(round(a_max / a_step)) + 1) * a_step
    worst = -math.inf
    where = None
    for rho in rhos:
        cov = Covariance2(1.0, 1.0, rho)
        c = critical_value(alpha, rho, config).c
        for lam in lambdas:
            for sign in (1.0, -1.0):
                aa = sign * a
                p = recommended_reject_prob(aa - lam, aa + lam, cov, c)
                inc = np.diff(p)
                i = int(np.argmax(inc))
                if inc[i] > worst:
                    worst, where = float(inc[i]), {"rho": rho, "lambda": lam, "a": float(aa[i + 1])}
    return {"max_increase": worst, "at": where}


def delta_demo(mu=(2.0, 0.5), cov: Covariance2 | None = None, reps: int = 1_000_000,
               bins: int = 100, seed: int = 0) -> dict:
    """Simulated law of ``mu1_hat * mu2_hat`` against its delta-method normal approximation.

    Returns a histogram table (bin edges, empirical density, delta-method
    density at the bin centre) and the Kolmogorov-Smirnov distance between
    the simulated products and the approximating normal.
    """
    from .normal_math import sample_bvn

    cov = cov or Covariance2(1.0, 1.0, 0.0)
    m1, m2 = float(mu[0]), float(mu[1])
    draws = sample_bvn((m1, m2), cov, reps, seed)
    prod = draws[:, 0] * draws[:, 1]
    s1, s2, r = cov.sigma1, cov.sigma2, cov.rho
    var = m2 * m2 * s1 * s1 + m1 * m1 * s2 * s2 + 2.0 * m1 * m2 * r * s1 * s2
    mean = m1 * m2
    sd = math.sqrt(var) if var > 0 else 0.0

    lo, hi = np.quantile(prod, [0.0005, 0.9995])
    dens, edges = np.histogram(prod, bins=bins, range=(lo, hi))
    dens = dens / (reps * np.diff(edges))
    centers = 0.5 * (edges[:-1] + edges[1:])
    if sd > 0:
        delta = stats.norm.pdf(centers, loc=mean, scale=sd)
        ks = float(stats.kstest(prod, stats.norm(loc=mean, scale=sd).cdf).statistic)
    else:
        delta = np.full_like(centers, np.nan)
        ks = math.nan
    rows = [
        {"bin_left": float(a), "bin_right": float(b), "empirical_density": float(e), "delta_density": float(d)}
        for a, b, e, d in zip(edges[:-1], edges[1:], dens, delta)
    ]
    return {
        "mu1": m1, "mu2": m2, "rho": r, "reps": reps, "seed": seed,
        "delta_mean": mean, "delta_sd": sd, "ks_distance": ks,
        "empirical_mean": float(prod.mean()), "empirical_median": float(np.median(prod)),
        "rows": rows,
    }


def _feasible_reject(t1, t2, rho_hat, alpha, config) -> np.ndarray:
    """Exact feasible-test decisions without calibrating every replicate.

    ``min |t| >= c(rho_hat)`` is equivalent to the boundary supremum at
    ``min |t|`` being at most ``alpha``; that supremum only needs evaluating
    for negative ``rho_hat`` and ``min |t|`` between the one- and two-sided
    quantiles.
    """
    q1 = std_normal_quantile(1.0 - alpha)
    q2 = std_normal_quantile(1.0 - alpha / 2.0)
    disagree = t1 * t2 < 0
    m = np.minimum(np.abs(t1), np.abs(t2))
    out = disagree & (m >= q1) & ((rho_hat >= 0) | (m >= q2))
    hard = np.flatnonzero(disagree & (rho_hat < 0) & (m >= q1) & (m < q2))
    for i in hard:
        sup, _ = boundary_sup_rejection(float(m[i]), float(rho_hat[i]), config)
        out[i] = sup <= alpha
    return out


def _plugin_draws(rng, n: int, size: int, mu, cov: Covariance2, method: str):
    """Sample means, standard deviations and correlation of ``n`` i.i.d. normal pairs."""
    L = np.linalg.cholesky(cov.matrix)
    if method == "raw":
        z = rng.standard_normal((size, n, 2)) @ L.T + np.asarray(mu)
        xbar = z.mean(axis=1)
        d = z - xbar[:, None, :]
        s11 = np.einsum("ij,ij->i", d[:, :, 0], d[:, :, 0]) / (n - 1)
        s22 = np.einsum("ij,ij->i", d[:, :, 1], d[:, :, 1]) / (n - 1)
        s12 = np.einsum("ij,ij->i", d[:, :, 0], d[:, :, 1]) / (n - 1)
    elif method == "sufficient":
        # mean ~ N(mu, S/n); (n-1) * sample cov ~ Wishart(S, n-1) via Bartlett
        xbar = np.asarray(mu) + (rng.standard_normal((size, 2)) @ L.T) / math.sqrt(n)
        a11 = np.sqrt(rng.chisquare(n - 1, size))
        a22 = np.sqrt(rng.chisquare(n - 2, size))
        a21 = rng.standard_normal(size)
        # W = (L A)(L A)^T with A lower triangular
        l11, l21, l22 = L[0, 0], L[1, 0], L[1, 1]
        b11 = l11 * a11
        b21 = l21 * a11 + l22 * a21
        b22 = l22 * a22
        s11 = b11 * b11 / (n - 1)
        s12 = b11 * b21 / (n - 1)
        s22 = (b21 * b21 + b22 * b22) / (n - 1)
    else:
        raise ValueError(f"unknown method {method!r}")
    sd1, sd2 = np.sqrt(s11), np.sqrt(s22)
    return xbar, sd1, sd2, s12 / (sd1 * sd2)


def feasible_size_sweep(n_schedule=(50, 200, 1000, 10_000), points=((0.0, 1.0), (1.0, 1.0)),
                        cov: Covariance2 | None = None, alpha: float = 0.05, reps: int = 10_000,
                        seed: int = 0, method: str = "sufficient",
                        config: CalibrationConfig | None = None) -> list[dict]:
    """Rejection rate of the feasible test for i.i.d. bivariate normal data.

    ``points`` are raw per-observation means; the t-statistics are
    ``sqrt(n) * xbar_j / s_j`` and the critical value uses the sample
    correlation. ``method="sufficient"`` draws the plug-in statistics from
    their exact joint law; ``method="raw"`` simulates the observations.
    """
    cov = cov or Covariance2()
    if min(n_schedule) < 3:
        raise ValueError("every n must be at least 3")
    chunk = 1 << 14 if method == "sufficient" else max(1, (1 << 20) // max(n_schedule))
    rows = []
    for pi, point in enumerate(points):
        for ni, n in enumerate(n_schedule):
            def run(i: int, size: int, n=n, point=point, stream=(pi, ni)) -> int:
                rng = derive_rng(seed, *stream, i)
                xbar, sd1, sd2, rho_hat = _plugin_draws(rng, n, size, point, cov, method)
                t1 = math.sqrt(n) * xbar[:, 0] / sd1
                t2 = math.sqrt(n) * xbar[:, 1] / sd2
                return int(np.count_nonzero(_feasible_reject(t1, t2, rho_hat, alpha, config)))

            est = RateEstimate.from_count(_count_hits(run, reps, 1, chunk), reps)
            rows.append({"mu1": point[0], "mu2": point[1], "rho": cov.rho, "n": n, "test": "feasible",
                         "rate": est.rate, "se": est.std_error, "reps": reps, "seed": seed})
    return rows
