"""Acceptance checks, one or more tests per numbered criterion.

Run alone with ``pytest tests/test_acceptance.py -v``; the terminal summary
prints a PASS/FAIL line for each criterion.
"""

import csv
import io
import itertools
import os
import time

import numpy as np
import pytest

from signcongruence.calibration import critical_value
from signcongruence.cli import run
from signcongruence.cones import Cone2, cone_test
from signcongruence.normal_math import Covariance2, std_normal_quantile
from signcongruence.procedures import (
    EstimatePair,
    NullDirection,
    bmw_test,
    heuristic_bootstrap_test,
    recommended_test,
)
from signcongruence.regions import heuristic_pvalue, recommended_reject_prob
from signcongruence.simulate import (
    SimScenario,
    feasible_size_sweep,
    heuristic_size_extremes,
    slice_monotonicity_audit,
    mc_rejection_rate,
    monotonic_region_audit,
    verify_containment,
)

WORKERS = min(8, os.cpu_count() or 1)
MC_REPS = 1_000_000

# published critical values: rho -> (alpha = .1, .05, .01)
PUBLISHED = {
    -1.00: (1.64485363, 1.95996398, 2.57582930),
    -0.95: (1.50530474, 1.81773816, 2.42829856),
    -0.90: (1.43932899, 1.74893328, 2.35384002),
    -0.85: (1.38524452, 1.69190984, 2.32671651),
    -0.80: (1.33720245, 1.64878158, 2.32634836),
    -0.75: (1.29315300, 1.64488267, 2.32634787),
    -0.70: (1.28170171, 1.64485364, 2.32634787),
    -0.65: (1.28155170, 1.64485363, 2.32634787),
    -0.60: (1.28155157, 1.64485363, 2.32634787),
    -0.55: (1.28155157, 1.64485363, 2.32634787),
    0.00: (1.28155157, 1.64485363, 2.32634787),
}
ALPHAS = (0.1, 0.05, 0.01)


def rate(test_id, point, rho, reps=MC_REPS, seed=0, alpha=0.05):
    sc = SimScenario(test_id, (point,), Covariance2(1.0, 1.0, rho), alpha, reps, seed)
    return mc_rejection_rate(sc, point, WORKERS)


def std_pair(t1, t2, rho=0.0):
    return EstimatePair(t1, t2, Covariance2(1.0, 1.0, rho))


@pytest.fixture(scope="module")
def table_rows(capsys_module):
    start = time.perf_counter()
    code = run(["table", "--alphas=" + ",".join(map(str, ALPHAS)),
                "--rhos=" + ",".join(map(str, PUBLISHED)), "--workers", str(WORKERS)])
    elapsed = time.perf_counter() - start
    out = capsys_module()
    assert code == 0
    return list(csv.DictReader(io.StringIO(out))), elapsed


@pytest.fixture(scope="module")
def capsys_module():
    """Module-scoped stdout capture for the CLI call."""
    import contextlib

    buf = io.StringIO()
    stack = contextlib.ExitStack()
    stack.enter_context(contextlib.redirect_stdout(buf))

    def read():
        stack.close()
        return buf.getvalue()

    yield read
    stack.close()


@pytest.mark.criterion(1, "critical-value table matches published values")
class TestCriterion01:
    def test_every_entry(self, table_rows, record_property):
        rows, elapsed = table_rows
        worst = 0.0
        for row in rows:
            expected = PUBLISHED[float(row["rho"])][ALPHAS.index(float(row["alpha"]))]
            worst = max(worst, abs(float(row["c"]) - expected))
        record_property("measured", f"max |c - published| = {worst:.2e}, runtime {elapsed:.1f}s")
        assert len(rows) == 33
        assert worst <= 1e-6
        assert elapsed < 600

    def test_one_sided_rows_and_two_sided_limit(self, table_rows):
        rows, _ = table_rows
        for row in rows:
            rho, alpha, c = float(row["rho"]), float(row["alpha"]), float(row["c"])
            if rho >= -0.55:
                assert abs(c - std_normal_quantile(1 - alpha)) <= 1e-8
            if rho == -1.0:
                assert abs(c - std_normal_quantile(1 - alpha / 2)) <= 1e-6


@pytest.mark.criterion(2, "published values exact to the displayed digits above rho = -0.8")
class TestCriterion02:
    @pytest.mark.parametrize("rho", [-0.79, -0.75, -0.7, -0.5])
    def test_rounding(self, rho, record_property):
        c05, c01 = critical_value(0.05, rho).c, critical_value(0.01, rho).c
        record_property("measured", f"rho={rho}: {c05:.6f} / {c01:.6f}")
        assert f"{c05:.3f}" == "1.645"
        assert f"{c01:.3f}" == "2.326"

    def test_rho_minus_point_nine(self, record_property):
        c = critical_value(0.05, -0.9).c
        record_property("measured", f"c_.05(-0.9) = {c:.10f}")
        assert abs(c - 1.74893328) <= 1e-6


GRID_25 = list(itertools.product((-2.0, -0.5, 0.0, 1.0, 2.5), (-1.5, 0.0, 0.5, 1.8, 3.0)))


@pytest.mark.criterion(3, "Monte Carlo and analytic rejection probabilities agree")
class TestCriterion03:
    @pytest.mark.parametrize("rho", [-0.9, 0.0, 0.5])
    def test_grid(self, rho, record_property):
        c = critical_value(0.05, rho).c
        worst = 0.0
        for k, point in enumerate(GRID_25):
            est = rate("recommended", point, rho, seed=100 + k)
            p = float(recommended_reject_prob(point[0], point[1], Covariance2(1, 1, rho), c))
            se = np.sqrt(max(p * (1 - p), 1e-12) / MC_REPS)
            z = abs(est.rate - p) / se
            worst = max(worst, z)
            assert z <= 4, (point, est.rate, p)
        record_property("measured", f"rho={rho}: max |z| = {worst:.2f}")


@pytest.mark.criterion(4, "size control along the null boundary")
class TestCriterion04:
    @pytest.mark.parametrize("rho", [-0.9, 0.0, 0.5])
    def test_never_above_alpha(self, rho, record_property):
        worst = -np.inf
        for k, mu2 in enumerate((0.0, 0.5, 1.0, 2.0, 5.0, 20.0)):
            est = rate("recommended", (0.0, mu2), rho, seed=200 + k)
            worst = max(worst, (est.rate - 0.05) / est.std_error)
            assert est.rate <= 0.05 + 3 * est.std_error, (mu2, est.rate)
        record_property("measured", f"rho={rho}: max (rate - .05)/se = {worst:.2f}")

    @pytest.mark.parametrize("rho", [-0.9, 0.0, 0.5])
    def test_exact_far_out(self, rho, record_property):
        est = rate("recommended", (0.0, 20.0), rho, seed=205)
        record_property("measured", f"rho={rho}: rate at (0,20) {est.rate:.4f}")
        assert est.within(0.05, 3)


@pytest.mark.criterion(5, "power at the origin equals 2 alpha^2")
def test_criterion_05_origin(record_property):
    est = rate("recommended", (0.0, 0.0), 0.0, seed=300)
    record_property("measured", f"rate {est.rate:.5f} (se {est.std_error:.5f})")
    assert est.within(0.005, 3)
    c = std_normal_quantile(0.95)
    assert recommended_reject_prob(0.0, 0.0, Covariance2(), c) == pytest.approx(2 * 0.05**2, abs=1e-15)


@pytest.mark.criterion(6, "BMW within heuristic within recommended; heuristic p at the BMW corner")
class TestCriterion06:
    def test_containment(self, record_property):
        rep = verify_containment(10_000, seed=6)
        record_property("measured", f"violations {rep['violations']}")
        assert rep["violations"] == 0

    def test_heuristic_corner_value(self, record_property):
        q = std_normal_quantile(0.975)
        p = float(heuristic_pvalue((q, -q), 0.0))
        record_property("measured", f"heuristic p at corner = {p:.9f} (target 0.049375)")
        assert abs(p - 0.049375) <= 1e-9


@pytest.mark.criterion(7, "fractal test is similar on the boundary and unbiased off it")
class TestCriterion07:
    @pytest.mark.parametrize("point", [(0.0, 0.0), (0.0, 1.0), (0.0, 3.0), (2.0, 0.0)])
    def test_similar(self, point, record_property):
        est = rate("fractal", point, 0.0, seed=400)
        record_property("measured", f"{point}: {est.rate:.4f}")
        assert est.within(0.05, 3)

    def test_unbiased_and_conservative_inside(self, record_property):
        alt = rate("fractal", (0.5, -0.5), 0.0, seed=401)
        inner = rate("fractal", (1.0, 1.0), 0.0, seed=402)
        record_property("measured", f"(0.5,-0.5): {alt.rate:.4f}, (1,1): {inner.rate:.4f}")
        assert alt.rate > 0.05 + 3 * alt.std_error
        assert inner.rate < 0.05 - 3 * inner.std_error


@pytest.mark.criterion(8, "heuristic test size at the origin for extreme correlations")
class TestCriterion08:
    def test_strong_negative(self, record_property):
        row = heuristic_size_extremes((-0.99,), reps=MC_REPS, seed=8, workers=WORKERS)[0]
        record_property("measured", f"rho=-0.99 rate {row['rate']:.4f} (target > 0.9)")
        assert row["rate"] > 0.9

    def test_strong_positive(self, record_property):
        row = heuristic_size_extremes((0.99,), reps=MC_REPS, seed=8, workers=WORKERS)[0]
        record_property("measured", f"rho=0.99 rate {row['rate']:.4f}")
        assert row["rate"] < 0.01


@pytest.mark.criterion(9, "empirical p-values")
class TestCriterion09:
    def test_min_stat_example(self, record_property):
        m = std_normal_quantile(1 - 0.0215)
        # the other statistic is not reported; 3.0 is inside the range that matches
        est = std_pair(m, -3.0)
        p_rec = recommended_test(est).p_value
        p_bmw = bmw_test(est).p_value
        p_heur = heuristic_bootstrap_test(est).p_value
        record_property("measured", f"rec {p_rec:.5f}, heur {p_heur:.5f}, bmw {p_bmw:.5f}")
        assert abs(p_rec - 0.0215) <= 1e-4
        assert abs(p_bmw - 0.043) <= 1e-4
        assert abs(p_heur - 0.023) <= 5e-4
        assert p_rec < p_heur < p_bmw

    @pytest.mark.parametrize("p1, p2, expected", [(0.004, 0.030, 0.015), (0.001, 0.025, 0.0125)])
    def test_component_pvalues(self, p1, p2, expected, record_property):
        est = EstimatePair.from_two_sided_pvalues(p1, p2, +1, +1, rho=0.0)
        p = recommended_test(est, direction=NullDirection.INCONGRUENT).p_value
        record_property("measured", f"({p1}, {p2}) -> {p:.5f}")
        assert abs(p - expected) <= 5e-4


@pytest.mark.criterion(10, "cone reduction")
class TestCriterion10:
    def test_identity_cone(self):
        rng = np.random.default_rng(10)
        cone = Cone2((1.0, 0.0), (0.0, 1.0))
        rhos = rng.choice([-0.9, -0.6, 0.0, 0.5], 1000)
        dirs = [list(NullDirection)[i] for i in rng.integers(0, 2, 1000)]
        for m1, m2, r, d in zip(rng.normal(0, 2.5, 1000), rng.normal(0, 2.5, 1000), rhos, dirs):
            est = std_pair(m1, m2, float(r))
            a, b = cone_test(est, cone, direction=d), recommended_test(est, direction=d)
            assert (a.reject, a.p_value, a.critical_value) == (b.reject, b.p_value, b.critical_value)

    def test_example(self, record_property):
        out = cone_test(std_pair(1.0, 1.0), Cone2((2.0, 1.0), (1.0, 2.0)))
        record_property("measured", f"rho_nu {out.diagnostics['rho_nu']:.15f}, c {out.critical_value:.9f}")
        assert abs(out.diagnostics["rho_nu"] + 0.8) <= 1e-12
        assert abs(out.critical_value - 1.64878158) <= 1e-6


@pytest.mark.criterion(11, "monotonicity audit")
class TestCriterion11:
    @pytest.mark.parametrize("test_id, rho", [("recommended", 0.0), ("recommended", -0.9), ("bmw", 0.0)])
    def test_monotone(self, test_id, rho):
        assert monotonic_region_audit(test_id, 0.01, 5.0, rho=rho)["violations"] == 0

    def test_fractal_witness(self, record_property):
        rep = monotonic_region_audit("fractal", 0.01, 5.0)
        record_property("measured", f"fractal violations {rep['violations']}")
        assert rep["violations"] >= 1 and rep["witnesses"]


@pytest.mark.criterion(12, "rejection probability nonincreasing along fixed-lambda slices")
def test_criterion_12_slices(record_property):
    rep = slice_monotonicity_audit(lambdas=(0.0, 0.25, 0.5, 1.0, 2.0, 3.0), rhos=(-0.95, -0.9, -0.5, 0.0, 0.5, 0.9))
    record_property("measured", f"max increase {rep['max_increase']:.2e}")
    assert rep["max_increase"] <= 1e-12


@pytest.mark.criterion(13, "feasible test size across sample sizes (uniformity, property-style)")
def test_feasible_uniformity(record_property):
    rows = feasible_size_sweep((50, 200, 1000, 10_000), ((0.0, 1.0), (1.0, 1.0)),
                               Covariance2(1.0, 1.0, 0.0), reps=10_000, seed=13)
    boundary = [r for r in rows if r["mu1"] == 0.0]
    record_property("measured", ", ".join(f"n={r['n']}: {r['rate']:.4f}" for r in boundary))
    for r in rows:
        assert r["rate"] <= 0.05 + 3 * r["se"]
    big = boundary[-1]
    assert big["n"] == 10_000 and abs(big["rate"] - 0.05) <= 3 * big["se"]
