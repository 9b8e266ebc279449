"""Command-line interface.

Exit status: 0 on success, 1 on usage or input errors, 2 when a numeric
calibration fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, fields
from pathlib import Path

from . import __version__
from .bootstrap_cov import ReplicateParseError, UndefinedCorrelation, load_replicates, trimmed_bootstrap_correlation
from .calibration import (
    CalibrationConfig,
    CalibrationError,
    critical_value,
    emit_critical_table,
    table_to_csv,
    table_to_json,
)
from .cones import Cone2, cone_test
from .normal_math import Covariance2
from .procedures import TEST_NAMES, EstimatePair, NullDirection, run_test
from .simulate import (
    REPORT_COLUMNS,
    SIM_TESTS,
    SimScenario,
    delta_demo,
    feasible_size_sweep,
    heuristic_size_extremes,
    slice_monotonicity_audit,
    load_scenario,
    monotonic_region_audit,
    run_scenario,
    verify_containment,
)

CONFIG_ENV = "SIGNCONGRUENCE_CONFIG"
OUTCOME_COLUMNS = ("test", "reject", "p_value", "critical_value", "alpha", "direction", "min_stat")
TABLE_ALPHAS = "0.1,0.05,0.01"
TABLE_RHOS = "-1,-0.95,-0.9,-0.85,-0.8,-0.75,-0.7,-0.65,-0.6,-0.55,0"

CONVENTIONS = """\
conventions:
  The congruent null is H0: mu1*mu2 >= 0; the incongruent null is
  H0: mu1*mu2 <= 0 and is handled by negating the second estimate and rho.
  A test rejects when min(|t1|, |t2|) >= c (inclusive boundary) and the
  estimated signs point away from the null; otherwise p = 1.
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _sig(x):
    """Probabilities and statistics printed with 10 significant digits."""
    if isinstance(x, bool) or x is None:
        return x
    if isinstance(x, float):
        if not math.isfinite(x):
            return "inf" if x == math.inf else ("-inf" if x == -math.inf else "nan")
        return float(f"{x:.10g}")
    return x


def _csv_cell(x) -> str:
    x = _sig(x)
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    return str(x)


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _rows_csv(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_csv_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def _json(obj) -> str:
    def clean(o):
        if isinstance(o, dict):
            return {k: clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        return _sig(o)

    return json.dumps(clean(obj), indent=2) + "\n"


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _mu_grid(text: str) -> list[tuple[float, float]]:
    try:
        pts = [tuple(float(v) for v in p.split(",")) for p in text.split(";") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}; use 'mu1,mu2;mu1,mu2'") from None
    if not pts or any(len(p) != 2 for p in pts):
        raise argparse.ArgumentTypeError(f"bad grid {text!r}; use 'mu1,mu2;mu1,mu2'")
    return pts


def load_config(path: str | None) -> CalibrationConfig:
    """Calibration settings from ``path``, else ``$SIGNCONGRUENCE_CONFIG``, else defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return CalibrationConfig()
    data = json.loads(Path(path).read_text())
    known = {f.name for f in fields(CalibrationConfig)}
    unknown = set(data) - known
    if unknown:
        raise UsageError(f"unknown calibration settings: {', '.join(sorted(unknown))}")
    return CalibrationConfig(**data)


def _config_from_args(args) -> CalibrationConfig:
    base = load_config(args.config)
    over = {k: getattr(args, k) for k in ("grid_step", "grid_max", "bisection_steps") if getattr(args, k) is not None}
    return CalibrationConfig(**{**asdict(base), **over}) if over else base


def _add_calibration_flags(p) -> None:
    g = p.add_argument_group("calibration")
    g.add_argument("--config", help=f"JSON file with calibration settings (default: ${CONFIG_ENV})")
    g.add_argument("--grid-step", type=float, help="mu2 grid step for the boundary supremum (default 0.001)")
    g.add_argument("--grid-max", type=float, help="upper end of the mu2 grid (default 20)")
    g.add_argument("--bisection-steps", type=int, help="bisection iterations (default 60)")


def _add_estimate_flags(p, required: bool = True) -> None:
    p.add_argument("--mu1", type=float, required=required)
    p.add_argument("--mu2", type=float, required=required)
    p.add_argument("--sigma1", type=float, default=1.0)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--n", type=int, help="sample size; marks the scales as estimated (feasible test)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--direction", choices=[d.value for d in NullDirection], default="congruent")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="signcongruence", description="Tests of sign congruence between two normal estimates.",
                     epilog=CONVENTIONS, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    fmt = argparse.RawDescriptionHelpFormatter

    p = sub.add_parser("test", help="run a test on one estimate pair or a batch file", epilog=CONVENTIONS, formatter_class=fmt)
    _add_estimate_flags(p, required=False)
    p.add_argument("--test", choices=TEST_NAMES + ("all",), default="recommended")
    p.add_argument("--input", help="batch file (CSV or JSON) with columns mu1,mu2,sigma1,sigma2,rho[,n]")
    p.add_argument("--format", choices=("json", "csv"), help="output format (default: json single, csv batch)")
    p.add_argument("--resamples", type=int, help="Monte Carlo resamples for the heuristic test")
    p.add_argument("--seed", type=int, help="seed for --resamples")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    _add_calibration_flags(p)

    p = sub.add_parser("calibrate", help="critical value for one (alpha, rho)", epilog=CONVENTIONS, formatter_class=fmt)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--out")
    _add_calibration_flags(p)

    p = sub.add_parser("table", help="critical-value table over alphas x rhos", epilog=CONVENTIONS, formatter_class=fmt)
    p.add_argument("--alphas", type=_float_list, default=_float_list(TABLE_ALPHAS))
    p.add_argument("--rhos", type=_float_list, default=_float_list(TABLE_RHOS))
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    _add_calibration_flags(p)

    p = sub.add_parser("cone-test", help="recommended test for H0: mu in C or -C", epilog=CONVENTIONS, formatter_class=fmt)
    _add_estimate_flags(p)
    p.add_argument("--cone", type=_float_list, required=True, metavar="B1X,B1Y,B2X,B2Y")
    p.add_argument("--out")
    _add_calibration_flags(p)

    p = sub.add_parser("boot-corr", help="trimmed correlation from bootstrap replicate pairs")
    p.add_argument("path")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--trim-frac", type=float, default=0.01)
    p.add_argument("--center", type=_float_list, metavar="C1,C2", help="centre (default: replicate mean)")
    p.add_argument("--drop", action="store_true", help="drop trimmed replicates instead of zeroing them")
    p.add_argument("--out")

    p = sub.add_parser("simulate", help="Monte Carlo studies and region audits", epilog=CONVENTIONS, formatter_class=fmt)
    p.add_argument("--kind", default="rate",
                   choices=("rate", "containment", "heuristic-extremes", "monotone", "slices", "feasible-sweep"))
    p.add_argument("--scenario", help="JSON scenario file (kind=rate)")
    p.add_argument("--test-id", choices=SIM_TESTS, default="recommended")
    p.add_argument("--mu-grid", type=_mu_grid, default=[(0.0, 0.0)], metavar="M1,M2;M1,M2")
    p.add_argument("--sigma1", type=float, default=1.0)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--rhos", type=_float_list, default=[-0.99, 0.0, 0.99])
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--reps", type=int, default=100_000)
    p.add_argument("--count", type=int, default=10_000, help="points for kind=containment")
    p.add_argument("--grid-step-audit", type=float, default=0.01)
    p.add_argument("--extent", type=float, default=5.0)
    p.add_argument("--n-schedule", type=_float_list, default=[50, 200, 1000, 10000])
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")

    p = sub.add_parser("delta-demo", help="product distribution versus its delta-method approximation")
    p.add_argument("--mu1", type=float, default=2.0)
    p.add_argument("--mu2", type=float, default=0.5)
    p.add_argument("--sigma1", type=float, default=1.0)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--rho", type=float, default=0.4)
    p.add_argument("--reps", type=int, default=1_000_000)
    p.add_argument("--bins", type=int, default=100)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")
    return parser


def _estimate(args) -> EstimatePair:
    if args.mu1 is None or args.mu2 is None:
        raise UsageError("--mu1 and --mu2 are required unless --input is given")
    return EstimatePair.from_values(args.mu1, args.mu2, args.sigma1, args.sigma2, args.rho, args.n)


def _tests_for(name: str, est: EstimatePair) -> list[str]:
    if name != "all":
        return [name]
    names = ["feasible"] if est.scales_estimated else ["recommended", "bmw", "heuristic"]
    if not est.scales_estimated and est.cov.rho == 0.0:
        names.append("fractal")
    return names


def _heuristic_kwargs(args) -> dict:
    if args.resamples:
        if args.seed is None:
            raise UsageError("--resamples requires --seed")
        return {"resamples": args.resamples, "seed": args.seed}
    return {}


def _record(outcome) -> dict:
    return outcome.as_record()


def cmd_test(args) -> int:
    config = _config_from_args(args)
    if args.input:
        return _batch(args, config)
    est = _estimate(args)
    outcomes = []
    for name in _tests_for(args.test, est):
        kw = _heuristic_kwargs(args) if name == "heuristic" else {}
        outcomes.append(run_test(name, est, args.alpha, args.direction, config, **kw))
    if (args.format or "json") == "csv":
        _write(_rows_csv([_record(o) for o in outcomes], OUTCOME_COLUMNS), args.out)
    else:
        recs = [dict(_record(o), diagnostics=o.diagnostics) for o in outcomes]
        _write(_json(recs[0] if len(recs) == 1 else recs), args.out)
    return 0


def _read_batch(path: str) -> list[dict]:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    if p.suffix.lower() == ".json":
        data = json.loads(text) if text.strip() else []
        if not isinstance(data, list):
            raise UsageError("JSON batch input must be an array of records")
        return data
    return list(csv.DictReader(io.StringIO(text)))


def _error_code(exc: Exception) -> str:
    msg = str(exc)
    if "correlation" in msg:
        return "invalid_correlation"
    if isinstance(exc, CalibrationError):
        return "calibration_failure"
    return "invalid_input"


def batch_test(records: list[dict], test: str, alpha: float, direction, config: CalibrationConfig,
               workers: int = 1, **kwargs) -> list[dict]:
    """One outcome row per input record, in input order; bad rows get an ``error`` code."""

    def one(rec):
        rows = []
        try:
            def num(key, default=None):
                v = rec.get(key, default)
                if v is None or (isinstance(v, str) and not v.strip()):
                    if default is None:
                        raise ValueError(f"missing {key}")
                    return default
                return float(v)

            n = rec.get("n")
            n = int(float(n)) if n not in (None, "") else None
            est = EstimatePair.from_values(num("mu1"), num("mu2"), num("sigma1", 1.0), num("sigma2", 1.0),
                                           num("rho", 0.0), n)
            for name in _tests_for(test, est):
                kw = kwargs if name == "heuristic" else {}
                rows.append(dict(_record(run_test(name, est, alpha, direction, config, **kw)), error=""))
        except (ValueError, CalibrationError) as exc:
            rows.append({"test": test, "alpha": alpha, "direction": NullDirection.parse(direction).value,
                         "error": _error_code(exc), "message": str(exc)})
        return rows

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(one, records))
    else:
        chunks = [one(r) for r in records]
    return [dict(row, row=i) for i, rows in enumerate(chunks) for row in rows]


def _batch(args, config) -> int:
    records = _read_batch(args.input)
    if not records:
        print("warning: input file has no records", file=sys.stderr)
    rows = batch_test(records, args.test, args.alpha, args.direction, config, args.workers, **_heuristic_kwargs(args))
    if (args.format or "csv") == "json":
        _write(_json(rows), args.out)
    else:
        _write(_rows_csv(rows, ("row",) + OUTCOME_COLUMNS + ("error",)), args.out)
    return 0


def cmd_calibrate(args) -> int:
    entry = critical_value(args.alpha, args.rho, _config_from_args(args))
    _write(_json(asdict(entry)), args.out)
    return 0


def cmd_table(args) -> int:
    rows = emit_critical_table(args.alphas, args.rhos, _config_from_args(args), args.workers)
    _write(table_to_csv(rows) if args.format == "csv" else table_to_json(rows) + "\n", args.out)
    failed = [r for r in rows if r.get("error")]
    for r in failed:
        print(f"calibration failed at alpha={r['alpha']}, rho={r['rho']}: {r['error']}", file=sys.stderr)
    return 2 if failed else 0


def cmd_cone_test(args) -> int:
    if len(args.cone) != 4:
        raise UsageError("--cone needs four numbers: b1x,b1y,b2x,b2y")
    cone = Cone2(tuple(args.cone[:2]), tuple(args.cone[2:]))
    est = _estimate(args)
    out = cone_test(est, cone, args.alpha, args.direction, _config_from_args(args))
    _write(_json(dict(_record(out), diagnostics=out.diagnostics)), args.out)
    return 0


def cmd_boot_corr(args) -> int:
    reps = load_replicates(args.path, args.format, args.trim_frac)
    r = trimmed_bootstrap_correlation(reps, center=args.center, drop=args.drop)
    _write(_json({"rho": r, "replicates": reps.B, "trimmed": reps.n_trimmed(), "trim_frac": reps.trim_frac,
                  "mode": "drop" if args.drop else "zero"}), args.out)
    return 0


def _require_seed(args) -> int:
    if args.seed is None:
        raise UsageError("--seed is required for randomized runs")
    print(f"seed={args.seed}", file=sys.stderr)
    return args.seed


def cmd_simulate(args) -> int:
    kind = args.kind
    if kind == "rate":
        if args.scenario:
            sc = load_scenario(args.scenario)
            print(f"seed={sc.seed}", file=sys.stderr)
        else:
            seed = _require_seed(args)
            sc = SimScenario(args.test_id, tuple(args.mu_grid), Covariance2(args.sigma1, args.sigma2, args.rho),
                             args.alpha, args.reps, seed)
        rows = run_scenario(sc, args.workers)
        cols = REPORT_COLUMNS + (("analytic",) if rows and "analytic" in rows[0] else ())
        _emit(rows, cols, args)
    elif kind == "containment":
        _write(_json(verify_containment(args.count, _require_seed(args), args.alpha, args.extent)), args.out)
    elif kind == "heuristic-extremes":
        rows = heuristic_size_extremes(args.rhos, args.reps, _require_seed(args), args.alpha, args.workers)
        _emit(rows, ("rho", "rate", "se", "reps", "seed"), args)
    elif kind == "monotone":
        rep = monotonic_region_audit(args.test_id, args.grid_step_audit, args.extent, args.alpha, args.rho)
        _write(_json(rep), args.out)
    elif kind == "slices":
        _write(_json(slice_monotonicity_audit(alpha=args.alpha)), args.out)
    elif kind == "feasible-sweep":
        rows = feasible_size_sweep([int(n) for n in args.n_schedule], tuple(args.mu_grid),
                                   Covariance2(args.sigma1, args.sigma2, args.rho), args.alpha, args.reps,
                                   _require_seed(args))
        _emit(rows, ("mu1", "mu2", "rho", "n", "test", "rate", "se", "reps", "seed"), args)
    return 0


def _emit(rows, cols, args) -> None:
    _write(_rows_csv(rows, cols) if args.format == "csv" else _json(rows), args.out)


def cmd_delta_demo(args) -> int:
    seed = _require_seed(args)
    rep = delta_demo((args.mu1, args.mu2), Covariance2(args.sigma1, args.sigma2, args.rho), args.reps, args.bins, seed)
    if args.format == "json":
        _write(_json(rep), args.out)
    else:
        _write(_rows_csv(rep["rows"], ("bin_left", "bin_right", "empirical_density", "delta_density")), args.out)
        print(f"ks_distance={_sig(rep['ks_distance'])}", file=sys.stderr)
    return 0


COMMANDS = {
    "test": cmd_test,
    "calibrate": cmd_calibrate,
    "table": cmd_table,
    "cone-test": cmd_cone_test,
    "boot-corr": cmd_boot_corr,
    "simulate": cmd_simulate,
    "delta-demo": cmd_delta_demo,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except CalibrationError as exc:
        print(f"calibration failure: {exc}", file=sys.stderr)
        return 2
    except (UsageError, ValueError, ReplicateParseError, UndefinedCorrelation, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
