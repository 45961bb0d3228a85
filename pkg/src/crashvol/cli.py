"""Command-line front end.

Subcommands: diagnose | fit | forecast | evaluate | backtest. Every
stochastic run takes an explicit --seed; there are no wall-clock or entropy
defaults, so identical flags and files always reproduce identical outputs.
Errors print a single machine-parsable line `crashvol: E_<CODE>: detail` to
stderr and exit nonzero. The CRASHVOL_LOG environment variable (debug,
info, warning, error) controls log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import arima_garch, evaluation, series_stats, stochastic_engine
from .data_ingest import (
    CrashvolError,
    MonthlySeries,
    ValidationError,
    add_months,
    merge_series,
    parse_monthly_csv,
    slice_window,
)

log = logging.getLogger("crashvol")

STOCHASTIC_MODELS = ("heston", "vasicek")


def _parse_ym(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"(\d{4})-(\d{1,2})", text.strip())
    if not m:
        raise ValidationError(f"expected YYYY-MM, got {text!r}")
    year, month = int(m.group(1)), int(m.group(2))
    if not 1 <= month <= 12:
        raise ValidationError(f"month {month} outside 1..12 in {text!r}")
    return year, month


def _parse_levels(text: str) -> tuple[float, ...]:
    try:
        percents = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"bad quantile levels {text!r}") from None
    levels = tuple(p / 100.0 for p in percents)
    if not levels or any(not 0.0 < x < 1.0 for x in levels):
        raise ValidationError("quantile levels must be percentages strictly inside (0, 100)")
    if sorted(set(levels)) != list(levels):
        raise ValidationError("quantile levels must be sorted and unique")
    return levels


def _parse_orders(text: str) -> tuple[tuple[int, int, int], tuple[int, int]]:
    try:
        parts = [int(x) for x in text.split(",")]
    except ValueError:
        raise ValidationError(f"bad orders {text!r}, expected p,d,q[,gp,gq]") from None
    if len(parts) == 3:
        return (parts[0], parts[1], parts[2]), (2, 1)
    if len(parts) == 5:
        return (parts[0], parts[1], parts[2]), (parts[3], parts[4])
    raise ValidationError(f"bad orders {text!r}, expected p,d,q[,gp,gq]")


def _load_inputs(paths) -> MonthlySeries:
    series = parse_monthly_csv(paths[0])
    for extra in paths[1:]:
        series = merge_series(series, parse_monthly_csv(extra))
    return series


def _level_name(level: float) -> str:
    return f"q{level * 100:02g}"


def _write_forecast_csv(path, quantiles: stochastic_engine.ForecastQuantiles) -> None:
    names = [_level_name(x) for x in quantiles.levels]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("year,month,median," + ",".join(names) + "\n")
        for t, (y, m) in enumerate(quantiles.months):
            vals = [quantiles.median[t]] + [quantiles.bands[i, t] for i in range(len(names))]
            fh.write(f"{y},{m}," + ",".join(f"{v:.10g}" for v in vals) + "\n")


def _read_forecast_csv(path) -> stochastic_engine.ForecastQuantiles:
    from .data_ingest import ParseError

    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or header[:3] != ["year", "month", "median"]:
                raise ParseError(f"{path}: expected header year,month,median,q...")
            levels = []
            for name in header[3:]:
                m = re.fullmatch(r"q(\d+(?:\.\d+)?)", name)
                if not m:
                    raise ParseError(f"{path}: bad quantile column {name!r}")
                levels.append(float(m.group(1)) / 100.0)
            months, med, bands = [], [], []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 3 + len(levels):
                    raise ParseError(f"{path}:{lineno}: wrong field count")
                try:
                    months.append((int(row[0]), int(row[1])))
                    med.append(float(row[2]))
                    bands.append([float(x) for x in row[3:]])
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: {exc}") from None
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if not months:
        raise ParseError(f"{path}: no forecast rows")
    return stochastic_engine.ForecastQuantiles(
        months=tuple(months),
        median=np.array(med),
        levels=tuple(levels),
        bands=np.array(bands).T if levels else np.empty((0, len(months))),
    )


def _stem(path) -> Path:
    p = Path(path)
    return p.with_suffix("") if p.suffix else p


# ---------------------------------------------------------------------------
# subcommands

def cmd_diagnose(args) -> int:
    series = _load_inputs(args.input)
    stem = _stem(args.out) if args.out else _stem(args.input[0])
    prof = series_stats.volatility_profile(series)
    growth = series_stats.annual_growth_rate(series)
    season = series_stats.season_profile(series)
    diag = series_stats.distribution_diagnostics(series)
    rows: list[tuple[str, object]] = [
        ("window_vol", prof.window_vol),
        ("vol_of_vol", prof.vol_of_vol),
    ]
    rows += [(f"yearly_vol.{y}", v) for y, v in zip(prof.years, prof.yearly_vols)]
    rows.append(("growth", growth.annual_growth))
    rows.append(("growth_method", growth.method))
    for m in range(1, 13):
        rows.append((f"season.{m}.mean", season.mean[m - 1]))
        rows.append((f"season.{m}.std", season.std[m - 1]))
    spike_months = series_stats.detect_spike_months(season, evaluation.DEFAULT_SPIKE_THRESHOLD)
    rows.append(("spike_months", ";".join(str(m) for m in spike_months)))
    try:
        rows.append(("rate_vol_correlation", series_stats.rate_vol_correlation(series)))
    except CrashvolError:
        log.info("skipping rate/vol correlation, needs 3 full years")
    rows.append(("jb_stat", diag.jarque_bera))
    rows.append(("jb_pvalue", diag.jb_pvalue))

    stats_path = f"{stem}.stats.csv"
    with open(stats_path, "w", encoding="utf-8") as fh:
        fh.write("statistic,value\n")
        for key, val in rows:
            text = f"{val:.10g}" if isinstance(val, float) else str(val)
            fh.write(f"{key},{text}\n")
    for name, edges, counts in (
        ("hist_rates", diag.rate_bin_edges, diag.rate_counts),
        ("hist_logdiffs", diag.logdiff_bin_edges, diag.logdiff_counts),
    ):
        with open(f"{stem}.{name}.csv", "w", encoding="utf-8") as fh:
            fh.write("bin_low,bin_high,count\n")
            for i, c in enumerate(counts):
                fh.write(f"{edges[i]:.10g},{edges[i + 1]:.10g},{int(c)}\n")
    log.info("diagnostics written to %s", stats_path)
    print(stats_path)
    return 0


def _overrides_from_args(args) -> dict:
    overrides: dict = {}
    if args.rho is not None:
        overrides["rho"] = args.rho
    if args.spike_threshold is not None:
        overrides["spike_threshold"] = args.spike_threshold
    if args.scheme is not None:
        overrides["scheme"] = args.scheme
    return overrides


def cmd_fit(args) -> int:
    series = _load_inputs(args.input)
    train_start = _parse_ym(args.train_start)
    train_end = _parse_ym(args.train_end)
    start = add_months(*train_end, 1)
    if args.model in STOCHASTIC_MODELS:
        overrides = _overrides_from_args(args)
        if args.model == "heston":
            params, history = evaluation.fit_heston_from_stats(
                series, train_start, train_end, start, overrides
            )
        else:
            params, history = evaluation.fit_vasicek_from_stats(
                series, train_start, train_end, start, overrides
            )
        stochastic_engine.write_stochastic_params(params, args.out, history)
    else:
        train = slice_window(series, train_start, train_end)
        (p, d, q), (gp, gq) = _parse_orders(args.orders)
        arima = arima_garch.fit_arima(train.rates, p, d, q)
        garch = None
        if args.model == "arima-garch":
            garch = arima_garch.fit_garch(arima.residuals, gp, gq)
        arima_garch.write_arima_model(arima, args.out, start, train.rates, garch)
    log.info("parameters written to %s", args.out)
    print(args.out)
    return 0


def _forecast_from_file(params_path, horizon, n_paths, seed, levels):
    kv = stochastic_engine.parse_kv_file(params_path)
    model = kv.get("model", "heston")
    if model in STOCHASTIC_MODELS:
        if seed is None:
            raise ValidationError(f"--seed is required for {model} forecasts")
        params, history = stochastic_engine.read_stochastic_params(params_path)
        simulate = (
            stochastic_engine.simulate_heston
            if model == "heston"
            else stochastic_engine.simulate_vasicek
        )
        result = simulate(params, horizon, n_paths, seed, history)
        return stochastic_engine.forecast_quantiles(result, levels)
    spec, garch, start, tail, h_tail = arima_garch.read_arima_model(params_path)
    points = arima_garch.forecast_arima(spec, tail, horizon)
    if garch is not None:
        innov = arima_garch.forecast_garch_variance(garch, spec.residuals, horizon, h_tail)
        level_vars = arima_garch.forecast_level_variance(spec, horizon, innov)
    else:
        level_vars = arima_garch.forecast_level_variance(spec, horizon)
    months = [add_months(*start, k) for k in range(horizon)]
    return evaluation.gaussian_quantiles(months, points, level_vars, levels)


def cmd_forecast(args) -> int:
    levels = _parse_levels(args.levels)
    quantiles = _forecast_from_file(args.params, args.horizon, args.paths, args.seed, levels)
    _write_forecast_csv(args.out, quantiles)
    log.info("forecast written to %s", args.out)
    print(args.out)
    return 0


def _coverage_levels(levels, low_pct, high_pct):
    low, high = low_pct / 100.0, high_pct / 100.0
    eps = 1e-9
    lo = next((x for x in levels if abs(x - low) < eps), None)
    hi = next((x for x in levels if abs(x - high) < eps), None)
    return lo, hi


def cmd_evaluate(args) -> int:
    quantiles = _read_forecast_csv(args.forecast)
    observed_series = _load_inputs(args.observed)
    try:
        observed_slice = slice_window(series=observed_series,
                                      start=quantiles.months[0], end=quantiles.months[-1])
    except CrashvolError:
        raise evaluation.AlignmentError(
            f"observed series {observed_series.start[0]}-{observed_series.start[1]:02d}.."
            f"{observed_series.end[0]}-{observed_series.end[1]:02d} does not cover forecast "
            f"months {quantiles.months[0][0]}-{quantiles.months[0][1]:02d}.."
            f"{quantiles.months[-1][0]}-{quantiles.months[-1][1]:02d}"
        ) from None
    observed = evaluation.dated_rates(observed_slice)
    forecast = list(zip(quantiles.months, (float(x) for x in quantiles.median)))
    report = evaluation.yearly_error_report(forecast, observed, model_id=args.model_id)
    evaluation.write_error_report(report, args.out)
    lo, hi = _coverage_levels(quantiles.levels, args.low, args.high)
    if lo is not None and hi is not None:
        n_out, frac = evaluation.interval_coverage(quantiles, observed, lo, hi)
        evaluation.write_coverage(f"{_stem(args.out)}.coverage.csv", lo, hi, n_out, frac)
    else:
        log.warning("levels %s/%s not in forecast file, skipping coverage", args.low, args.high)
    mae, rmse, mape = report.overall
    print(f"{args.model_id} overall mae={mae:.6g} rmse={rmse:.6g} mape={mape:.6g}")
    return 0


def cmd_backtest(args) -> int:
    series = _load_inputs(args.input)
    train = (_parse_ym(args.train_start), _parse_ym(args.train_end))
    test = (_parse_ym(args.test_start), _parse_ym(args.test_end))
    levels = _parse_levels(args.levels)
    if args.model in STOCHASTIC_MODELS and args.seed is None:
        raise ValidationError(f"--seed is required for the {args.model} model")
    (p, d, q), (gp, gq) = _parse_orders(args.orders)
    config = {
        "n_paths": args.paths,
        "levels": levels,
        "orders": (p, d, q),
        "garch_orders": (gp, gq),
        "overrides": _overrides_from_args(args),
    }
    quantiles, report = evaluation.backtest(
        series, train, test, model=args.model, config=config, seed=args.seed or 0
    )
    _write_forecast_csv(args.out, quantiles)
    stem = _stem(args.out)
    evaluation.write_error_report(report, f"{stem}.report.csv")
    lo, hi = _coverage_levels(levels, args.low, args.high)
    if lo is not None and hi is not None:
        observed = evaluation.dated_rates(
            slice_window(series, quantiles.months[0], quantiles.months[-1])
        )
        n_out, frac = evaluation.interval_coverage(quantiles, observed, lo, hi)
        evaluation.write_coverage(f"{stem}.coverage.csv", lo, hi, n_out, frac)
    mae, rmse, mape = report.overall
    print(f"{args.model} overall mae={mae:.6g} rmse={rmse:.6g} mape={mape:.6g}")
    return 0


# ---------------------------------------------------------------------------
# parser wiring

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crashvol",
        description="Crash-rate statistics, stochastic simulation, and forecast backtesting",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_input(p, required=True):
        p.add_argument(
            "--input",
            action="append",
            required=required,
            help="monthly crash/VMT CSV; repeat to merge overlapping files",
        )

    p = sub.add_parser("diagnose", help="write descriptive statistics and histograms")
    add_input(p)
    p.add_argument("--out", help="output stem (default: input path without extension)")
    p.set_defaults(func=cmd_diagnose)

    def add_fit_flags(p):
        p.add_argument("--train-start", required=True, metavar="YYYY-MM")
        p.add_argument("--train-end", required=True, metavar="YYYY-MM")
        p.add_argument("--model", default="heston", choices=evaluation.MODEL_IDS)
        p.add_argument("--orders", default="1,2,2", help="p,d,q[,gp,gq] for the ARIMA models")
        p.add_argument("--rho", type=float, default=None, help="rate/variance correlation override")
        p.add_argument("--spike-threshold", type=float, default=None,
                       help="mean-deviation threshold for spike months (default 0.12)")
        p.add_argument("--scheme", choices=("reflect", "truncate"), default=None)

    p = sub.add_parser("fit", help="fit model parameters on a training window")
    add_input(p)
    add_fit_flags(p)
    p.add_argument("--out", required=True, help="parameter file to write")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("forecast", help="forecast from a parameter file")
    p.add_argument("--params", required=True, help="parameter or fitted-model file")
    p.add_argument("--horizon", type=int, default=60, help="months to forecast (default 60)")
    p.add_argument("--paths", type=int, default=5000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--levels", default="5,25,75,95", help="quantile percentages")
    p.add_argument("--out", required=True, help="forecast CSV to write")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("evaluate", help="score a forecast CSV against observed rates")
    p.add_argument("--forecast", required=True, help="forecast CSV")
    p.add_argument("--observed", action="append", required=True, dest="observed",
                   help="observed crash/VMT CSV; repeat to merge")
    p.add_argument("--model-id", default="model", help="model column value for the report")
    p.add_argument("--low", type=float, default=25.0, help="lower coverage percentile")
    p.add_argument("--high", type=float, default=75.0, help="upper coverage percentile")
    p.add_argument("--out", required=True, help="error-report CSV to write")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("backtest", help="fit, forecast, and score in one run")
    add_input(p)
    add_fit_flags(p)
    p.add_argument("--test-start", required=True, metavar="YYYY-MM")
    p.add_argument("--test-end", required=True, metavar="YYYY-MM")
    p.add_argument("--paths", type=int, default=5000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--levels", default="5,25,75,95", help="quantile percentages")
    p.add_argument("--low", type=float, default=25.0, help="lower coverage percentile")
    p.add_argument("--high", type=float, default=75.0, help="upper coverage percentile")
    p.add_argument("--out", required=True, help="forecast CSV; report/coverage use its stem")
    p.set_defaults(func=cmd_backtest)
    return parser


def _configure_logging():
    level = os.environ.get("CRASHVOL_LOG", "warning").strip().lower()
    names = {"debug": logging.DEBUG, "info": logging.INFO,
             "warning": logging.WARNING, "error": logging.ERROR}
    logging.basicConfig(level=names.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CrashvolError as exc:
        print(f"crashvol: {exc.code}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"crashvol: E_IO: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
