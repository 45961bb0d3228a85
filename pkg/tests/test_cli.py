import csv
import shutil
from importlib.resources import files

import numpy as np
import pytest

from crashvol.cli import main


@pytest.fixture()
def workdir(tmp_path):
    for name in ("dc_2010_2014.csv", "dc_2015_2019.csv"):
        shutil.copy(str(files("crashvol") / "data" / name), tmp_path / name)
    return tmp_path


def _read_stats(path):
    with open(path, newline="") as fh:
        return {row["statistic"]: row["value"] for row in csv.DictReader(fh)}


def test_diagnose_writes_statistics(workdir, capsys):
    out = workdir / "t1"
    rc = main(["diagnose", "--input", str(workdir / "dc_2010_2014.csv"), "--out", str(out)])
    assert rc == 0
    stats = _read_stats(workdir / "t1.stats.csv")
    assert stats["window_vol"] == "0.6332627824"
    assert stats["vol_of_vol"] == "0.2625995994"
    assert stats["yearly_vol.2012"] == "0.5571687973"
    assert stats["growth"] == "0.1366956849"
    assert stats["spike_months"] == "1;7;8"
    assert stats["growth_method"] == "geometric-mean-of-yearly-mean-ratios"
    assert float(stats["rate_vol_correlation"]) == pytest.approx(-0.5963902667)
    with open(workdir / "t1.hist_rates.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert sum(int(r["count"]) for r in rows) == 62
    assert (workdir / "t1.hist_logdiffs.csv").exists()


def test_fit_heston_writes_params(workdir):
    out = workdir / "h.params"
    rc = main([
        "fit", "--input", str(workdir / "dc_2010_2014.csv"),
        "--train-start", "2010-01", "--train-end", "2014-12",
        "--model", "heston", "--out", str(out),
    ])
    assert rc == 0
    text = out.read_text()
    assert "model = heston" in text
    assert "theta_vol = 0.633262782434" in text
    assert "spike.7.mean = 0.333957637062" in text
    assert "history.12 = " in text
    assert "start_year = 2015" in text


def test_fit_arima_writes_model(workdir):
    out = workdir / "a.model"
    rc = main([
        "fit", "--input", str(workdir / "dc_2010_2014.csv"),
        "--train-start", "2010-01", "--train-end", "2014-12",
        "--model", "arima", "--orders", "1,2,2", "--out", str(out),
    ])
    assert rc == 0
    text = out.read_text()
    assert "model = arima" in text
    assert "p = 1" in text
    assert "ma.2 = " in text


def test_forecast_from_arima_garch_file(workdir):
    # the variance recursion must work from the stored tails alone
    params = workdir / "ag.model"
    rc = main([
        "fit", "--input", str(workdir / "dc_2010_2014.csv"),
        "--train-start", "2010-01", "--train-end", "2014-12",
        "--model", "arima-garch", "--orders", "1,2,2,1,1", "--out", str(params),
    ])
    assert rc == 0
    out = workdir / "agf.csv"
    rc = main(["forecast", "--params", str(params), "--horizon", "12", "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "year,month,median,q05,q25,q75,q95"
    assert len(lines) == 13
    row = lines[1].split(",")
    q05, q25, med, q75, q95 = (float(row[i]) for i in (3, 4, 2, 5, 6))
    assert q05 < q25 < med < q75 < q95


def test_forecast_requires_seed(workdir, capsys):
    params = workdir / "h.params"
    main([
        "fit", "--input", str(workdir / "dc_2010_2014.csv"),
        "--train-start", "2010-01", "--train-end", "2014-12",
        "--model", "heston", "--out", str(params),
    ])
    capsys.readouterr()  # drop fit output
    rc = main(["forecast", "--params", str(params), "--horizon", "12",
               "--paths", "50", "--out", str(workdir / "f.csv")])
    err = capsys.readouterr().err
    assert rc == 1
    assert err.startswith("crashvol: E_VALIDATION:")
    assert "--seed" in err


def test_forecast_writes_quantile_csv(workdir):
    params = workdir / "h.params"
    main([
        "fit", "--input", str(workdir / "dc_2010_2014.csv"),
        "--train-start", "2010-01", "--train-end", "2014-12",
        "--model", "heston", "--out", str(params),
    ])
    out = workdir / "f.csv"
    rc = main(["forecast", "--params", str(params), "--horizon", "18",
               "--paths", "200", "--seed", "4", "--out", str(out)])
    assert rc == 0
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 18
    assert list(rows[0]) == ["year", "month", "median", "q05", "q25", "q75", "q95"]
    assert rows[0]["year"] == "2015"
    assert rows[0]["month"] == "1"
    assert rows[-1]["month"] == "6"
    med = [float(r["median"]) for r in rows]
    assert all(m > 0 for m in med)


def test_forecast_custom_levels(workdir):
    params = workdir / "v.params"
    main([
        "fit", "--input", str(workdir / "dc_2010_2014.csv"),
        "--train-start", "2010-01", "--train-end", "2014-12",
        "--model", "vasicek", "--out", str(params),
    ])
    out = workdir / "f.csv"
    rc = main(["forecast", "--params", str(params), "--horizon", "6",
               "--paths", "100", "--seed", "2", "--levels", "10,90", "--out", str(out)])
    assert rc == 0
    header = out.read_text().splitlines()[0]
    assert header == "year,month,median,q10,q90"


def test_forecast_rejects_bad_levels(workdir, capsys):
    params = workdir / "v.params"
    main([
        "fit", "--input", str(workdir / "dc_2010_2014.csv"),
        "--train-start", "2010-01", "--train-end", "2014-12",
        "--model", "vasicek", "--out", str(params),
    ])
    rc = main(["forecast", "--params", str(params), "--horizon", "6",
               "--paths", "50", "--seed", "2", "--levels", "0,150",
               "--out", str(workdir / "f.csv")])
    assert rc == 1
    assert "E_VALIDATION" in capsys.readouterr().err


def test_forecast_deterministic_output(workdir):
    params = workdir / "h.params"
    main([
        "fit", "--input", str(workdir / "dc_2010_2014.csv"),
        "--train-start", "2010-01", "--train-end", "2014-12",
        "--model", "heston", "--out", str(params),
    ])
    a, b = workdir / "a.csv", workdir / "b.csv"
    for out in (a, b):
        rc = main(["forecast", "--params", str(params), "--horizon", "24",
                   "--paths", "500", "--seed", "33", "--out", str(out)])
        assert rc == 0
    assert a.read_bytes() == b.read_bytes()


def test_evaluate_reports_errors(workdir, capsys):
    params = workdir / "h.params"
    main([
        "fit", "--input", str(workdir / "dc_2010_2014.csv"),
        "--train-start", "2010-01", "--train-end", "2014-12",
        "--model", "heston", "--out", str(params),
    ])
    fc = workdir / "f.csv"
    main(["forecast", "--params", str(params), "--horizon", "60",
          "--paths", "300", "--seed", "5", "--out", str(fc)])
    rep = workdir / "rep.csv"
    rc = main(["evaluate", "--forecast", str(fc),
               "--observed", str(workdir / "dc_2015_2019.csv"),
               "--model-id", "heston", "--out", str(rep)])
    assert rc == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert line.startswith("heston overall mae=")
    body = rep.read_text().splitlines()
    assert body[0] == "model,year,mae,rmse,mape"
    assert body[1].startswith("heston,2015,")
    assert body[-1].startswith("heston,overall,")
    cov = (workdir / "rep.coverage.csv").read_text().splitlines()
    assert cov[0] == "low,high,n_outside,frac_outside"
    assert cov[1].startswith("0.25,0.75,")


def test_evaluate_detects_missing_observations(workdir, capsys):
    params = workdir / "h.params"
    main([
        "fit", "--input", str(workdir / "dc_2010_2014.csv"),
        "--train-start", "2010-01", "--train-end", "2014-12",
        "--model", "heston", "--out", str(params),
    ])
    fc = workdir / "f.csv"
    main(["forecast", "--params", str(params), "--horizon", "72",
          "--paths", "100", "--seed", "5", "--out", str(fc)])
    rc = main(["evaluate", "--forecast", str(fc),
               "--observed", str(workdir / "dc_2015_2019.csv"),
               "--model-id", "heston", "--out", str(workdir / "rep.csv")])
    assert rc == 1
    err = capsys.readouterr().err
    assert "E_RANGE" in err or "E_ALIGN" in err


def test_backtest_end_to_end(workdir, capsys):
    out = workdir / "bt.csv"
    rc = main([
        "backtest",
        "--input", str(workdir / "dc_2010_2014.csv"),
        "--input", str(workdir / "dc_2015_2019.csv"),
        "--train-start", "2010-01", "--train-end", "2014-12",
        "--test-start", "2015-01", "--test-end", "2019-12",
        "--model", "vasicek", "--paths", "300", "--seed", "6",
        "--out", str(out),
    ])
    assert rc == 0
    assert out.exists()
    assert (workdir / "bt.report.csv").exists()
    assert (workdir / "bt.coverage.csv").exists()
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert line.startswith("vasicek overall mae=")
    with open(out, newline="") as fh:
        assert len(list(csv.DictReader(fh))) == 60


def test_backtest_window_mismatch(workdir, capsys):
    rc = main([
        "backtest",
        "--input", str(workdir / "dc_2010_2014.csv"),
        "--input", str(workdir / "dc_2015_2019.csv"),
        "--train-start", "2010-01", "--train-end", "2014-11",
        "--test-start", "2015-01", "--test-end", "2019-12",
        "--model", "vasicek", "--paths", "50", "--seed", "6",
        "--out", str(workdir / "bt.csv"),
    ])
    assert rc == 1
    assert "E_RANGE" in capsys.readouterr().err


def test_io_error_code(workdir, capsys):
    rc = main(["diagnose", "--input", str(workdir / "dc_2010_2014.csv"),
               "--out", str(workdir / "no" / "such" / "dir" / "x")])
    assert rc == 1
    assert capsys.readouterr().err.startswith("crashvol: E_IO:")


def test_missing_input_file(workdir, capsys):
    rc = main(["diagnose", "--input", str(workdir / "nope.csv"), "--out", str(workdir / "x")])
    assert rc == 1
    assert "E_IO" in capsys.readouterr().err


def test_bad_month_format(workdir, capsys):
    rc = main([
        "fit", "--input", str(workdir / "dc_2010_2014.csv"),
        "--train-start", "2010-13", "--train-end", "2014-12",
        "--model", "heston", "--out", str(workdir / "h.params"),
    ])
    assert rc == 1
    assert "E_VALIDATION" in capsys.readouterr().err


def test_merged_inputs_align(workdir):
    # repeated --input merges into one contiguous series
    out = workdir / "d"
    rc = main(["diagnose",
               "--input", str(workdir / "dc_2010_2014.csv"),
               "--input", str(workdir / "dc_2015_2019.csv"),
               "--out", str(out)])
    assert rc == 0
    stats = _read_stats(workdir / "d.stats.csv")
    assert "yearly_vol.2019" in stats
    assert "yearly_vol.2010" in stats
