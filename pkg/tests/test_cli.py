"""CLI subcommands and report rendering end to end (tiny configurations)."""

import json
import os
from datetime import date, timedelta

import numpy as np
import pandas as pd
import pytest

from ntsfolio.cli import main

from conftest import simulated_panel


@pytest.fixture(scope="module")
def price_csv(tmp_path_factory):
    """Wide-form price file backing all CLI tests (2 assets, 140 days)."""
    tmp = tmp_path_factory.mktemp("clidata")
    panel = simulated_panel(n_assets=2, n_obs=139, seed=41)
    prices = 100 * np.exp(np.cumsum(np.vstack([np.zeros(2), panel.values]), axis=0))
    start = date(2021, 1, 1)
    lines = ["date," + ",".join(panel.asset_ids)]
    for k in range(prices.shape[0]):
        cells = ",".join(f"{p:.8f}" for p in prices[k])
        lines.append(f"{start + timedelta(days=k)},{cells}")
    path = tmp / "prices.csv"
    path.write_text("\n".join(lines) + "\n")
    return str(path)


@pytest.fixture(scope="module")
def config_file(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("clicfg")
    path = tmp / "run.cfg"
    path.write_text(
        "\n".join([
            "window_length = 120",
            "models = agnormal,agt",
            "risk_measures = sd,avar",
            "lambdas = 0,1e-7",
            "cost_aversions = 0.1",
            "n_scenarios = 1500",
            "backtest_n_sim = 1000",
            "min_obs = 80",
            "solver_maxfev = 150",
            "seed = 11  # deterministic",
        ]) + "\n"
    )
    return str(path)


class TestDescribe:
    def test_writes_csv_and_json(self, price_csv, tmp_path, capsys):
        out = str(tmp_path / "desc")
        assert main(["describe", "--data", price_csv, "--out", out]) == 0
        stats = pd.read_csv(os.path.join(out, "descriptive_stats.csv"), index_col=0)
        assert set(stats.columns) >= {"count", "mean", "max", "min", "sd", "kurtosis", "skewness"}
        assert (stats["count"] == 139).all()
        payload = json.loads(open(os.path.join(out, "descriptive_stats.json")).read())
        assert payload["kurtosis_convention"] == "raw"

    def test_bad_file_is_clean_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("date,asset,close\nxxxx,BTC,1\n")
        rc = main(["describe", "--data", str(bad), "--out", str(tmp_path / "o")])
        assert rc == 1
        assert "ParseError" in capsys.readouterr().err


class TestFit:
    def test_fit_last_window_json(self, price_csv, tmp_path):
        out = str(tmp_path / "fit")
        rc = main(["fit", "--data", price_csv, "--out", out,
                   "--window-length", "120", "--models", "agnormal"])
        assert rc == 0
        files = os.listdir(out)
        assert len(files) == 1
        payload = json.loads(open(os.path.join(out, files[0])).read())
        fams = payload["families"]
        assert "normal" in fams
        for asset, fit in fams["normal"].items():
            p = fit["params"]
            assert p["omega"] > 0 and p["a"] >= 0 and p["b"] >= 0
            assert p["a"] + p["b"] < 1


class TestOptimize:
    def test_weights_written(self, price_csv, tmp_path):
        out = str(tmp_path / "opt")
        rc = main(["optimize", "--data", price_csv, "--out", out,
                   "--window-length", "120", "--model", "agt", "--rho", "avar",
                   "--seed", "3"])
        assert rc == 0
        payload = json.loads(open(os.path.join(out, "optimize_agt_avar.json")).read())
        w = np.array(list(payload["weights"].values()))
        assert np.sum(np.abs(w)) == pytest.approx(1.0, rel=1e-9)
        assert payload["expected_return"] > 0


class TestRun:
    @pytest.fixture(scope="class")
    def run_dir(self, price_csv, config_file, tmp_path_factory):
        out = str(tmp_path_factory.mktemp("runout"))
        rc = main(["run", "--data", price_csv, "--config", config_file, "--out", out])
        assert rc == 0
        return out

    def test_outputs_present(self, run_dir):
        names = set(os.listdir(run_dir))
        assert {"performance.csv", "cumulative_returns.csv", "run_manifest.json",
                "ks_rejections.csv", "ad_rejections.csv", "backtest_pvalues.csv",
                "descriptive_stats.csv", "ledgers", "figures"} <= names

    def test_figures_rendered(self, run_dir):
        figs = os.listdir(os.path.join(run_dir, "figures"))
        assert any(f.endswith(".png") for f in figs)
        # one panel per (lambda, C) cell: (0, 0.1) and (1e-07, 0.1)
        assert len([f for f in figs if f.endswith(".png")]) == 2

    def test_manifest_records_config_hash_and_seed(self, run_dir, config_file):
        manifest = json.loads(open(os.path.join(run_dir, "run_manifest.json")).read())
        assert manifest["seed"] == 11
        assert len(manifest["config_hash"]) == 64
        assert manifest["conventions"]["weight_scale"].startswith("unit gross")

    def test_ledger_files_parse(self, run_dir):
        led_dir = os.path.join(run_dir, "ledgers")
        frames = [pd.read_csv(os.path.join(led_dir, f)) for f in os.listdir(led_dir)]
        assert frames and all(len(f) == 19 for f in frames)  # 139 - 120 = 19 realized days
        for frame in frames:
            assert {"date", "cost", "gross_return", "net_return"} <= set(frame.columns)

    def test_curve_csv_matches_performance(self, run_dir):
        curves = pd.read_csv(os.path.join(run_dir, "cumulative_returns.csv"), index_col=0)
        perf = pd.read_csv(os.path.join(run_dir, "performance.csv"), index_col=0, comment="#")
        for label in perf.index:
            assert curves[label].iloc[-1] == pytest.approx(perf.loc[label, "cumulative_return"], rel=1e-9)

    def test_report_subcommand_rerenders(self, run_dir):
        # wipe derived outputs, re-render from the saved ledgers
        os.remove(os.path.join(run_dir, "performance.csv"))
        rc = main(["report", "--run-dir", run_dir])
        assert rc == 0
        assert os.path.exists(os.path.join(run_dir, "performance.csv"))


class TestGofBacktestCommands:
    def test_gof_writes_tables(self, price_csv, tmp_path):
        out = str(tmp_path / "gof")
        rc = main(["gof", "--data", price_csv, "--out", out, "--window-length", "130"])
        assert rc == 0
        table = pd.read_csv(os.path.join(out, "ks_rejections.csv"), comment="#", index_col=0)
        assert table.shape[0] == 2  # two assets

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
