"""Rolling-window harness: ledgers, accounting, pairing, statistical suite."""

import math

import numpy as np
import pandas as pd
import pytest

from ntsfolio.config import RunConfig
from ntsfolio.data import AlignedReturns, WindowSpec
from ntsfolio.errors import InsufficientDataError
from ntsfolio.harness import (
    RunLedger,
    StrategySpec,
    cumulative_curve,
    derive_seed,
    estimate_windows,
    performance_table,
    run_experiment,
    statistical_suite,
    strategy_grid,
)

from conftest import daily_dates, simulated_panel


def small_config(**overrides) -> RunConfig:
    base = dict(
        window_length=100,
        models=("agnormal", "agt", "agnts"),
        risk_measures=("sd", "avar", "fh"),
        lambdas=(0.0, 1e-7),
        cost_aversions=(0.01, 1.0),
        n_scenarios=2000,
        backtest_n_sim=1000,
        min_obs=80,
        mnts_max_iter=400,
        solver_maxfev=200,
        seed=99,
    )
    base.update(overrides)
    return RunConfig(**base)


@pytest.fixture(scope="module")
def panel():
    return simulated_panel(n_assets=2, n_obs=130, seed=17)


@pytest.fixture(scope="module")
def config():
    return small_config()


@pytest.fixture(scope="module")
def bundles(panel, config):
    return estimate_windows(panel, WindowSpec(length=config.window_length), config)


@pytest.fixture(scope="module")
def experiment(panel, config, bundles):
    strategies = strategy_grid(config)
    return run_experiment(panel, strategies, WindowSpec(length=config.window_length),
                          config, bundles=bundles)


class TestWindowArithmetic:
    def test_bundle_and_ledger_counts(self, panel, config, bundles, experiment):
        # T = 130, window 100 -> 31 windows, 30 realized days
        assert len(bundles) == 31
        for ledger in experiment.ledgers.values():
            assert len(ledger) == 30

    def test_first_realization_day_follows_first_window(self, panel, config, experiment):
        ledger = next(iter(experiment.ledgers.values()))
        assert ledger.dates[0] == panel.dates[config.window_length]


class TestAccounting:
    def test_identity_exact(self, experiment):
        for ledger in experiment.ledgers.values():
            lam = ledger.strategy.lambda_
            w_prev = np.zeros(len(ledger.asset_ids))
            recomputed = []
            for w, (gross, net) in zip(ledger.weights, zip(ledger.gross_returns, ledger.net_returns)):
                cost = lam * float(np.sum(np.abs(np.asarray(w) - w_prev)))
                recomputed.append(gross - cost)
                assert net == gross - cost  # bit-exact
                w_prev = np.asarray(w)
            curve = cumulative_curve(ledger)
            assert curve.iloc[-1] == float(np.cumsum(np.asarray(recomputed))[-1])

    def test_costs_match_turnover(self, experiment):
        for ledger in experiment.ledgers.values():
            if ledger.strategy.lambda_ == 0.0:
                assert all(c == 0.0 for c in ledger.costs)
            else:
                assert all(c >= 0.0 for c in ledger.costs)

    def test_curve_final_equals_performance_cumulative(self, experiment):
        table = performance_table(experiment.ledgers)
        for label, ledger in experiment.ledgers.items():
            assert table.loc[label, "cumulative_return"] == cumulative_curve(ledger).iloc[-1]


class TestPairing:
    def test_lambda_zero_ledgers_c_invariant(self, experiment):
        by_key = {}
        for label, ledger in experiment.ledgers.items():
            s = ledger.strategy
            if s.lambda_ != 0.0:
                continue
            key = (s.model, s.rho)
            by_key.setdefault(key, []).append(ledger)
        assert by_key and all(len(v) == 2 for v in by_key.values())
        for key, group in by_key.items():
            base = group[0].to_frame().drop(columns=["defect"])
            for other in group[1:]:
                pd.testing.assert_frame_equal(base, other.to_frame().drop(columns=["defect"]))

    def test_agt_agnts_mean_sd_coincide(self, experiment):
        for lam in (0.0, 1e-7):
            for c in (0.01, 1.0):
                a = experiment.ledgers[StrategySpec("agt", "sd", lam, c, n_scenarios=2000).label]
                b = experiment.ledgers[StrategySpec("agnts", "sd", lam, c, n_scenarios=2000).label]
                pd.testing.assert_frame_equal(a.to_frame(), b.to_frame())

    def test_agnts_tail_strategies_use_nts_scenarios(self, experiment):
        a = experiment.ledgers[StrategySpec("agt", "avar", 0.0, 0.01, n_scenarios=2000).label]
        b = experiment.ledgers[StrategySpec("agnts", "avar", 0.0, 0.01, n_scenarios=2000).label]
        assert not np.array_equal(np.vstack(a.weights), np.vstack(b.weights))

    def test_scenario_family_resolution(self):
        assert StrategySpec("agt", "sd").scenario_family == "t"
        assert StrategySpec("agnts", "sd").scenario_family == "t"
        assert StrategySpec("agnts", "avar").scenario_family == "nts"
        assert StrategySpec("agnts", "fh").scenario_family == "nts"
        assert StrategySpec("agnormal", "fh").scenario_family == "normal"


class TestDeterminism:
    def test_rerun_is_byte_identical(self, panel, config, bundles):
        strategies = [StrategySpec("agt", "avar", 1e-7, 0.1, n_scenarios=2000)]
        spec = WindowSpec(length=config.window_length)
        run1 = run_experiment(panel, strategies, spec, config, bundles=bundles)
        run2 = run_experiment(panel, strategies, spec, config, bundles=bundles)
        csv1 = run1.ledgers[strategies[0].label].to_frame().to_csv()
        csv2 = run2.ledgers[strategies[0].label].to_frame().to_csv()
        assert csv1 == csv2

    def test_derive_seed_pure(self):
        s1 = derive_seed(7, "2020-01-01", "t")
        s2 = derive_seed(7, "2020-01-01", "t")
        assert s1 == s2
        assert derive_seed(7, "2020-01-01", "nts") != s1
        assert derive_seed(8, "2020-01-01", "t") != s1


class TestDefectHandling:
    def test_flat_stretch_carries_weights(self):
        # constant from index 25 on: windows 25..30 hold a fully flat column
        panel = simulated_panel(n_assets=2, n_obs=130, seed=23)
        values = panel.values.copy()
        values[25:, 1] = 0.0
        broken = AlignedReturns(dates=panel.dates, asset_ids=panel.asset_ids, values=values)
        config = small_config(models=("agnormal",), risk_measures=("sd",),
                              lambdas=(0.0,), cost_aversions=(0.01,))
        strategies = strategy_grid(config)
        result = run_experiment(broken, strategies, WindowSpec(length=100), config)
        ledger = next(iter(result.ledgers.values()))
        assert len(ledger) == 30  # ledger length never changes
        flagged = [k for k, d in enumerate(ledger.defects) if d]
        assert flagged, "defective windows must be logged"
        assert result.defects
        for k in flagged:
            # skipped day: weights held, no reallocation cost
            np.testing.assert_array_equal(ledger.weights[k], ledger.weights[k - 1])
            assert ledger.costs[k] == 0.0


class TestPerformanceTable:
    def _constant_ledger(self, net=0.001, days=100, lam=0.0):
        s = StrategySpec("agt", "sd", lam, 0.0)
        ledger = RunLedger(strategy=s, asset_ids=("a", "b"))
        for d in daily_dates(days):
            ledger.append(date=d, weights=[0.5, 0.5], cost=0.0, gross=net, net=net,
                          var_a=[0.1, 0.1], avar_a=[0.2, 0.2], var_p=0.1, avar_p=0.2)
        return {s.label: ledger}

    def test_constant_returns_hand_values(self):
        table = performance_table(self._constant_ledger())
        row = table.iloc[0]
        assert row["cumulative_return"] == pytest.approx(0.1, rel=1e-9)
        assert row["sd"] == pytest.approx(0.0, abs=1e-15)
        assert row["avar"] == pytest.approx(-0.001, rel=1e-12)
        assert math.isnan(row["fh"])  # no losses: not a gamble
        assert math.isnan(row["ret_over_fh"])

    def test_ratio_columns_exact(self, experiment):
        table = performance_table(experiment.ledgers)
        for _, row in table.iterrows():
            if not math.isnan(row["ret_over_sd"]):
                assert row["ret_over_sd"] == row["cumulative_return"] / row["sd"]
            if not math.isnan(row["ret_over_avar"]):
                assert row["ret_over_avar"] == row["cumulative_return"] / row["avar"]

    def test_empty_ledger_rejected(self):
        s = StrategySpec("agt", "sd")
        with pytest.raises(InsufficientDataError):
            performance_table({s.label: RunLedger(strategy=s, asset_ids=("a",))})


class TestCumulativeCurve:
    def test_single_day(self):
        s = StrategySpec("agt", "sd")
        ledger = RunLedger(strategy=s, asset_ids=("a",))
        ledger.append(date="2021-01-01", weights=[1.0], cost=0.0, gross=0.02, net=0.02,
                      var_a=[0.1], avar_a=[0.1], var_p=0.1, avar_p=0.1)
        curve = cumulative_curve(ledger)
        assert list(curve.values) == [0.02]

    def test_all_zero_flat(self):
        s = StrategySpec("agt", "sd")
        ledger = RunLedger(strategy=s, asset_ids=("a",))
        for d in daily_dates(5):
            ledger.append(date=d, weights=[1.0], cost=0.0, gross=0.0, net=0.0,
                          var_a=[0.1], avar_a=[0.1], var_p=0.1, avar_p=0.1)
        assert np.all(cumulative_curve(ledger).values == 0.0)

    def test_compound_accounting(self):
        s = StrategySpec("agt", "sd")
        ledger = RunLedger(strategy=s, asset_ids=("a",))
        for d, net in zip(daily_dates(3), (0.1, 0.1, -0.05)):
            ledger.append(date=d, weights=[1.0], cost=0.0, gross=net, net=net,
                          var_a=[0.1], avar_a=[0.1], var_p=0.1, avar_p=0.1)
        curve = cumulative_curve(ledger, accounting="compound")
        assert curve.iloc[-1] == pytest.approx(1.1 * 1.1 * 0.95 - 1, rel=1e-12)


@pytest.fixture(scope="module")
def suite(panel, config, bundles):
    # 130-day panel -> 30 forecast days: CLR is undersized but the
    # structure (tables, periods, p-value ranges) is fully exercised.
    return statistical_suite(panel, WindowSpec(length=config.window_length),
                             config, bundles=bundles)


class TestStatisticalSuite:
    def test_rejection_tables_shape(self, suite, panel, config):
        for table in (suite.ks_table, suite.ad_table):
            assert list(table.index) == list(panel.asset_ids)
            assert table.shape == (2, 9)  # 3 levels x 3 models
            assert (table.values >= 0).all()
            assert (table.values <= suite.n_windows).all()

    def test_rejections_monotone_in_level(self, suite):
        for table in (suite.ks_table, suite.ad_table):
            for model in ("agnormal", "agt", "agnts"):
                v1 = table.loc[:, ("0.01", model)].values
                v5 = table.loc[:, ("0.05", model)].values
                v10 = table.loc[:, ("0.1", model)].values
                assert np.all(v1 <= v5) and np.all(v5 <= v10)

    def test_backtest_report_structure(self, suite, panel):
        report = suite.backtest_report
        assert set(report["model"].unique()) == {"agnormal", "agt", "agnts"}
        assert set(report["asset"].unique()) == set(panel.asset_ids)
        assert "full" in set(report["period"].unique())
        for col in ("clr", "blr", "as"):
            vals = report[col].dropna()
            assert ((vals >= 0) & (vals <= 1)).all()

    def test_single_window_rejection_counts_binary(self, panel):
        config = small_config(models=("agnormal",), window_length=129)
        suite = statistical_suite(panel, WindowSpec(length=129), config)
        assert suite.n_windows == 2
        assert set(np.unique(suite.ks_table.values)).issubset({0, 1, 2})


class TestPeriodSplit:
    def test_split_periods_with_breaks(self):
        from ntsfolio.harness import split_periods

        dates = daily_dates(100)
        breaks = [str(dates[30]), str(dates[60])]
        masks = split_periods(dates, breaks)
        assert set(masks) == {"full", "period1", "period2", "period3"}
        assert masks["period1"].sum() == 30
        assert masks["period2"].sum() == 30
        assert masks["period3"].sum() == 40
        combined = masks["period1"] | masks["period2"] | masks["period3"]
        assert np.array_equal(combined, masks["full"])

    def test_breaks_outside_range_collapse(self):
        from ntsfolio.harness import split_periods

        dates = daily_dates(10)
        masks = split_periods(dates, ["1990-01-01", "1995-01-01"])
        assert "full" in masks
        assert masks["full"].sum() == 10


class TestCheckpointing:
    def test_resume_reproduces_forecasts(self, tmp_path):
        panel = simulated_panel(n_assets=2, n_obs=115, seed=29)
        config = small_config(models=("agt",), checkpoint_dir=str(tmp_path / "ckpt"),
                              window_length=100)
        spec = WindowSpec(length=100)
        first = estimate_windows(panel, spec, config, models=("agt",), need_mnts=False)
        assert (tmp_path / "ckpt" / "window_00000.json").exists()
        second = estimate_windows(panel, spec, config, models=("agt",), need_mnts=False)
        for b1, b2 in zip(first, second):
            f1 = b1.forecasts["t"]
            f2 = b2.forecasts["t"]
            for a, b in zip(f1, f2):
                assert a.mu_next == b.mu_next
                assert a.sigma_next == b.sigma_next


class TestParallelEstimation:
    def test_workers_match_sequential(self):
        panel = simulated_panel(n_assets=2, n_obs=110, seed=31)
        spec = WindowSpec(length=100)
        seq = estimate_windows(panel, spec, small_config(models=("agnormal",), workers=1),
                               models=("agnormal",), need_mnts=False)
        par = estimate_windows(panel, spec, small_config(models=("agnormal",), workers=2),
                               models=("agnormal",), need_mnts=False)
        assert len(seq) == len(par) == 11
        for b1, b2 in zip(seq, par):
            assert b1.fits["normal"][0].params == b2.fits["normal"][0].params
            assert b1.fits["normal"][0].loglik == b2.fits["normal"][0].loglik
