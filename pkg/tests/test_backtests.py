"""CLR, BLR tail, and AS backtests of VaR/AVaR forecast streams."""

import math

import numpy as np
import pytest
from scipy.stats import chi2, norm

from ntsfolio.backtests import (
    BreachSeries,
    ForecastStream,
    as_statistic,
    as_test,
    blr_tail_test,
    clr_test,
)
from ntsfolio.errors import ContractError, ValidationError

from conftest import daily_dates


def spread_breach_indicators(t_len, n_breaches):
    """Breach series with no consecutive pair."""
    ind = np.zeros(t_len, dtype=int)
    pos = np.linspace(0, t_len - 2, n_breaches).astype(int)
    ind[pos] = 1
    assert np.all((ind[:-1] + ind[1:]) < 2)
    return ind


def normal_stream(t_len, rng, epsilon=0.05, realized=None):
    # forecast levels consistent with the test's epsilon
    var_level = norm.ppf(1 - epsilon)
    avar_level = norm.pdf(norm.ppf(epsilon)) / epsilon
    realized = realized if realized is not None else rng.standard_normal(t_len)
    return ForecastStream(
        dates=daily_dates(t_len),
        var_forecasts=np.full(t_len, var_level),
        avar_forecasts=np.full(t_len, avar_level),
        realized=realized,
        cdf_forecasts=[norm.cdf] * t_len,
        simulator=lambda n, r: r.standard_normal((n, t_len)),
    )


class TestClr:
    def test_breach_rate_at_nominal_gives_zero_lr_uc(self):
        ind = spread_breach_indicators(1000, 10)
        res = clr_test(BreachSeries(ind), epsilon=0.01)
        assert res["lr_uc"] == pytest.approx(0.0, abs=1e-12)
        assert res["p_value"] > 0.5

    def test_25_breaches_brute_force_likelihood(self):
        # brute-force binomial likelihood evaluation at eps vs the MLE rate
        ind = spread_breach_indicators(1000, 25)
        res = clr_test(BreachSeries(ind), epsilon=0.01)
        ll_null = 25 * math.log(0.01) + 975 * math.log(0.99)
        ll_mle = 25 * math.log(0.025) + 975 * math.log(0.975)
        expected = -2 * (ll_null - ll_mle)
        assert res["lr_uc"] == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(16.04, abs=0.01)
        assert res["p_value"] == pytest.approx(chi2.sf(res["lr_cc"], 2), rel=1e-12)

    def test_zero_breaches_convention(self):
        res = clr_test(BreachSeries(np.zeros(100, dtype=int)), epsilon=0.01)
        assert res["lr_uc"] == pytest.approx(-2 * 100 * math.log(0.99), rel=1e-12)
        assert res["lr_ind"] == 0.0

    def test_cc_is_sum_of_parts(self):
        rng = np.random.default_rng(41)
        for _ in range(50):
            ind = (rng.random(500) < 0.03).astype(int)
            res = clr_test(BreachSeries(ind), epsilon=0.025)
            assert res["lr_cc"] == res["lr_uc"] + res["lr_ind"]

    def test_clustered_breaches_rejected(self):
        ind = np.zeros(1000, dtype=int)
        ind[100:110] = 1  # ten consecutive breaches
        res = clr_test(BreachSeries(ind), epsilon=0.01)
        assert res["p_value"] < 0.01

    def test_size_calibration(self):
        rng = np.random.default_rng(42)
        t_len, eps, reps = 2500, 0.08, 500
        rej = 0
        for _ in range(reps):
            ind = (rng.random(t_len) < eps).astype(int)
            if clr_test(BreachSeries(ind), eps)["p_value"] < 0.05:
                rej += 1
        assert 0.03 <= rej / reps <= 0.07

    def test_breach_indicators_match_brute_force(self):
        rng = np.random.default_rng(43)
        realized = rng.standard_normal(300)
        var_f = np.abs(rng.standard_normal(300)) + 0.5
        b = BreachSeries.from_arrays(realized, var_f)
        brute = np.array([1 if -r > v else 0 for r, v in zip(realized, var_f)])
        np.testing.assert_array_equal(b.indicators, brute)


class TestBlr:
    def test_null_point_gives_zero_lr(self):
        # PITs already standard normal in the tail and censored MLE at (0,1)
        rng = np.random.default_rng(44)
        stream = normal_stream(2000, rng)
        res = blr_tail_test(stream, epsilon=0.05)
        assert res["lr"] >= 0.0
        assert res["p_value"] > 0.01

    def test_size_calibration(self):
        rng = np.random.default_rng(45)
        reps, t_len = 500, 1000
        rej = 0
        for _ in range(reps):
            stream = normal_stream(t_len, rng)
            if blr_tail_test(stream, epsilon=0.05)["p_value"] < 0.05:
                rej += 1
        assert 0.03 <= rej / reps <= 0.07

    def test_power_against_heavy_tails(self):
        # realized t(3) scaled to unit variance against normal forecasts
        rng = np.random.default_rng(46)
        pvals = []
        for _ in range(20):
            realized = rng.standard_t(3, 1000) / math.sqrt(3.0)
            stream = normal_stream(1000, rng, realized=realized)
            pvals.append(blr_tail_test(stream, epsilon=0.05)["p_value"])
        assert np.median(pvals) < 0.05

    def test_no_tail_observations(self):
        rng = np.random.default_rng(47)
        realized = np.abs(rng.standard_normal(500))  # no losses at all
        stream = normal_stream(500, rng, realized=realized)
        res = blr_tail_test(stream, epsilon=0.01)
        assert res["n_tail"] == 0
        assert res["lr"] == pytest.approx(-2 * 500 * math.log(0.99), rel=1e-9)

    def test_pit_clip_counter(self):
        rng = np.random.default_rng(48)
        realized = rng.standard_normal(500)
        realized[0] = -50.0  # PIT underflows to 0
        stream = normal_stream(500, rng, realized=realized)
        res = blr_tail_test(stream, epsilon=0.05)
        assert res["n_clipped"] >= 1


class TestAs:
    def test_hand_case_zero(self):
        stream = ForecastStream(
            dates=daily_dates(2),
            var_forecasts=np.array([5.0, 5.0]),
            avar_forecasts=np.array([10.0, 10.0]),
            realized=np.array([-10.0, 1.0]),
        )
        z = as_statistic(stream.realized, stream.var_forecasts, stream.avar_forecasts, epsilon=0.5)
        assert z == 0.0

    def test_no_breaches_gives_one(self):
        z = as_statistic(np.full(100, 0.01), np.full(100, 2.3), np.full(100, 2.7), epsilon=0.01)
        assert z == 1.0

    def test_nonpositive_avar_contract(self):
        with pytest.raises(ContractError):
            as_statistic(np.zeros(10), np.ones(10), np.zeros(10), epsilon=0.1)

    def test_simulated_z_centered_at_zero_under_null(self):
        rng = np.random.default_rng(49)
        stream = normal_stream(250, rng)
        res = as_test(stream, epsilon=0.05, n_sim=4000, seed=1,
                      )
        # under the correct model the statistic is centered at zero
        assert abs(res["z_sim_mean"]) < 0.05

    def test_p_value_reproducible_and_monotone(self):
        rng = np.random.default_rng(50)
        stream = normal_stream(250, rng)
        res1 = as_test(stream, epsilon=0.05, n_sim=2000, seed=7)
        res2 = as_test(stream, epsilon=0.05, n_sim=2000, seed=7)
        assert res1["p_value"] == res2["p_value"]
        # a stream with deeper losses must get a smaller p-value (same seed)
        worse = ForecastStream(
            dates=stream.dates,
            var_forecasts=stream.var_forecasts,
            avar_forecasts=stream.avar_forecasts,
            realized=np.where(stream.realized < -1.0, stream.realized * 3, stream.realized),
            cdf_forecasts=stream.cdf_forecasts,
            simulator=stream.simulator,
        )
        res3 = as_test(worse, epsilon=0.05, n_sim=2000, seed=7)
        assert res3["z_stat"] < res1["z_stat"]
        assert res3["p_value"] <= res1["p_value"]

    def test_size_calibration(self):
        rng = np.random.default_rng(51)
        reps, t_len = 500, 250
        rej = 0
        for k in range(reps):
            stream = normal_stream(t_len, rng)
            if as_test(stream, epsilon=0.05, n_sim=1000, seed=10_000 + k)["p_value"] < 0.05:
                rej += 1
        assert 0.03 <= rej / reps <= 0.07


class TestScalingInvariance:
    def test_units_cancel_in_all_three_tests(self):
        rng = np.random.default_rng(52)
        t_len = 600
        realized = rng.standard_normal(t_len)
        scale = 37.5
        base = normal_stream(t_len, rng, realized=realized)
        scaled = ForecastStream(
            dates=base.dates,
            var_forecasts=base.var_forecasts * scale,
            avar_forecasts=base.avar_forecasts * scale,
            realized=realized * scale,
            cdf_forecasts=[lambda x, s=scale: norm.cdf(x / s)] * t_len,
            simulator=lambda n, r, s=scale: r.standard_normal((n, t_len)) * s,
        )
        b1 = BreachSeries.from_stream(base)
        b2 = BreachSeries.from_stream(scaled)
        np.testing.assert_array_equal(b1.indicators, b2.indicators)
        r1 = clr_test(b1, 0.05)
        r2 = clr_test(b2, 0.05)
        assert r1["lr_cc"] == pytest.approx(r2["lr_cc"], rel=1e-12)
        p1 = blr_tail_test(base, 0.05)
        p2 = blr_tail_test(scaled, 0.05)
        assert p1["lr"] == pytest.approx(p2["lr"], rel=1e-6)
        z1 = as_statistic(base.realized, base.var_forecasts, base.avar_forecasts, 0.05)
        z2 = as_statistic(scaled.realized, scaled.var_forecasts, scaled.avar_forecasts, 0.05)
        assert z1 == pytest.approx(z2, rel=1e-12)

    def test_stream_validation(self):
        with pytest.raises(ValidationError):
            ForecastStream(
                dates=daily_dates(3),
                var_forecasts=np.array([2.0, 2.0, 2.0]),
                avar_forecasts=np.array([1.0, 2.5, 2.5]),  # below var on day 1
                realized=np.zeros(3),
            )
