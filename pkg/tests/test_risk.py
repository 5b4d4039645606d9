"""VaR, AVaR, SD, portfolio outcomes, and the Foster-Hart reserve."""

import math

import numpy as np
import pytest
from scipy.stats import norm

from ntsfolio.errors import ContractError, InsufficientDataError, NotAGambleError
from ntsfolio.risk import (
    GambleSample,
    ScenarioMatrix,
    as_gamble,
    avar,
    foster_hart,
    portfolio_outcomes,
    sd,
    var,
)


def random_gamble(rng, n=None):
    """Outcome vector guaranteed to be a gamble."""
    n = n or int(rng.integers(10, 200))
    while True:
        g = rng.normal(0.05, 1.0, n)
        if np.mean(g) > 0 and np.min(g) < 0:
            return g


class TestVar:
    def test_four_point_quantile(self):
        out = np.array([-3.0, -1.0, 1.0, 3.0])
        assert var(out, 0.25) == 3.0

    def test_normal_oracle(self):
        rng = np.random.default_rng(1)
        draws = rng.standard_normal(10**6)
        assert var(draws, 0.01) == pytest.approx(norm.ppf(0.99), abs=0.02)

    def test_all_gains_gives_negative_var(self):
        out = np.linspace(0.5, 2.0, 200)
        assert var(out, 0.01) < 0.0

    def test_insufficient_tail(self):
        with pytest.raises(InsufficientDataError):
            var(np.ones(10), 0.01)


class TestAvar:
    def test_single_worst_outcome(self):
        out = np.array([-3.0, -1.0, 1.0, 3.0])
        assert avar(out, 0.25) == 3.0

    def test_two_worst_outcomes(self):
        out = np.array([-3.0, -1.0, 1.0, 3.0])
        assert avar(out, 0.5) == 2.0

    def test_normal_oracle(self):
        rng = np.random.default_rng(2)
        draws = rng.standard_normal(10**6)
        analytic = norm.pdf(norm.ppf(0.01)) / 0.01
        assert avar(draws, 0.01) == pytest.approx(analytic, abs=0.03)

    def test_dominates_var_randomized(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            n = int(rng.integers(5, 300))
            out = rng.standard_t(4, n)
            eps = float(rng.uniform(1.0 / n, 0.8))
            assert avar(out, eps) >= var(out, eps)

    def test_subadditivity_on_paired_samples(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            n = int(rng.integers(20, 200))
            g1 = rng.standard_normal(n)
            g2 = rng.standard_t(5, n) * 2
            eps = float(rng.uniform(2.0 / n, 0.5))
            assert avar(g1 + g2, eps) <= avar(g1, eps) + avar(g2, eps) + 1e-12


class TestSd:
    def test_constant_vector(self):
        assert sd(np.full(10, 0.75)) == 0.0  # dyadic constant: exact mean
        assert sd(np.full(10, 0.77)) == pytest.approx(0.0, abs=1e-14)

    def test_two_point_hand_value(self):
        assert sd(np.array([-1.0, 1.0])) == pytest.approx(math.sqrt(2), rel=1e-12)

    def test_homogeneity(self):
        rng = np.random.default_rng(5)
        out = rng.standard_normal(100)
        assert sd(3.5 * out) == pytest.approx(3.5 * sd(out), rel=1e-12)

    def test_single_point_rejected(self):
        with pytest.raises(InsufficientDataError):
            sd(np.array([1.0]))


class TestPortfolioOutcomes:
    def test_unit_vector_selects_column(self):
        rng = np.random.default_rng(6)
        s = ScenarioMatrix(rng.standard_normal((50, 3)), ("a", "b", "c"))
        np.testing.assert_array_equal(portfolio_outcomes(s, [1.0, 0.0, 0.0]), s.values[:, 0])

    def test_zero_weights_give_zero(self):
        s = ScenarioMatrix(np.ones((10, 2)), ("a", "b"))
        np.testing.assert_array_equal(portfolio_outcomes(s, [0.0, 0.0]), np.zeros(10))

    def test_row_means(self):
        rng = np.random.default_rng(7)
        m = rng.standard_normal((3, 2))
        s = ScenarioMatrix(m, ("a", "b"))
        np.testing.assert_allclose(portfolio_outcomes(s, [0.5, 0.5]), m.mean(axis=1), rtol=1e-12)

    def test_dimension_mismatch(self):
        s = ScenarioMatrix(np.ones((10, 2)), ("a", "b"))
        with pytest.raises(ContractError):
            portfolio_outcomes(s, [1.0, 0.0, 0.0])


class TestFosterHart:
    def test_analytic_oracle(self):
        # (1 + 120/R)(1 - 100/R) = 1 solves to R = 600.
        assert foster_hart(np.array([120.0, -100.0])) == pytest.approx(600.0, rel=1e-6)

    def test_scaled_oracle(self):
        assert foster_hart(np.array([1.2, -1.0])) == pytest.approx(6.0, rel=1e-6)

    def test_homogeneity_randomized(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            g = random_gamble(rng)
            base = foster_hart(g)
            for c in (0.01, 1.0, 100.0):
                assert foster_hart(c * g) == pytest.approx(c * base, rel=1e-6)

    def test_root_solves_equation(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            g = random_gamble(rng)
            r = foster_hart(g)
            assert abs(np.mean(np.log1p(g / r))) < 1e-9

    def test_root_exceeds_max_loss(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            g = random_gamble(rng)
            assert foster_hart(g) > -np.min(g)

    def test_objective_single_crossing_and_monotone_to_root(self):
        # mean log(1 + g/R) rises from -inf, crosses zero exactly once, and
        # only then decays back toward 0+; bisection is valid because the
        # sign identifies the side of the root everywhere on (L, inf).
        rng = np.random.default_rng(11)
        for _ in range(50):
            g = random_gamble(rng)
            loss = -np.min(g)
            root = foster_hart(g)
            grid = loss * (1 + np.geomspace(1e-6, 1e3, 60))
            values = np.array([np.mean(np.log1p(g / r)) for r in grid])
            assert np.sum(np.diff(np.sign(values)) != 0) == 1  # one crossing
            assert np.all(values[grid < root] < 0)
            assert np.all(values[grid > root * (1 + 1e-8)] > 0)
            below = values[grid <= root]
            assert np.all(np.diff(below) > 0)  # strictly increasing up to the root

    def test_all_gains_not_a_gamble(self):
        with pytest.raises(NotAGambleError) as err:
            foster_hart(np.array([1.0, 2.0, 3.0]))
        assert err.value.reason == "losses"

    def test_negative_mean_not_a_gamble(self):
        with pytest.raises(NotAGambleError) as err:
            foster_hart(np.array([-10.0, 1.0]))
        assert err.value.reason == "expectation"

    def test_reserve_hint_matches_cold_solve(self):
        rng = np.random.default_rng(12)
        g = random_gamble(rng, n=500)
        cold = foster_hart(g)
        warm = foster_hart(g, reserve_hint=cold * 1.01)
        assert warm == pytest.approx(cold, rel=1e-8)

    def test_gamble_sample_validation(self):
        g = as_gamble(np.array([1.0, -0.5]))
        assert isinstance(g, GambleSample)
        assert g.max_loss == 0.5
