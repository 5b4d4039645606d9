"""Scenario-based risk measures: SD, VaR, AVaR, and the Foster-Hart reserve.

All measures operate on equiprobable outcome vectors (simulated or realized
returns) and report losses with a positive sign: VaR of an all-gain sample is
negative. Every measure here is positively homogeneous, which the portfolio
objective relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, InsufficientDataError, NotAGambleError, ValidationError


@dataclass(frozen=True)
class ScenarioMatrix:
    """N x n matrix of simulated one-day-ahead returns with RNG provenance."""

    values: np.ndarray
    asset_ids: tuple
    seed: object = None

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.ndim != 2:
            raise ValidationError("scenario values must be an N x n matrix")
        if self.values.shape[1] != len(self.asset_ids):
            raise ValidationError(
                f"{self.values.shape[1]} columns vs {len(self.asset_ids)} asset ids"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("scenario values must be finite")

    @property
    def n_scenarios(self) -> int:
        return self.values.shape[0]

    @property
    def n_assets(self) -> int:
        return self.values.shape[1]

    def require_rows(self, floor: int = 1000) -> "ScenarioMatrix":
        if self.n_scenarios < floor:
            raise InsufficientDataError(
                f"{self.n_scenarios} scenarios below the evaluation floor of {floor}"
            )
        return self


@dataclass(frozen=True)
class GambleSample:
    """Equiprobable portfolio outcomes with positive mean and possible loss."""

    outcomes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "outcomes", np.asarray(self.outcomes, dtype=float))
        g = self.outcomes
        if g.ndim != 1 or len(g) == 0 or not np.all(np.isfinite(g)):
            raise ValidationError("outcomes must be a finite 1-D vector")
        if np.mean(g) <= 0:
            raise NotAGambleError("sample mean is not positive", reason="expectation")
        if np.min(g) >= 0:
            raise NotAGambleError("sample has no negative outcome", reason="losses")

    @property
    def max_loss(self) -> float:
        return float(-np.min(self.outcomes))


def as_gamble(outcomes) -> GambleSample:
    """Validate a raw outcome vector as a gamble (raises NotAGambleError)."""
    return outcomes if isinstance(outcomes, GambleSample) else GambleSample(outcomes)


def is_gamble(outcomes) -> bool:
    g = np.asarray(outcomes, dtype=float)
    return bool(len(g) and np.mean(g) > 0 and np.min(g) < 0)


def _tail_size(n: int, epsilon: float) -> int:
    if not 0 < epsilon < 1:
        raise ValidationError(f"epsilon must lie in (0, 1), got {epsilon}")
    if n * epsilon < 1:
        raise InsufficientDataError(
            f"tail of {n} outcomes at epsilon={epsilon} holds no full observation"
        )
    return math.ceil(n * epsilon)


def var(outcomes, epsilon: float) -> float:
    """Value at Risk: the epsilon-tail loss quantile (lower order statistic).

    Equals the k-th largest loss with k = ceil(N * epsilon); positive for a
    loss, legitimately negative when even the worst outcome is a gain.
    """
    g = np.asarray(outcomes, dtype=float)
    k = _tail_size(len(g), epsilon)
    return float(-np.partition(g, k - 1)[k - 1])


def avar(outcomes, epsilon: float) -> float:
    """Average VaR (expected shortfall): mean of the worst ceil(N*epsilon) losses."""
    g = np.asarray(outcomes, dtype=float)
    k = _tail_size(len(g), epsilon)
    return float(-np.mean(np.partition(g, k - 1)[:k]))


def tail_mean_loss(outcomes, epsilon: float) -> float:
    """AVaR with the tail clamped to at least one observation.

    Used for realized-performance reporting on short samples where
    N * epsilon < 1; identical to :func:`avar` otherwise.
    """
    g = np.asarray(outcomes, dtype=float)
    k = max(1, math.ceil(len(g) * epsilon))
    return float(-np.mean(np.partition(g, k - 1)[:k]))


def sd(outcomes) -> float:
    """Sample standard deviation (n-1 denominator)."""
    g = np.asarray(outcomes, dtype=float)
    if len(g) < 2:
        raise InsufficientDataError("standard deviation needs at least 2 outcomes")
    return float(np.std(g, ddof=1))


def portfolio_outcomes(scenarios, w) -> np.ndarray:
    """Row-wise portfolio returns: scenarios @ w."""
    values = scenarios.values if isinstance(scenarios, ScenarioMatrix) else np.asarray(scenarios, dtype=float)
    w = np.asarray(w, dtype=float)
    if values.shape[1] != len(w):
        raise ContractError(f"weight vector of length {len(w)} vs {values.shape[1]} assets")
    return values @ w


def foster_hart(outcomes, tol: float = 1e-10, reserve_hint: float | None = None) -> float:
    """Foster-Hart riskiness of a gamble sample.

    Returns the unique reserve R > max-loss solving

        mean(log(1 + g_i / R)) == 0.

    The root always exceeds the maximal loss L = -min(g). Internally the
    equation is solved in u = L / R on (0, 1), where the objective is concave
    with a sign change bracketing the root; safeguarded Newton steps inside a
    shrinking bisection bracket give superlinear convergence. ``tol`` is the
    relative tolerance on R. ``reserve_hint`` (a previous solution) tightens
    the initial bracket when available.
    """
    gamble = as_gamble(outcomes)
    g = gamble.outcomes
    L = gamble.max_loss
    gn = g / L  # min(gn) == -1 exactly

    def phi(u):
        return float(np.mean(np.log1p(gn * u)))

    def dphi(u):
        return float(np.mean(gn / (1.0 + gn * u)))

    # Bracket [lo, hi] with phi(lo) >= 0 > phi(hi); the root of interest is the
    # upper zero of the concave phi (phi(0) = 0, phi'(0) = mean > 0).
    lo, hi = 0.0, 1.0 - 1e-9
    f_hi = phi(hi)
    if f_hi >= 0.0:
        # Root is squeezed against u = 1 (rare: tiny loss probability);
        # R = L / u stays within ~1e-9 of L.
        while f_hi >= 0.0 and 1.0 - hi > 1e-15:
            hi = 1.0 - (1.0 - hi) / 16.0
            f_hi = phi(hi)
        if f_hi >= 0.0:
            return L / hi
    if reserve_hint is not None and reserve_hint > L:
        u0 = L / reserve_hint
        if 0.0 < u0 < hi:
            f0 = phi(u0)
            if f0 > 0.0:
                lo = u0
            elif f0 < 0.0:
                hi, f_hi = u0, f0
            else:
                return L / u0

    u, fu = hi, f_hi
    for _ in range(300):
        if hi - lo <= tol * hi:
            break
        d = dphi(u)
        cand = u - fu / d if (np.isfinite(d) and d != 0.0) else math.nan
        u_new = cand if lo < cand < hi else 0.5 * (lo + hi)
        small_step = abs(u_new - u) <= 0.5 * tol * u_new
        u = u_new
        fu = phi(u)
        if fu == 0.0:
            return L / u
        if fu > 0.0:
            lo = u
        else:
            hi = u
        # Newton from the right shrinks hi without moving lo; terminate on
        # step size once the objective is resolved too.
        if small_step and abs(fu) <= tol:
            break
    return L / (0.5 * (lo + hi)) if hi - lo <= tol * hi else L / u
