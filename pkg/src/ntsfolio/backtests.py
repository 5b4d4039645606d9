"""Out-of-sample validation of VaR and AVaR forecast streams.

Three tests, all on loss-positive forecasts:

* Christoffersen conditional coverage (CLR): joint likelihood ratio for
  correct breach frequency and first-order independence, chi-square(2).
* Berkowitz tail (BLR): censored Gaussian likelihood ratio on the
  probability-integral transforms below the epsilon threshold, chi-square(2).
* Acerbi-Szekely (AS): direct expected-shortfall statistic with a simulated
  left-tail p-value.

Empty transition classes contribute zero to the Markov likelihood (the limit
convention), so a stream with no breaches yields LR_ind = 0 rather than NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtri
from scipy.stats import chi2, norm

from .errors import ContractError, InsufficientDataError, ValidationError

_PIT_CLIP = 1e-10


@dataclass(frozen=True)
class ForecastStream:
    """Aligned per-day forecasts and realizations for one asset and model.

    ``var_forecasts`` / ``avar_forecasts`` are loss-positive. ``cdf_forecasts``
    holds one evaluable forecast CDF per day (used by the BLR tail test) and
    ``simulator(n_paths, rng)`` draws i.i.d. return paths of the stream's
    length from the per-day forecast laws (used by the AS test).
    """

    dates: tuple
    var_forecasts: np.ndarray
    avar_forecasts: np.ndarray
    realized: np.ndarray
    cdf_forecasts: Sequence[Callable] | None = None
    simulator: Callable | None = None

    def __post_init__(self):
        object.__setattr__(self, "var_forecasts", np.asarray(self.var_forecasts, dtype=float))
        object.__setattr__(self, "avar_forecasts", np.asarray(self.avar_forecasts, dtype=float))
        object.__setattr__(self, "realized", np.asarray(self.realized, dtype=float))
        n = len(self.dates)
        for name in ("var_forecasts", "avar_forecasts", "realized"):
            if len(getattr(self, name)) != n:
                raise ValidationError(f"{name} length differs from dates length {n}")
        if np.any(self.avar_forecasts < self.var_forecasts - 1e-12):
            raise ValidationError("avar forecast falls below var forecast")
        if self.cdf_forecasts is not None and len(self.cdf_forecasts) != n:
            raise ValidationError("need one forecast CDF per day")

    def __len__(self):
        return len(self.dates)


@dataclass(frozen=True)
class BreachSeries:
    """VaR breach indicators I_t = 1{-realized_t > var_t}."""

    indicators: np.ndarray

    def __post_init__(self):
        ind = np.asarray(self.indicators)
        if not np.all((ind == 0) | (ind == 1)):
            raise ValidationError("indicators must be 0/1")
        object.__setattr__(self, "indicators", ind.astype(np.int8))

    @classmethod
    def from_stream(cls, f: ForecastStream) -> "BreachSeries":
        return cls(indicators=(-f.realized > f.var_forecasts).astype(np.int8))

    @classmethod
    def from_arrays(cls, realized, var_forecasts) -> "BreachSeries":
        realized = np.asarray(realized, dtype=float)
        var_forecasts = np.asarray(var_forecasts, dtype=float)
        return cls(indicators=(-realized > var_forecasts).astype(np.int8))

    def __len__(self):
        return len(self.indicators)


def _xlogy(x: float, y: float) -> float:
    # Convention 0 * log(0) = 0 keeps empty classes out of the likelihood.
    return 0.0 if x == 0 else x * math.log(y)


def clr_test(breaches, epsilon: float, min_obs: int = 50) -> dict:
    """Conditional coverage likelihood-ratio test of a breach series.

    Returns ``lr_uc`` (unconditional coverage), ``lr_ind`` (independence),
    ``lr_cc = lr_uc + lr_ind`` and its chi-square(2) upper-tail p-value.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValidationError("epsilon must lie in (0, 1)")
    ind = breaches.indicators if isinstance(breaches, BreachSeries) else BreachSeries(breaches).indicators
    t_len = len(ind)
    if t_len < min_obs:
        raise InsufficientDataError(f"CLR test needs at least {min_obs} days, got {t_len}")
    n1 = int(ind.sum())
    pi_hat = n1 / t_len
    lr_uc = -2.0 * (
        _xlogy(n1, epsilon) + _xlogy(t_len - n1, 1.0 - epsilon)
        - _xlogy(n1, pi_hat if n1 else 1.0) - _xlogy(t_len - n1, 1.0 - pi_hat if n1 < t_len else 1.0)
    )
    prev, curr = ind[:-1], ind[1:]
    n00 = int(np.sum((prev == 0) & (curr == 0)))
    n01 = int(np.sum((prev == 0) & (curr == 1)))
    n10 = int(np.sum((prev == 1) & (curr == 0)))
    n11 = int(np.sum((prev == 1) & (curr == 1)))
    pi01 = n01 / (n00 + n01) if (n00 + n01) else 0.0
    pi11 = n11 / (n10 + n11) if (n10 + n11) else 0.0
    pi_all = (n01 + n11) / (t_len - 1)
    log_l0 = _xlogy(n01 + n11, pi_all if pi_all else 1.0) + _xlogy(n00 + n10, 1.0 - pi_all if pi_all < 1 else 1.0)
    log_l1 = (
        _xlogy(n01, pi01 if pi01 else 1.0) + _xlogy(n00, 1.0 - pi01 if pi01 < 1 else 1.0)
        + _xlogy(n11, pi11 if pi11 else 1.0) + _xlogy(n10, 1.0 - pi11 if pi11 < 1 else 1.0)
    )
    lr_ind = max(-2.0 * (log_l0 - log_l1), 0.0)
    lr_cc = lr_uc + lr_ind
    return {
        "lr_uc": float(lr_uc),
        "lr_ind": float(lr_ind),
        "lr_cc": float(lr_cc),
        "p_value": float(chi2.sf(lr_cc, df=2)),
        "n_breaches": n1,
    }


def _censored_loglik(z: np.ndarray, threshold: float, mu: float, sigma: float) -> float:
    tail = z < threshold
    n_cens = int(np.sum(~tail))
    ll = 0.0
    if np.any(tail):
        zt = z[tail]
        ll += float(np.sum(norm.logpdf(zt, loc=mu, scale=sigma)))
    if n_cens:
        ll += n_cens * float(norm.logsf(threshold, loc=mu, scale=sigma))
    return ll


def blr_tail_test(f: ForecastStream, epsilon: float) -> dict:
    """Berkowitz censored-tail likelihood-ratio test of the forecast CDFs.

    Transforms realizations through the per-day forecast CDFs and the normal
    quantile, censors at the epsilon threshold, and compares the censored
    Gaussian likelihood at (.0, 1) with the censored MLE; chi-square(2).
    PIT values are clipped away from {0, 1}; the clip count is reported.
    """
    from scipy.optimize import minimize

    if f.cdf_forecasts is None:
        raise ValidationError("BLR tail test needs per-day forecast CDFs")
    if not 0.0 < epsilon < 1.0:
        raise ValidationError("epsilon must lie in (0, 1)")
    pit = np.array([float(cdf(x)) for cdf, x in zip(f.cdf_forecasts, f.realized)])
    if np.any(pit < 0.0) or np.any(pit > 1.0) or not np.all(np.isfinite(pit)):
        raise ContractError("forecast CDF returned values outside [0, 1]")
    n_clipped = int(np.sum((pit < _PIT_CLIP) | (pit > 1.0 - _PIT_CLIP)))
    z = ndtri(np.clip(pit, _PIT_CLIP, 1.0 - _PIT_CLIP))
    threshold = float(ndtri(epsilon))

    ll_null = _censored_loglik(z, threshold, 0.0, 1.0)
    n_tail = int(np.sum(z < threshold))
    if n_tail == 0:
        # Supremum of the censored likelihood is 0 (all mass above threshold).
        ll_hat = 0.0
        mle = (None, None)
    else:
        def nobj(x):
            return -_censored_loglik(z, threshold, x[0], math.exp(np.clip(x[1], -10, 10)))

        res = minimize(nobj, np.array([0.0, 0.0]), method="Nelder-Mead",
                       options=dict(xatol=1e-6, fatol=1e-9, maxiter=500))
        ll_hat = max(-res.fun, ll_null)  # the MLE can never fall below the null point
        mle = (float(res.x[0]), float(math.exp(res.x[1])))
    lr = max(-2.0 * (ll_null - ll_hat), 0.0)
    return {
        "lr": float(lr),
        "p_value": float(chi2.sf(lr, df=2)),
        "n_tail": n_tail,
        "n_clipped": n_clipped,
        "mle": mle,
    }


def as_statistic(realized, var_forecasts, avar_forecasts, epsilon: float) -> float:
    """Z = sum_t r_t I_t / (T eps AVaR_t) + 1; zero in expectation under accuracy."""
    r = np.asarray(realized, dtype=float)
    v = np.asarray(var_forecasts, dtype=float)
    av = np.asarray(avar_forecasts, dtype=float)
    if np.any(av <= 0.0):
        raise ContractError("AS statistic requires strictly positive (loss-oriented) AVaR forecasts")
    ind = (-r > v).astype(float)
    t_len = len(r)
    return float(np.sum(r * ind / (t_len * epsilon * av)) + 1.0)


def as_test(f: ForecastStream, epsilon: float, n_sim: int = 10_000, seed=None) -> dict:
    """Acerbi-Szekely expected-shortfall backtest with a simulated p-value.

    The p-value is the fraction of simulated statistics at or below the
    observed one (left tail): paths are drawn from the per-day forecast laws
    via the stream's simulator and scored against the same forecasts.
    """
    if f.simulator is None:
        raise ValidationError("AS test needs the stream's scenario simulator")
    if n_sim < 1000:
        raise ValidationError("AS test needs at least 1000 simulated statistics")
    z_obs = as_statistic(f.realized, f.var_forecasts, f.avar_forecasts, epsilon)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    paths = np.asarray(f.simulator(n_sim, rng), dtype=float)
    if paths.shape != (n_sim, len(f)):
        raise ContractError(f"simulator returned shape {paths.shape}, expected {(n_sim, len(f))}")
    ind = (-paths > f.var_forecasts[None, :]).astype(float)
    t_len = len(f)
    z_sim = np.sum(paths * ind / (t_len * epsilon * f.avar_forecasts[None, :]), axis=1) + 1.0
    p = float(np.mean(z_sim <= z_obs))
    return {"z_stat": float(z_obs), "p_value": p, "n_sim": int(n_sim), "z_sim_mean": float(np.mean(z_sim))}
