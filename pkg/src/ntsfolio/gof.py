"""Kolmogorov-Smirnov and Anderson-Darling tests against a fully specified null.

Both tests treat the null CDF parameters as known (no Lilliefors-style
correction), which biases toward under-rejection when the null was itself
fitted to the sample; reports carry that caveat. The AD p-value uses the
Marsaglia & Marsaglia (2004) evaluation of the case-0 asymptotic distribution
with their finite-n correction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
import pandas as pd
from scipy.special import kolmogorov

from .errors import CompletenessError, ContractError, InsufficientDataError

DEFAULT_LEVELS = (0.01, 0.05, 0.10)


@dataclass(frozen=True)
class GofResult:
    statistic: float
    p_value: float
    n: int
    distribution: str = ""


def _null_probs(sample: np.ndarray, cdf: Callable) -> np.ndarray:
    """Sorted PIT values F(x_(i)), with the CDF contract enforced."""
    x = np.sort(np.asarray(sample, dtype=float))
    u = np.asarray(cdf(x), dtype=float)
    if u.shape != x.shape:
        raise ContractError("cdf must evaluate elementwise on an array")
    if np.any(u < 0.0) or np.any(u > 1.0) or not np.all(np.isfinite(u)):
        raise ContractError("cdf returned values outside [0, 1]")
    if np.any(np.diff(u) < -1e-12):
        raise ContractError("cdf is not monotone on the sample range")
    return u


def ks_statistic(sample, cdf: Callable) -> float:
    """Sup distance between the empirical CDF and the null CDF."""
    u = _null_probs(sample, cdf)
    n = len(u)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - u), np.max(u - (i - 1) / n)))


def ad_statistic(sample, cdf: Callable) -> float:
    """Anderson-Darling A^2 from the standard sorted-sample formula."""
    u = _null_probs(sample, cdf)
    n = len(u)
    u = np.clip(u, 1e-12, 1.0 - 1e-12)  # keep logs finite at the PIT edges
    i = np.arange(1, n + 1)
    return float(-n - np.mean((2 * i - 1) * (np.log(u) + np.log(1.0 - u[::-1]))))


def _ad_cdf_asymptotic(z: float) -> float:
    # Marsaglia & Marsaglia (2004), max abs error < 2e-6.
    if z <= 0.0:
        return 0.0
    if z < 2.0:
        return float(
            np.exp(-1.2337141 / z)
            / np.sqrt(z)
            * (2.00012 + (0.247105 - (0.0649821 - (0.0347962 - (0.011672 - 0.00168691 * z) * z) * z) * z) * z)
        )
    return float(np.exp(-np.exp(1.0776 - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.0003146 * z) * z) * z) * z) * z)))


def _ad_errfix(n: int, x: float) -> float:
    # Finite-n correction from the same source.
    if x > 0.8:
        return (-130.2137 + (745.2337 - (1705.091 - (1950.646 - (1116.360 - 255.7844 * x) * x) * x) * x) * x) / n
    c = 0.01265 + 0.1757 / n
    if x < c:
        t = x / c
        t = np.sqrt(t) * (1.0 - t) * (49.0 * t - 102.0)
        return float(t * (0.0037 / n**2 + 0.00078 / n + 0.00006) / n)
    t = (x - c) / (0.8 - c)
    t = -0.00022633 + (6.54034 - (14.6538 - (14.458 - (8.259 - 1.91864 * t) * t) * t) * t) * t
    return float(t * (0.04213 + 0.01365 / n) / n)


def ad_pvalue(a2: float, n: int) -> float:
    x = _ad_cdf_asymptotic(a2)
    return float(np.clip(1.0 - (x + _ad_errfix(n, x)), 0.0, 1.0))


def ks_pvalue(d: float, n: int) -> float:
    return float(np.clip(kolmogorov(np.sqrt(n) * d), 0.0, 1.0))


def ks_test(sample, cdf: Callable, distribution: str = "", min_n: int = 20) -> GofResult:
    """KS test with the asymptotic Kolmogorov p-value at sqrt(n) * D."""
    n = len(sample)
    if n < min_n:
        raise InsufficientDataError(f"KS test needs at least {min_n} observations, got {n}")
    d = ks_statistic(sample, cdf)
    return GofResult(statistic=d, p_value=ks_pvalue(d, n), n=n, distribution=distribution)


def ad_test(sample, cdf: Callable, distribution: str = "", min_n: int = 20) -> GofResult:
    """AD test with the case-0 asymptotic p-value (tail-weighted alternative to KS)."""
    n = len(sample)
    if n < min_n:
        raise InsufficientDataError(f"AD test needs at least {min_n} observations, got {n}")
    a2 = ad_statistic(sample, cdf)
    return GofResult(statistic=a2, p_value=ad_pvalue(a2, n), n=n, distribution=distribution)


def rejection_table(
    results,
    levels: Sequence[float] = DEFAULT_LEVELS,
    assets: Iterable | None = None,
    models: Iterable | None = None,
) -> pd.DataFrame:
    """Count p-values below each level per (asset, model).

    ``results`` maps ``(asset, model)`` to an iterable of :class:`GofResult`.
    Rows are assets, columns are a (level, model) MultiIndex, mirroring the
    rejection-count table layout of the reports. Missing (asset, model)
    groups raise :class:`CompletenessError`.
    """
    results = dict(results)
    assets = list(assets) if assets is not None else sorted({a for a, _ in results})
    models = list(models) if models is not None else sorted({m for _, m in results})
    for a in assets:
        for m in models:
            if (a, m) not in results or not results[(a, m)]:
                raise CompletenessError(f"no results for asset {a!r}, model {m!r}")
    cols = pd.MultiIndex.from_product([[f"{lv:g}" for lv in levels], models], names=["level", "model"])
    table = pd.DataFrame(0, index=pd.Index(assets, name="asset"), columns=cols)
    for a in assets:
        for m in models:
            p = np.array([r.p_value for r in results[(a, m)]])
            for lv in levels:
                table.loc[a, (f"{lv:g}", m)] = int(np.sum(p < lv))
    return table
