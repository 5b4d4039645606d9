"""Price/return ingestion, rolling windows, and descriptive statistics.

Input CSVs come in two shapes, auto-detected from the header:

* long form:  ``date,asset,close`` with one row per (date, asset)
* wide form:  ``date,<asset1>,<asset2>,...`` with one row per date

Dates are ISO ``YYYY-MM-DD`` or ``YYYY/MM/DD``. Assets are aligned on the
intersection of their available dates; missing dates are never interpolated
because interpolation would fabricate returns.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date, datetime
from typing import Iterator, Sequence

import numpy as np
import pandas as pd

from .errors import (
    AlignmentError,
    InsufficientDataError,
    ParseError,
    ValidationError,
)


def _parse_date(raw: str, where: str) -> date:
    raw = raw.strip()
    for fmt in ("%Y-%m-%d", "%Y/%m/%d"):
        try:
            return datetime.strptime(raw, fmt).date()
        except ValueError:
            continue
    raise ParseError(f"{where}: unparseable date {raw!r} (expected YYYY-MM-DD or YYYY/MM/DD)")


@dataclass(frozen=True)
class PriceSeries:
    """Dated close prices for one asset. Dates strictly increasing, prices > 0."""

    asset_id: str
    dates: tuple
    prices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "prices", np.asarray(self.prices, dtype=float))
        if len(self.dates) != len(self.prices):
            raise ValidationError(f"{self.asset_id}: {len(self.dates)} dates vs {len(self.prices)} prices")
        if len(self.dates) >= 2 and any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValidationError(f"{self.asset_id}: dates must be strictly increasing")
        if not np.all(np.isfinite(self.prices)) or np.any(self.prices <= 0):
            raise ValidationError(f"{self.asset_id}: prices must be finite and positive")

    def __len__(self):
        return len(self.prices)


@dataclass(frozen=True)
class ReturnSeries:
    """Daily log returns for one asset; entry t is ln(p_t / p_{t-1})."""

    asset_id: str
    dates: tuple
    returns: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "returns", np.asarray(self.returns, dtype=float))
        if len(self.dates) != len(self.returns):
            raise ValidationError(f"{self.asset_id}: {len(self.dates)} dates vs {len(self.returns)} returns")
        if not np.all(np.isfinite(self.returns)):
            raise ValidationError(f"{self.asset_id}: returns must be finite")

    def __len__(self):
        return len(self.returns)


@dataclass(frozen=True)
class WindowSpec:
    """Rolling window: ``length`` observations advancing by ``step`` each time."""

    length: int
    step: int = 1

    def __post_init__(self):
        if self.length < 1 or self.step < 1:
            raise ValidationError("window length and step must be positive")

    def count(self, n_obs: int) -> int:
        if n_obs < self.length:
            raise InsufficientDataError(f"series of length {n_obs} shorter than window {self.length}")
        return (n_obs - self.length) // self.step + 1


@dataclass(frozen=True)
class AlignedReturns:
    """Return matrix for several assets on a shared date grid (T x n)."""

    dates: tuple
    asset_ids: tuple
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.ndim != 2:
            raise ValidationError("values must be a T x n matrix")
        if self.values.shape != (len(self.dates), len(self.asset_ids)):
            raise ValidationError(
                f"shape {self.values.shape} inconsistent with {len(self.dates)} dates, {len(self.asset_ids)} assets"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("returns must be finite")

    @classmethod
    def from_series(cls, series: Sequence[ReturnSeries]) -> "AlignedReturns":
        if not series:
            raise ValidationError("no return series supplied")
        dates = series[0].dates
        for s in series[1:]:
            if s.dates != dates:
                raise AlignmentError("return series are not on a common date grid")
        values = np.column_stack([s.returns for s in series])
        return cls(dates=dates, asset_ids=tuple(s.asset_id for s in series), values=values)

    def series(self, asset_id: str) -> ReturnSeries:
        j = self.asset_ids.index(asset_id)
        return ReturnSeries(asset_id=asset_id, dates=self.dates, returns=self.values[:, j])

    def __len__(self):
        return self.values.shape[0]

    @property
    def n_assets(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Window:
    """One rolling-window slice plus the next-day realization target (if any)."""

    index: int
    start: int
    stop: int  # exclusive
    dates: tuple
    values: np.ndarray
    target_index: int | None
    target_date: object
    target_values: np.ndarray | None


@dataclass(frozen=True)
class DescriptiveStats:
    count: int
    mean: float
    max: float
    min: float
    sd: float
    kurtosis: float
    skewness: float
    kurtosis_convention: str = "raw"


def _detect_format(header: list) -> str:
    cols = [c.strip().lower() for c in header]
    if len(cols) >= 3 and cols[0] == "date" and cols[1] == "asset" and cols[2] == "close":
        return "long"
    if len(cols) >= 2 and cols[0] == "date":
        return "wide"
    raise ParseError(f"unrecognized header {header!r}: expected 'date,asset,close' or 'date,<assets...>'")


def load_prices(path: str, fmt: str | None = None) -> list:
    """Load a price CSV into one :class:`PriceSeries` per asset.

    Assets are restricted to the intersection of their available dates so
    every returned series shares one calendar.
    """
    per_asset: dict = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        fmt = fmt or _detect_format(header)
        if fmt == "long":
            for rowno, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) < 3:
                    raise ParseError(f"{path}:{rowno}: expected 3 columns, got {len(row)}")
                d = _parse_date(row[0], f"{path}:{rowno}")
                asset = row[1].strip()
                try:
                    price = float(row[2])
                except ValueError:
                    raise ParseError(f"{path}:{rowno}: unparseable price {row[2]!r}") from None
                if not math.isfinite(price) or price <= 0:
                    raise ValidationError(f"{path}:{rowno}: non-positive price {price!r} for {asset}")
                per_asset.setdefault(asset, {})[d] = price
        else:
            assets = [c.strip() for c in header[1:]]
            if not assets:
                raise ParseError(f"{path}: wide file needs at least one asset column")
            for rowno, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != len(assets) + 1:
                    raise ParseError(f"{path}:{rowno}: expected {len(assets) + 1} columns, got {len(row)}")
                d = _parse_date(row[0], f"{path}:{rowno}")
                for asset, cell in zip(assets, row[1:]):
                    cell = cell.strip()
                    if not cell:
                        continue  # missing quote; handled by date intersection
                    try:
                        price = float(cell)
                    except ValueError:
                        raise ParseError(f"{path}:{rowno}: unparseable price {cell!r}") from None
                    if not math.isfinite(price) or price <= 0:
                        raise ValidationError(f"{path}:{rowno}: non-positive price {price!r} for {asset}")
                    per_asset.setdefault(asset, {})[d] = price

    if not per_asset:
        raise ParseError(f"{path}: no data rows")
    common = None
    for quotes in per_asset.values():
        common = set(quotes) if common is None else common & set(quotes)
    if not common:
        raise AlignmentError(f"{path}: assets share no common dates")
    grid = tuple(sorted(common))
    out = []
    for asset in sorted(per_asset):
        quotes = per_asset[asset]
        out.append(PriceSeries(asset_id=asset, dates=grid, prices=np.array([quotes[d] for d in grid])))
    return out


def to_returns(p: PriceSeries) -> ReturnSeries:
    """Daily log returns; one observation shorter than the price series."""
    if len(p) < 2:
        raise InsufficientDataError(f"{p.asset_id}: need at least 2 prices, got {len(p)}")
    rets = np.diff(np.log(p.prices))
    return ReturnSeries(asset_id=p.asset_id, dates=tuple(p.dates[1:]), returns=rets)


def load_returns(path: str, fmt: str | None = None) -> AlignedReturns:
    """Convenience: load prices and convert to an aligned return matrix."""
    return AlignedReturns.from_series([to_returns(p) for p in load_prices(path, fmt=fmt)])


def describe(r: ReturnSeries, kurtosis_convention: str = "raw") -> DescriptiveStats:
    """Sample moments of a return series.

    The standard deviation uses the unbiased (n-1) estimator. Skewness and
    kurtosis are the standardized third and fourth population moments;
    ``kurtosis_convention="raw"`` reports the normal distribution at 3.0,
    ``"excess"`` subtracts 3. A constant series yields sd 0 and NaN for the
    standardized moments.
    """
    if kurtosis_convention not in ("raw", "excess"):
        raise ValidationError(f"kurtosis_convention must be 'raw' or 'excess', got {kurtosis_convention!r}")
    x = r.returns
    n = len(x)
    if n < 4:
        raise InsufficientDataError(f"{r.asset_id}: need at least 4 observations, got {n}")
    mean = float(np.mean(x))
    d = x - mean
    m2 = float(np.mean(d**2))
    sd = float(np.std(x, ddof=1))
    if m2 == 0.0:
        skew = float("nan")
        kurt = float("nan")
    else:
        skew = float(np.mean(d**3) / m2**1.5)
        kurt = float(np.mean(d**4) / m2**2)
        if kurtosis_convention == "excess":
            kurt -= 3.0
    return DescriptiveStats(
        count=n,
        mean=mean,
        max=float(np.max(x)),
        min=float(np.min(x)),
        sd=sd,
        kurtosis=kurt,
        skewness=skew,
        kurtosis_convention=kurtosis_convention,
    )


def describe_table(aligned: AlignedReturns, kurtosis_convention: str = "raw") -> pd.DataFrame:
    """Descriptive statistics for every asset, one row per asset."""
    rows = []
    for asset in aligned.asset_ids:
        s = describe(aligned.series(asset), kurtosis_convention=kurtosis_convention)
        rows.append(
            {
                "asset": asset,
                "count": s.count,
                "mean": s.mean,
                "max": s.max,
                "min": s.min,
                "sd": s.sd,
                "kurtosis": s.kurtosis,
                "skewness": s.skewness,
            }
        )
    return pd.DataFrame(rows).set_index("asset")


def windows(aligned: AlignedReturns, spec: WindowSpec) -> Iterator[Window]:
    """Yield rolling windows of ``spec.length`` rows advancing by ``spec.step``.

    The observation immediately after each window is exposed as the
    realization target; it is ``None`` for a window ending at the final row.
    """
    T = len(aligned)
    n_windows = spec.count(T)  # raises if too short
    for k in range(n_windows):
        start = k * spec.step
        stop = start + spec.length
        has_target = stop < T
        yield Window(
            index=k,
            start=start,
            stop=stop,
            dates=tuple(aligned.dates[start:stop]),
            values=aligned.values[start:stop],
            target_index=stop if has_target else None,
            target_date=aligned.dates[stop] if has_target else None,
            target_values=aligned.values[stop] if has_target else None,
        )
