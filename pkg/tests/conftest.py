"""Shared test fixtures and simulation helpers."""

from __future__ import annotations

from datetime import date, timedelta

import numpy as np
import pytest

from ntsfolio.data import AlignedReturns
from ntsfolio.timeseries import ArmaGarchParams, simulate_arma_garch


def daily_dates(n: int, start: date = date(2021, 1, 1)) -> tuple:
    return tuple(start + timedelta(days=k) for k in range(n))


def make_price_csv(tmp_path, assets: dict, name: str = "prices.csv", form: str = "long"):
    """Write a price CSV; ``assets`` maps asset id -> list of (date, price)."""
    path = tmp_path / name
    if form == "long":
        lines = ["date,asset,close"]
        for asset, quotes in assets.items():
            for d, p in quotes:
                lines.append(f"{d},{asset},{p}")
    else:
        all_dates = sorted({d for quotes in assets.values() for d, _ in quotes})
        names = sorted(assets)
        lines = ["date," + ",".join(names)]
        lookup = {a: dict(q) for a, q in assets.items()}
        for d in all_dates:
            cells = [str(lookup[a].get(d, "")) for a in names]
            lines.append(f"{d}," + ",".join(cells))
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def simulated_panel(n_assets: int = 4, n_obs: int = 160, seed: int = 7,
                    dist: str = "normal", cross_corr: float = 0.3) -> AlignedReturns:
    """Correlated GARCH return panel for harness-level tests."""
    rng = np.random.default_rng(seed)
    corr = np.full((n_assets, n_assets), cross_corr)
    np.fill_diagonal(corr, 1.0)
    chol = np.linalg.cholesky(corr)
    z = rng.standard_normal((n_obs + 100, n_assets)) @ chol.T
    cols = []
    for j in range(n_assets):
        params = ArmaGarchParams(
            c=2e-4 * (j + 1), ar=0.1, ma=-0.05,
            omega=2e-5 * (1 + 0.3 * j), a=0.08, b=0.85,
            dist="normal",
        )
        r, _, _, _ = simulate_arma_garch(params, n_obs + 100, innovations=z[:, j])
        cols.append(r[100:])
    values = np.column_stack(cols)
    return AlignedReturns(
        dates=daily_dates(n_obs), asset_ids=tuple(f"A{j}" for j in range(n_assets)), values=values
    )


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
