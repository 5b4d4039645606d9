"""Rolling-window experiment: estimate, forecast, optimize, account, report.

Model families share estimation work the way the strategies are constructed:
the Student-t GARCH fits provide both the "agt" scenario law (Gaussian copula
with standardized-t margins) and the residuals that the standard MNTS law is
fitted to for "agnts". Mean-SD strategies depend on the residual fits only
through their first two moments, so models sharing residual fits execute one
mean-SD portfolio: "agnts" with rho="sd" resolves to the same scenario family
as "agt", which is why their mean-SD ledgers coincide exactly under paired
seeds (the per-day scenario seed is a pure function of run seed, date, and
scenario family).

Accounting is the running sum of net daily returns w' r_{t+1} - lambda *
||w_t - w_{t-1}||_1 (a compounded variant is configurable); every report
records the convention and the unit-gross-exposure weight scale.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np
import pandas as pd
from scipy.special import ndtr

from .backtests import ForecastStream, as_test, blr_tail_test, clr_test
from .config import RunConfig
from .data import AlignedReturns, WindowSpec, windows
from .errors import (
    AccuracyError,
    DegenerateSeriesError,
    EngineError,
    EstimationError,
    InsufficientDataError,
    ValidationError,
)
from .gof import ad_test, ks_test, rejection_table
from .nts import FftConfig, MntsParams, fit_std_mnts, sample_mnts
from .optimizer import OptimizationProblem, SolverSettings, optimize
from .risk import ScenarioMatrix, avar, foster_hart, is_gamble, portfolio_outcomes, sd, tail_mean_loss, var
from .timeseries import (
    FitOptions,
    fit_arma_garch,
    forecast_one_step,
    refilter_fit,
    std_t_cdf,
    std_t_ppf,
)

MODEL_FAMILY = {"agnormal": "normal", "agt": "t", "agnts": "t"}


@dataclass(frozen=True)
class StrategySpec:
    """One (model, risk measure, cost setting) strategy cell."""

    model: str  # "agnormal" | "agt" | "agnts"
    rho: str  # "sd" | "avar" | "fh"
    lambda_: float = 0.0
    cost_aversion: float = 0.0
    long_only: bool = False
    epsilon: float = 0.01
    n_scenarios: int = 10_000

    def __post_init__(self):
        if self.model not in MODEL_FAMILY:
            raise ValidationError(f"unknown model {self.model!r}")
        if self.rho not in ("sd", "avar", "fh"):
            raise ValidationError(f"unknown risk measure {self.rho!r}")

    @property
    def label(self) -> str:
        # underscores separate fields; "-" may appear inside numbers (1e-07)
        tail = f"_lam{self.lambda_:g}_C{self.cost_aversion:g}"
        lo = "_long" if self.long_only else ""
        return f"{self.model}_{self.rho}{tail}{lo}"

    @property
    def scenario_family(self) -> str:
        """Scenario law feeding this strategy's optimizer.

        Mean-SD portfolios are moment-determined, so "agnts" shares the
        t-family scenarios (and hence the exact ledger) of "agt".
        """
        if self.model == "agnts" and self.rho != "sd":
            return "nts"
        return MODEL_FAMILY[self.model]


def strategy_grid(config: RunConfig) -> list:
    """Cartesian strategy grid from the run configuration."""
    out = []
    for model in config.models:
        for rho in config.risk_measures:
            for lam in config.lambdas:
                for c in config.cost_aversions:
                    out.append(
                        StrategySpec(
                            model=model, rho=rho, lambda_=lam, cost_aversion=c,
                            long_only=config.long_only, epsilon=config.epsilon,
                            n_scenarios=config.n_scenarios,
                        )
                    )
    return out


@dataclass
class RunLedger:
    """Per-day accounting record for one strategy."""

    strategy: StrategySpec
    asset_ids: tuple
    dates: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    costs: list = field(default_factory=list)
    gross_returns: list = field(default_factory=list)
    net_returns: list = field(default_factory=list)
    var_assets: list = field(default_factory=list)
    avar_assets: list = field(default_factory=list)
    var_portfolio: list = field(default_factory=list)
    avar_portfolio: list = field(default_factory=list)
    defects: list = field(default_factory=list)

    def append(self, *, date, weights, cost, gross, net, var_a, avar_a, var_p, avar_p, defect=""):
        self.dates.append(date)
        self.weights.append(np.asarray(weights, dtype=float))
        self.costs.append(float(cost))
        self.gross_returns.append(float(gross))
        self.net_returns.append(float(net))
        self.var_assets.append(np.asarray(var_a, dtype=float))
        self.avar_assets.append(np.asarray(avar_a, dtype=float))
        self.var_portfolio.append(float(var_p))
        self.avar_portfolio.append(float(avar_p))
        self.defects.append(defect)

    def __len__(self):
        return len(self.dates)

    @property
    def net(self) -> np.ndarray:
        return np.asarray(self.net_returns, dtype=float)

    def to_frame(self) -> pd.DataFrame:
        w = np.vstack(self.weights)
        va = np.vstack(self.var_assets)
        av = np.vstack(self.avar_assets)
        cols = {"date": [str(d) for d in self.dates]}
        for j, a in enumerate(self.asset_ids):
            cols[f"w_{a}"] = w[:, j]
        cols["cost"] = self.costs
        cols["gross_return"] = self.gross_returns
        cols["net_return"] = self.net_returns
        for j, a in enumerate(self.asset_ids):
            cols[f"var_{a}"] = va[:, j]
        for j, a in enumerate(self.asset_ids):
            cols[f"avar_{a}"] = av[:, j]
        cols["var_portfolio"] = self.var_portfolio
        cols["avar_portfolio"] = self.avar_portfolio
        cols["defect"] = self.defects
        return pd.DataFrame(cols)


@dataclass
class WindowBundle:
    """Everything estimated on one window."""

    index: int
    end_date: object
    target_date: object
    target_values: np.ndarray | None
    fits: dict  # family -> list[GarchFit] per asset
    mnts: MntsParams | None
    forecasts: dict  # family -> list[Forecast] per asset
    resid_corr: dict  # family -> correlation matrix
    defect: str = ""
    refitted: bool = True


def derive_seed(run_seed: int, date, family: str) -> int:
    """Deterministic per-day scenario seed: pure function of its inputs."""
    digest = hashlib.sha256(f"{run_seed}|{date}|{family}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _psd_corr(matrix: np.ndarray) -> np.ndarray:
    from .nts import _psd_correlation

    return _psd_correlation(np.atleast_2d(matrix))


def _fit_bundle_families(values: np.ndarray, families: tuple, need_mnts: bool, config: RunConfig):
    """Fit every requested family on one window's return block."""
    opts = FitOptions(min_obs=min(config.min_obs, values.shape[0]), multistarts=config.garch_multistarts)
    fits: dict = {}
    corr: dict = {}
    for fam in families:
        dist = "normal" if fam == "normal" else "t"
        fits[fam] = [fit_arma_garch(values[:, j], dist=dist, opts=opts) for j in range(values.shape[1])]
        resid = np.column_stack([f.residuals for f in fits[fam]])
        corr[fam] = _psd_corr(np.corrcoef(resid, rowvar=False)) if values.shape[1] > 1 else np.array([[1.0]])
    mnts = None
    if need_mnts:
        resid = np.column_stack([f.residuals for f in fits["t"]])
        mnts = fit_std_mnts(resid, cfg=FftConfig(m=config.fft_m_fit, m_max=config.fft_m_max, cf_tol=config.fft_cf_tol),
                            max_iter=config.mnts_max_iter, min_obs=min(250, values.shape[0]))
    return fits, corr, mnts


def _refilter_bundle(values: np.ndarray, prev: WindowBundle, config: RunConfig):
    """Reuse previous parameters on a new window: fresh state, stale params."""
    fits: dict = {}
    corr: dict = {}
    for fam, prev_fits in prev.fits.items():
        fam_fits = [refilter_fit(f.params, values[:, j]) for j, f in enumerate(prev_fits)]
        fits[fam] = fam_fits
        resid = np.column_stack([f.residuals for f in fam_fits])
        corr[fam] = _psd_corr(np.corrcoef(resid, rowvar=False)) if values.shape[1] > 1 else np.array([[1.0]])
    return fits, corr, prev.mnts


def _forecasts_for(fits: dict) -> dict:
    return {fam: [forecast_one_step(f) for f in fam_fits] for fam, fam_fits in fits.items()}


def _required_families(models) -> tuple:
    fams = []
    if "agnormal" in models:
        fams.append("normal")
    if "agt" in models or "agnts" in models:
        fams.append("t")
    return tuple(fams)


def _checkpoint_path(config: RunConfig, index: int) -> str:
    return os.path.join(config.checkpoint_dir, f"window_{index:05d}.json")


def _save_checkpoint(config: RunConfig, bundle: WindowBundle) -> None:
    payload = {
        "config_hash": config.config_hash(),
        "index": bundle.index,
        "end_date": str(bundle.end_date),
        "fits": {fam: [f.to_dict() for f in fam_fits] for fam, fam_fits in bundle.fits.items()},
        "mnts": bundle.mnts.to_dict() if bundle.mnts is not None else None,
    }
    with open(_checkpoint_path(config, bundle.index), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)


def _load_checkpoint(config: RunConfig, index: int, values: np.ndarray):
    path = _checkpoint_path(config, index)
    if not os.path.exists(path):
        return None
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("config_hash") != config.config_hash():
        return None
    from .timeseries import ArmaGarchParams

    fits: dict = {}
    corr: dict = {}
    for fam, dicts in payload["fits"].items():
        fam_fits = [refilter_fit(ArmaGarchParams.from_dict(d["params"]), values[:, j]) for j, d in enumerate(dicts)]
        fits[fam] = fam_fits
        resid = np.column_stack([f.residuals for f in fam_fits])
        corr[fam] = _psd_corr(np.corrcoef(resid, rowvar=False)) if values.shape[1] > 1 else np.array([[1.0]])
    mnts = None
    if payload.get("mnts"):
        from .nts import DistributionTable, _margin_density_grid

        raw = MntsParams.from_dict(payload["mnts"])
        cfg = FftConfig(m=config.fft_m_fit, m_max=config.fft_m_max, cf_tol=config.fft_cf_tol)
        x_grid, pdf_grid = _margin_density_grid(raw.alpha, raw.theta, raw.beta, cfg)
        tables = [DistributionTable(x_grid, pdf_grid[j]) for j in range(len(raw.beta))]
        mnts = MntsParams(alpha=raw.alpha, theta=raw.theta, beta=raw.beta, gamma=raw.gamma,
                          mu=raw.mu, sigma=raw.sigma,
                          fit_info={"margin_tables": tables, "from_checkpoint": True})
    return fits, corr, mnts


_ESTIMATION_ERRORS = (EstimationError, DegenerateSeriesError, AccuracyError, InsufficientDataError, ValidationError)


def _estimate_one(args):
    values, families, need_mnts, config = args
    try:
        fits, corr, mnts = _fit_bundle_families(values, families, need_mnts, config)
        return ("ok", fits, corr, mnts)
    except _ESTIMATION_ERRORS as exc:
        return ("defect", f"{type(exc).__name__}: {exc}")


def _bundle_from(w, fits, corr, mnts, defect: str = "", refitted: bool = True) -> WindowBundle:
    return WindowBundle(index=w.index, end_date=w.dates[-1], target_date=w.target_date,
                        target_values=w.target_values, fits=fits, mnts=mnts,
                        forecasts=_forecasts_for(fits), resid_corr=corr,
                        defect=defect, refitted=refitted)


def _carry_bundle(w, prev_bundle, defect: str, config: RunConfig) -> WindowBundle:
    """Defect handling: carry the previous window's parameters forward."""
    if prev_bundle is not None and prev_bundle.fits:
        fits, corr, mnts = _refilter_bundle(w.values, prev_bundle, config)
        return _bundle_from(w, fits, corr, mnts, defect=defect, refitted=False)
    return WindowBundle(index=w.index, end_date=w.dates[-1], target_date=w.target_date,
                        target_values=w.target_values, fits={}, mnts=None, forecasts={},
                        resid_corr={}, defect=defect, refitted=False)


def estimate_windows(
    data: AlignedReturns,
    window: WindowSpec,
    config: RunConfig,
    models=None,
    need_mnts: bool | None = None,
    progress=None,
) -> list:
    """Fit every requested model family on every rolling window.

    Estimation failures never crash the run: the window carries the previous
    window's parameters forward (refiltered on the new data) and the bundle
    is flagged with the defect. Checkpoints, when enabled, make interrupted
    runs resumable; the parallel path reproduces the sequential results
    because assembly (including carry-forward) always runs in order.
    """
    models = tuple(models if models is not None else config.models)
    families = _required_families(models)
    if need_mnts is None:
        need_mnts = "agnts" in models
    wins = list(windows(data, window))
    if config.checkpoint_dir:
        os.makedirs(config.checkpoint_dir, exist_ok=True)

    statuses: list = [None] * len(wins)
    parallel = config.workers > 1 and config.refit_every == 1 and not config.checkpoint_dir
    if parallel:
        tasks = [(w.values, families, need_mnts, config) for w in wins]
        with ProcessPoolExecutor(max_workers=config.workers) as ex:
            statuses = list(ex.map(_estimate_one, tasks, chunksize=max(1, len(wins) // (4 * config.workers))))

    bundles: list = []
    prev_bundle = None
    prev_fitted = None  # last bundle that actually has fits
    for k, w in enumerate(wins):
        if parallel:
            status = statuses[k]
            if status[0] == "ok":
                bundle = _bundle_from(w, status[1], status[2], status[3])
            else:
                bundle = _carry_bundle(w, prev_fitted, status[1], config)
        else:
            loaded = _load_checkpoint(config, k, w.values) if config.checkpoint_dir else None
            if loaded is not None:
                bundle = _bundle_from(w, *loaded)
            else:
                want_refit = (k % config.refit_every == 0) or prev_fitted is None
                if want_refit:
                    status = _estimate_one((w.values, families, need_mnts, config))
                    if status[0] == "ok":
                        bundle = _bundle_from(w, status[1], status[2], status[3])
                        if config.checkpoint_dir:
                            _save_checkpoint(config, bundle)
                    else:
                        bundle = _carry_bundle(w, prev_fitted, status[1], config)
                else:
                    fits, corr, mnts = _refilter_bundle(w.values, prev_fitted, config)
                    bundle = _bundle_from(w, fits, corr, mnts, refitted=False)
        bundles.append(bundle)
        prev_bundle = bundle
        if bundle.fits:
            prev_fitted = bundle
        if progress:
            progress(k, len(wins))
    return bundles


# ---------------------------------------------------------------------------
# Scenario generation
# ---------------------------------------------------------------------------


def _residual_draws(family: str, bundle: WindowBundle, n: int, seed: int, config: RunConfig) -> np.ndarray:
    """Joint standardized residual scenarios for one family on one day."""
    rng = np.random.default_rng(seed)
    if family == "nts":
        cfg = FftConfig(m=config.fft_m, m_max=config.fft_m_max, cf_tol=config.fft_cf_tol)
        return sample_mnts(bundle.mnts, n, seed=rng, cfg=cfg).values
    fits = bundle.fits[family]
    corr = bundle.resid_corr[family]
    try:
        chol = np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        chol = np.linalg.cholesky(corr + 1e-10 * np.eye(corr.shape[0]))
    z = rng.standard_normal((n, len(fits))) @ chol.T
    if family == "normal":
        return z
    # Gaussian copula with standardized-t margins (per-asset tail index).
    u = ndtr(z)
    eta = np.empty_like(u)
    for j, f in enumerate(fits):
        eta[:, j] = std_t_ppf(np.clip(u[:, j], 1e-12, 1 - 1e-12), f.params.nu)
    return eta


def scenario_matrix(family: str, bundle: WindowBundle, n: int, run_seed: int, config: RunConfig,
                    asset_ids: tuple) -> ScenarioMatrix:
    """De-standardized one-day-ahead return scenarios: r = mu + sigma * eta."""
    seed = derive_seed(run_seed, bundle.end_date, family)
    eta = _residual_draws(family, bundle, n, seed, config)
    fam = "t" if family == "nts" else family
    mu = np.array([f.mu_next for f in bundle.forecasts[fam]])
    sg = np.array([f.sigma_next for f in bundle.forecasts[fam]])
    return ScenarioMatrix(values=mu + sg * eta, asset_ids=asset_ids, seed=seed)


# ---------------------------------------------------------------------------
# Experiment driver
# ---------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    ledgers: dict
    bundles: list
    config: RunConfig
    asset_ids: tuple
    defects: list = field(default_factory=list)

    def conventions(self) -> dict:
        return {
            "accounting": self.config.accounting,
            "weight_scale": "unit gross exposure (sum |w_i| = 1)",
            "turnover": "L1 norm of the weight change",
        }


def run_experiment(
    data: AlignedReturns,
    strategies,
    window: WindowSpec,
    config: RunConfig | None = None,
    bundles: list | None = None,
    progress=None,
) -> ExperimentResult:
    """Run the full rolling pipeline and return per-strategy ledgers.

    Per day and scenario family one scenario matrix is drawn and shared by
    every strategy using that family, with its seed derived from (run seed,
    date, family). Optimizations are memoized on the mathematically relevant
    key, so lambda = 0 strategies are identical across cost-aversion levels
    by construction rather than by accident.
    """
    config = config or RunConfig()
    strategies = list(strategies)
    if len(data) < window.length + 1:
        raise InsufficientDataError("need at least one realization day beyond the first window")
    models = tuple(sorted({s.model for s in strategies}))
    need_mnts = any(s.scenario_family == "nts" for s in strategies)
    if bundles is None:
        bundles = estimate_windows(data, window, config, models=models, need_mnts=need_mnts, progress=progress)

    asset_ids = data.asset_ids
    n_assets = data.n_assets
    ledgers = {s.label: RunLedger(strategy=s, asset_ids=asset_ids) for s in strategies}
    w_state = {s.label: np.zeros(n_assets) for s in strategies}
    defects = []
    families = sorted({s.scenario_family for s in strategies})
    n_scen = max(s.n_scenarios for s in strategies)
    settings_cold = SolverSettings(multistarts=config.solver_multistarts, maxfev=config.solver_maxfev,
                                   xatol=config.solver_xatol, fatol=config.solver_fatol, fh_tol=config.fh_tol)
    settings_warm = SolverSettings(multistarts=config.solver_warm_multistarts, maxfev=config.solver_warm_maxfev,
                                   xatol=config.solver_xatol, fatol=config.solver_fatol, fh_tol=config.fh_tol)

    for day_idx, bundle in enumerate(b for b in bundles if b.target_values is not None):
        r_next = bundle.target_values
        if bundle.defect:
            # Estimation failed: the window is skipped. Every strategy holds
            # its previous weights (no reallocation, no cost) and the defect
            # is logged on the ledger row, never silently.
            for s in strategies:
                led = ledgers[s.label]
                w = w_state[s.label]
                gross_ret = float(w @ r_next)
                led.append(date=bundle.target_date, weights=w, cost=0.0, gross=gross_ret, net=gross_ret,
                           var_a=np.full(n_assets, np.nan), avar_a=np.full(n_assets, np.nan),
                           var_p=np.nan, avar_p=np.nan, defect=bundle.defect)
            defects.append((bundle.index, bundle.defect))
            continue

        scen = {
            fam: scenario_matrix(fam, bundle, n_scen, config.seed, config, asset_ids)
            .require_rows(config.scenario_floor)
            for fam in families
        }
        fam_tail = {
            fam: (
                np.array([var(scen[fam].values[:, j], config.epsilon) for j in range(n_assets)]),
                np.array([avar(scen[fam].values[:, j], config.epsilon) for j in range(n_assets)]),
            )
            for fam in families
        }

        opt_cache: dict = {}
        for s in strategies:
            fam = s.scenario_family
            w_prev = w_state[s.label]
            cost_coeff = s.cost_aversion * s.lambda_**2
            key = (fam, s.rho, s.epsilon, s.long_only, cost_coeff, w_prev.tobytes())
            if key in opt_cache:
                res = opt_cache[key]
            else:
                problem = OptimizationProblem(
                    scenarios=scen[fam], w_prev=w_prev, rho=s.rho, lambda_=s.lambda_,
                    cost_aversion=s.cost_aversion, long_only=s.long_only,
                    epsilon=s.epsilon, eps_mu=config.eps_mu,
                )
                settings = settings_cold if day_idx == 0 else settings_warm
                res = optimize(problem, settings)
                opt_cache[key] = res
            w = res.weights
            turnover = float(np.sum(np.abs(w - w_prev)))
            cost = s.lambda_ * turnover
            gross_ret = float(w @ r_next)
            outcomes = portfolio_outcomes(scen[fam], w)
            led = ledgers[s.label]
            va, av = fam_tail[fam]
            led.append(
                date=bundle.target_date, weights=w, cost=cost, gross=gross_ret, net=gross_ret - cost,
                var_a=va, avar_a=av,
                var_p=var(outcomes, s.epsilon), avar_p=avar(outcomes, s.epsilon),
                defect=bundle.defect,
            )
            w_state[s.label] = w

    return ExperimentResult(ledgers=ledgers, bundles=bundles, config=config, asset_ids=asset_ids, defects=defects)


def cumulative_curve(ledger: RunLedger, accounting: str = "sum") -> pd.Series:
    """Dated cumulative net return; the final point is the headline number."""
    if len(ledger) == 0:
        raise InsufficientDataError("empty ledger has no cumulative curve")
    net = ledger.net
    if accounting == "compound":
        values = np.cumprod(1.0 + net) - 1.0
    else:
        values = np.cumsum(net)
    return pd.Series(values, index=[str(d) for d in ledger.dates], name=ledger.strategy.label)


def performance_table(ledgers: dict, epsilon: float = 0.01, accounting: str = "sum") -> pd.DataFrame:
    """Realized performance per strategy, Table-style.

    Columns: cumulative return (a), SD (b), AVaR (c), FH (d) of realized
    daily net returns, and the ratios a/b (the Sharpe ratio), a/c, a/d.
    FH is reported as NaN when the realized sample is not a gamble. The AVaR
    tail is clamped to one observation when the sample is shorter than 1/eps.
    """
    rows = []
    for label, ledger in ledgers.items():
        if len(ledger) == 0:
            raise InsufficientDataError(f"ledger {label} is empty")
        net = ledger.net
        cum = float(cumulative_curve(ledger, accounting=accounting).iloc[-1])
        sd_r = sd(net) if len(net) >= 2 else float("nan")
        avar_r = tail_mean_loss(net, epsilon)
        fh_r = foster_hart(net) if is_gamble(net) else float("nan")
        rows.append({
            "strategy": label,
            "model": ledger.strategy.model,
            "rho": ledger.strategy.rho,
            "lambda": ledger.strategy.lambda_,
            "cost_aversion": ledger.strategy.cost_aversion,
            "cumulative_return": cum,
            "sd": sd_r,
            "avar": avar_r,
            "fh": fh_r,
            "ret_over_sd": cum / sd_r if sd_r else float("nan"),
            "ret_over_avar": cum / avar_r if avar_r else float("nan"),
            "ret_over_fh": cum / fh_r if fh_r and not math.isnan(fh_r) else float("nan"),
        })
    return pd.DataFrame(rows).set_index("strategy")


# ---------------------------------------------------------------------------
# Statistical suite (in-sample GOF + out-of-sample backtests)
# ---------------------------------------------------------------------------


def _margin_cdf_handle(model: str, bundle: WindowBundle, j: int, mu: float, sg: float):
    """Per-day forecast CDF for asset j: F((x - mu) / sigma) of the margin law."""
    if model == "agnormal":
        return lambda x, mu=mu, sg=sg: float(ndtr((x - mu) / sg))
    if model == "agt":
        nu = bundle.fits["t"][j].params.nu
        return lambda x, mu=mu, sg=sg, nu=nu: float(std_t_cdf((x - mu) / sg, nu))
    table = bundle.mnts.fit_info["margin_tables"][j]
    return lambda x, mu=mu, sg=sg, table=table: float(table.cdf_at((x - mu) / sg))


def _margin_sampler(model: str, bundle: WindowBundle, j: int):
    """Draw standardized innovations for asset j under the model's margin."""
    if model == "agnormal":
        return lambda n, rng: rng.standard_normal(n)
    if model == "agt":
        nu = bundle.fits["t"][j].params.nu
        scale = math.sqrt((nu - 2.0) / nu)
        return lambda n, rng, nu=nu, scale=scale: rng.standard_t(nu, n) * scale
    table = bundle.mnts.fit_info["margin_tables"][j]
    return lambda n, rng, table=table: table.sample(n, rng)


def build_forecast_streams(bundles: list, data: AlignedReturns, config: RunConfig, models=None) -> dict:
    """Per (asset, model) out-of-sample VaR/AVaR forecast streams.

    VaR and AVaR forecasts are the empirical tail measures of each day's
    scenario column, consistent with how the optimizer sees risk; CDF handles
    and margin samplers ride along for the BLR and AS tests.
    """
    models = tuple(models if models is not None else config.models)
    streams: dict = {}
    usable = [b for b in bundles if b.target_values is not None and b.fits]
    for model in models:
        fam = "nts" if model == "agnts" else MODEL_FAMILY[model]
        fit_fam = MODEL_FAMILY[model]
        for j, asset in enumerate(data.asset_ids):
            dates, var_f, avar_f, realized, cdfs, samplers, mus, sgs = [], [], [], [], [], [], [], []
            for b in usable:
                seed = derive_seed(config.seed, b.end_date, fam)
                eta = _residual_draws(fam, b, config.n_scenarios, seed, config)[:, j]
                fc = b.forecasts[fit_fam][j]
                col = fc.mu_next + fc.sigma_next * eta
                dates.append(b.target_date)
                var_f.append(var(col, config.epsilon))
                avar_f.append(avar(col, config.epsilon))
                realized.append(float(b.target_values[j]))
                cdfs.append(_margin_cdf_handle(model, b, j, fc.mu_next, fc.sigma_next))
                samplers.append(_margin_sampler(model, b, j))
                mus.append(fc.mu_next)
                sgs.append(fc.sigma_next)
            mus = np.array(mus)
            sgs = np.array(sgs)

            def simulator(n_paths, rng, samplers=tuple(samplers), mus=mus, sgs=sgs):
                out = np.empty((n_paths, len(samplers)))
                for t, smp in enumerate(samplers):
                    out[:, t] = mus[t] + sgs[t] * smp(n_paths, rng)
                return out

            streams[(asset, model)] = ForecastStream(
                dates=tuple(dates),
                var_forecasts=np.array(var_f),
                avar_forecasts=np.maximum(np.array(avar_f), np.array(var_f)),
                realized=np.array(realized),
                cdf_forecasts=cdfs,
                simulator=simulator,
            )
    return streams


def _parse_break(s: str):
    return datetime.strptime(s, "%Y-%m-%d").date()


def split_periods(dates, period_breaks) -> dict:
    """Consecutive period masks from break dates; 'full' always included."""
    dates = list(dates)
    out = {"full": np.ones(len(dates), dtype=bool)}
    if not period_breaks:
        return out
    breaks = [_parse_break(b) if isinstance(b, str) else b for b in period_breaks]
    edges = [None] + list(breaks) + [None]
    for k in range(len(edges) - 1):
        lo, hi = edges[k], edges[k + 1]
        mask = np.array([
            (lo is None or d >= lo) and (hi is None or d < hi) for d in dates
        ])
        if mask.any():
            out[f"period{k + 1}"] = mask
    return out


@dataclass
class SuiteResult:
    ks_table: pd.DataFrame
    ad_table: pd.DataFrame
    backtest_report: pd.DataFrame
    gof_results: dict
    backtest_results: dict
    n_windows: int


def statistical_suite(
    data: AlignedReturns,
    window: WindowSpec,
    config: RunConfig | None = None,
    bundles: list | None = None,
    models=None,
    progress=None,
) -> SuiteResult:
    """In-sample KS/AD rejection tables plus per-period CLR/BLR/AS backtests."""
    config = config or RunConfig()
    models = tuple(models if models is not None else config.models)
    if bundles is None:
        bundles = estimate_windows(data, window, config, models=models,
                                   need_mnts="agnts" in models, progress=progress)

    gof_results: dict = {(a, m): [] for a in data.asset_ids for m in models}
    usable = [b for b in bundles if b.fits]
    for b in usable:
        for model in models:
            fam = MODEL_FAMILY[model]
            for j, asset in enumerate(data.asset_ids):
                fit = b.fits[fam][j]
                eta = fit.residuals
                if model == "agnormal":
                    cdf_fn = lambda x: ndtr(x)
                elif model == "agt":
                    cdf_fn = lambda x, nu=fit.params.nu: std_t_cdf(x, nu)
                else:
                    table = b.mnts.fit_info["margin_tables"][j]
                    cdf_fn = table.cdf_at
                gof_results[(asset, model)].append((
                    ks_test(eta, cdf_fn, distribution=model),
                    ad_test(eta, cdf_fn, distribution=model),
                ))

    ks_map = {k: [p[0] for p in v] for k, v in gof_results.items()}
    ad_map = {k: [p[1] for p in v] for k, v in gof_results.items()}
    ks_table = rejection_table(ks_map, assets=data.asset_ids, models=models)
    ad_table = rejection_table(ad_map, assets=data.asset_ids, models=models)

    streams = build_forecast_streams(bundles, data, config, models=models)
    backtest_results: dict = {}
    rows = []
    first_key = next(iter(streams))
    periods = split_periods(streams[first_key].dates, config.period_breaks)
    for (asset, model), stream in streams.items():
        for period, mask in periods.items():
            sub = ForecastStream(
                dates=tuple(np.array(stream.dates, dtype=object)[mask]),
                var_forecasts=stream.var_forecasts[mask],
                avar_forecasts=stream.avar_forecasts[mask],
                realized=stream.realized[mask],
                cdf_forecasts=[c for c, m in zip(stream.cdf_forecasts, mask) if m],
                simulator=_mask_simulator(stream.simulator, mask),
            )
            entry: dict = {"asset": asset, "model": model, "period": period, "n_days": int(mask.sum())}
            try:
                from .backtests import BreachSeries

                entry["clr"] = clr_test(BreachSeries.from_stream(sub), config.epsilon)["p_value"]
            except EngineError as exc:
                entry["clr"] = float("nan")
                entry["note"] = f"clr: {exc}"
            try:
                entry["blr"] = blr_tail_test(sub, config.epsilon)["p_value"]
            except EngineError as exc:
                entry["blr"] = float("nan")
                entry["note"] = f"blr: {exc}"
            try:
                seed = derive_seed(config.seed, f"as|{asset}|{model}|{period}", "as")
                entry["as"] = as_test(sub, config.epsilon, n_sim=max(1000, config.backtest_n_sim), seed=seed)["p_value"]
            except EngineError as exc:
                entry["as"] = float("nan")
                entry["note"] = f"as: {exc}"
            backtest_results[(asset, model, period)] = entry
            rows.append(entry)

    report = pd.DataFrame(rows)
    return SuiteResult(ks_table=ks_table, ad_table=ad_table, backtest_report=report,
                       gof_results=gof_results, backtest_results=backtest_results,
                       n_windows=len(usable))


def _mask_simulator(simulator, mask: np.ndarray):
    def masked(n_paths, rng):
        return np.asarray(simulator(n_paths, rng))[:, mask]

    return masked
