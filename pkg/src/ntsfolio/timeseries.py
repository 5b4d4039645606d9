"""ARMA(1,1)-GARCH(1,1) estimation, filtering, and one-step forecasting.

Model:

    r_t     = c + ar * r_{t-1} + ma * eps_{t-1} + eps_t
    eps_t   = sigma_t * eta_t
    sigma_t^2 = omega + a * eps_{t-1}^2 + b * sigma_{t-1}^2

with eta_t i.i.d. standard normal or standardized Student-t (unit variance
for any nu > 2). Estimation is maximum likelihood on an unconstrained
reparameterization (log for omega, nested logistic for the (a, b) simplex,
scaled atanh for ar and ma) from several deterministic starting points; the
returned log-likelihood is never below the best starting value.

Presample convention: the lagged return before the window is the window mean,
the presample innovation is zero, and the presample variance is the window
variance. Both recursions are linear filters, so the whole likelihood runs
through scipy.signal.lfilter.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter
from scipy.special import expit, gammaln, logit
from scipy.stats import t as student_t

from .data import ReturnSeries
from .errors import DegenerateSeriesError, EstimationError, InsufficientDataError, ValidationError

LOG_2PI = math.log(2.0 * math.pi)
_AR_CAP = 1.0 - 1e-6  # |ar|, |ma| < 1
_AB_CAP = 1.0 - 1e-6  # a + b <= 1 - 1e-6
_NU_MIN, _NU_MAX = 2.05, 200.0


@dataclass(frozen=True)
class ArmaGarchParams:
    c: float
    ar: float
    ma: float
    omega: float
    a: float
    b: float
    dist: str = "normal"  # "normal" or "t"
    nu: float | None = None

    def __post_init__(self):
        if self.dist not in ("normal", "t"):
            raise ValidationError(f"dist must be 'normal' or 't', got {self.dist!r}")
        if self.dist == "t" and (self.nu is None or self.nu <= 2):
            raise ValidationError("Student-t innovations need nu > 2")
        if self.omega <= 0:
            raise ValidationError("omega must be positive")
        if self.a < 0 or self.b < 0:
            raise ValidationError("a and b must be nonnegative")
        if self.a + self.b >= 1:
            raise ValidationError("covariance stationarity requires a + b < 1")
        if abs(self.ar) >= 1:
            raise ValidationError("|ar| must be below 1")

    def to_dict(self) -> dict:
        return {
            "c": self.c, "ar": self.ar, "ma": self.ma,
            "omega": self.omega, "a": self.a, "b": self.b,
            "dist": self.dist, "nu": self.nu,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArmaGarchParams":
        return cls(**d)


@dataclass(frozen=True)
class Presample:
    """State assumed to hold just before the first observation."""

    r: float
    eps: float = 0.0
    sig2: float = 1.0


@dataclass(frozen=True)
class Forecast:
    mu_next: float
    sigma_next: float

    def __post_init__(self):
        if self.sigma_next <= 0:
            raise ValidationError("sigma_next must be positive")


@dataclass
class GarchFit:
    """Fitted parameters plus the filtered state on the estimation window."""

    params: ArmaGarchParams
    returns: np.ndarray
    residuals: np.ndarray  # standardized eta_t
    eps: np.ndarray
    sigma: np.ndarray
    loglik: float
    presample: Presample
    convergence: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return bool(self.convergence.get("converged", False))

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "loglik": self.loglik,
            "presample": {"r": self.presample.r, "eps": self.presample.eps, "sig2": self.presample.sig2},
            "convergence": self.convergence,
            "n_obs": int(len(self.returns)),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class FitOptions:
    min_obs: int = 100
    maxiter: int = 150
    ftol: float = 1e-8  # relative log-likelihood change
    gtol: float = 1e-6  # projected gradient norm
    multistarts: int = 5
    # Starts are ranked by their initial likelihood; the best `full_polish`
    # get the full iteration budget, the rest a short safety-net run.
    full_polish: int = 2
    screen_maxiter: int = 30


# Deterministic multi-start grid: (a0, b0, ar0, ma0, nu0).
_STARTS = (
    (0.05, 0.90, 0.0, 0.0, 8.0),
    (0.10, 0.80, 0.0, 0.0, 8.0),
    (0.05, 0.50, 0.2, -0.1, 8.0),
    (0.20, 0.70, 0.0, 0.0, 5.0),
    (0.02, 0.40, -0.2, 0.1, 20.0),
)


def _unpack(x: np.ndarray, dist: str) -> ArmaGarchParams:
    c = x[0]
    ar = _AR_CAP * math.tanh(x[1])
    ma = _AR_CAP * math.tanh(x[2])
    omega = math.exp(min(x[3], 50.0))
    persistence = _AB_CAP * expit(x[4])
    ratio = expit(x[5])
    nu = None
    if dist == "t":
        nu = _NU_MIN + (_NU_MAX - _NU_MIN) * expit(x[6])
    return ArmaGarchParams(c=c, ar=ar, ma=ma, omega=omega,
                           a=persistence * ratio, b=persistence * (1.0 - ratio),
                           dist=dist, nu=nu)


def _pack(p: ArmaGarchParams) -> np.ndarray:
    persistence = min(p.a + p.b, _AB_CAP - 1e-9)
    ratio = p.a / persistence if persistence > 0 else 0.5
    x = [
        p.c,
        math.atanh(np.clip(p.ar / _AR_CAP, -1 + 1e-12, 1 - 1e-12)),
        math.atanh(np.clip(p.ma / _AR_CAP, -1 + 1e-12, 1 - 1e-12)),
        math.log(p.omega),
        logit(np.clip(persistence / _AB_CAP, 1e-12, 1 - 1e-12)),
        logit(np.clip(ratio, 1e-12, 1 - 1e-12)),
    ]
    if p.dist == "t":
        x.append(logit(np.clip((p.nu - _NU_MIN) / (_NU_MAX - _NU_MIN), 1e-12, 1 - 1e-12)))
    return np.array(x)


def _filter(params: ArmaGarchParams, r: np.ndarray, pre: Presample):
    """Run both recursions; returns (eps, sig2). Exact and loop-free."""
    T = len(r)
    rlag = np.empty(T)
    rlag[0] = pre.r
    rlag[1:] = r[:-1]
    x = r - params.c - params.ar * rlag
    x[0] -= params.ma * pre.eps
    eps = lfilter([1.0], [1.0, params.ma], x)
    u = np.empty(T)
    u[0] = params.omega + params.a * pre.eps**2 + params.b * pre.sig2
    u[1:] = params.omega + params.a * eps[:-1] ** 2
    sig2 = lfilter([1.0], [1.0, -params.b], u)
    return eps, sig2


def _loglik(params: ArmaGarchParams, r: np.ndarray, pre: Presample) -> float:
    eps, sig2 = _filter(params, r, pre)
    if np.any(sig2 <= 0) or not np.all(np.isfinite(sig2)):
        return -np.inf
    with np.errstate(over="ignore", invalid="ignore"):  # wild optimizer probes
        z2 = eps**2 / sig2
        if params.dist == "normal":
            ll = -0.5 * np.sum(LOG_2PI + np.log(sig2) + z2)
        else:
            nu = params.nu
            const = gammaln((nu + 1) / 2) - gammaln(nu / 2) - 0.5 * math.log(math.pi * (nu - 2))
            ll = np.sum(const - 0.5 * np.log(sig2) - ((nu + 1) / 2) * np.log1p(z2 / (nu - 2)))
    return float(ll) if np.isfinite(ll) else -np.inf


def default_presample(r: np.ndarray) -> Presample:
    return Presample(r=float(np.mean(r)), eps=0.0, sig2=float(np.var(r)))


def fit_arma_garch(returns, dist: str = "normal", opts: FitOptions | None = None) -> GarchFit:
    """Maximum-likelihood ARMA(1,1)-GARCH(1,1) fit.

    Raises :class:`DegenerateSeriesError` on a constant window and
    :class:`EstimationError` (carrying the best-effort fit) when no start
    converges. The reported ``convergence`` dict is honest: ``converged``
    reflects the optimizer status of the winning start.
    """
    r = returns.returns if isinstance(returns, ReturnSeries) else np.asarray(returns, dtype=float)
    opts = opts or FitOptions()
    if len(r) < opts.min_obs:
        raise InsufficientDataError(f"need at least {opts.min_obs} observations, got {len(r)}")
    if not np.all(np.isfinite(r)):
        raise ValidationError("returns must be finite")
    v = float(np.var(r))
    if v <= 0.0:
        raise DegenerateSeriesError("constant return window has no variance to model")
    pre = default_presample(r)
    m = float(np.mean(r))

    def nobj(x):
        try:
            p = _unpack(x, dist)
        except ValidationError:
            return 1e12
        ll = _loglik(p, r, pre)
        return -ll if np.isfinite(ll) else 1e12

    n_starts = max(1, min(opts.multistarts, len(_STARTS)))
    starts = []
    for a0, b0, ar0, ma0, nu0 in _STARTS[:n_starts]:
        p0 = ArmaGarchParams(
            c=m * (1.0 - ar0), ar=ar0, ma=ma0,
            omega=v * (1.0 - a0 - b0), a=a0, b=b0,
            dist=dist, nu=nu0 if dist == "t" else None,
        )
        starts.append((_pack(p0), _loglik(p0, r, pre)))
    start_lls = [ll for _, ll in starts]
    order = np.argsort([-ll for ll in start_lls])  # most promising first

    best_x, best_ll, best_success = None, -np.inf, False
    for rank, idx in enumerate(order):
        x0, ll0 = starts[idx]
        maxiter = opts.maxiter if rank < opts.full_polish else opts.screen_maxiter
        res = minimize(
            nobj, x0, method="L-BFGS-B",
            options=dict(maxiter=maxiter, ftol=opts.ftol, gtol=opts.gtol),
        )
        ll_opt = -res.fun
        # Guard the multi-start monotonicity guarantee.
        x_win, ll_win = (res.x, ll_opt) if ll_opt >= ll0 else (x0, ll0)
        if ll_win > best_ll:
            best_x, best_ll, best_success = x_win, ll_win, bool(res.success)
    if not best_success and best_x is not None and np.isfinite(best_ll):
        # The winner came from a screening run; give it the full budget.
        res = minimize(nobj, best_x, method="L-BFGS-B",
                       options=dict(maxiter=opts.maxiter, ftol=opts.ftol, gtol=opts.gtol))
        if -res.fun >= best_ll:
            best_x, best_ll, best_success = res.x, -res.fun, bool(res.success)

    params = _unpack(best_x, dist)
    eps, sig2 = _filter(params, r, pre)
    sigma = np.sqrt(sig2)
    fit = GarchFit(
        params=params,
        returns=r,
        residuals=eps / sigma,
        eps=eps,
        sigma=sigma,
        loglik=best_ll,
        presample=pre,
        convergence={
            "converged": best_success,
            "n_starts": n_starts,
            "start_logliks": [float(s) for s in start_lls],
            "loglik": float(best_ll),
        },
    )
    if not np.isfinite(best_ll):
        raise EstimationError("no start produced a finite log-likelihood", best_effort=fit)
    if not best_success:
        raise EstimationError("optimizer failed to converge from every start", best_effort=fit)
    return fit


def refilter_fit(params: ArmaGarchParams, returns) -> GarchFit:
    """Apply existing parameters to a (new) window: fresh filtered state.

    Used by the refit throttle and by checkpoint restoration; deterministic
    and cheap. The convergence dict marks the fit as refiltered.
    """
    r = returns.returns if isinstance(returns, ReturnSeries) else np.asarray(returns, dtype=float)
    pre = default_presample(r)
    eps, sig2 = _filter(params, r, pre)
    sigma = np.sqrt(sig2)
    return GarchFit(
        params=params, returns=r, residuals=eps / sigma, eps=eps, sigma=sigma,
        loglik=_loglik(params, r, pre), presample=pre,
        convergence={"converged": True, "refiltered": True},
    )


def filter_residuals(fit: GarchFit, returns=None, presample: Presample | None = None) -> np.ndarray:
    """Standardized residuals eta_t = eps_t / sigma_t under the fitted params.

    Deterministic given the parameters; ``returns``/``presample`` override the
    fit's own window, e.g. to refilter a simulated path with its exact
    presample state.
    """
    r = fit.returns if returns is None else np.asarray(returns, dtype=float)
    pre = presample or fit.presample
    eps, sig2 = _filter(fit.params, r, pre)
    return eps / np.sqrt(sig2)


def forecast_one_step(fit: GarchFit) -> Forecast:
    """Conditional mean and volatility for the day after the window."""
    p = fit.params
    r_T = float(fit.returns[-1])
    eps_T = float(fit.eps[-1])
    sig2_T = float(fit.sigma[-1] ** 2)
    mu = p.c + p.ar * r_T + p.ma * eps_T
    sig2 = p.omega + p.a * eps_T**2 + p.b * sig2_T
    return Forecast(mu_next=float(mu), sigma_next=float(math.sqrt(sig2)))


def simulate_arma_garch(
    params: ArmaGarchParams,
    n_obs: int,
    seed=None,
    innovations: np.ndarray | None = None,
    presample: Presample | None = None,
    burn_in: int = 0,
):
    """Simulate a return path; returns (returns, innovations, sigma, presample).

    With ``burn_in`` > 0 the recursion warms up from the unconditional state
    and the reported presample is the state right before the kept sample, so
    refiltering with it reproduces the kept innovations exactly.
    """
    total = n_obs + burn_in
    if innovations is None:
        rng = np.random.default_rng(seed)
        if params.dist == "t":
            eta = rng.standard_t(params.nu, total) * math.sqrt((params.nu - 2) / params.nu)
        else:
            eta = rng.standard_normal(total)
    else:
        eta = np.asarray(innovations, dtype=float)
        if len(eta) != total:
            raise ValidationError(f"need {total} innovations, got {len(eta)}")
    uncond_var = params.omega / (1.0 - params.a - params.b)
    uncond_mean = params.c / (1.0 - params.ar)
    pre = presample or Presample(r=uncond_mean, eps=0.0, sig2=uncond_var)
    r = np.empty(total)
    sig2 = np.empty(total)
    eps = np.empty(total)
    r_p, e_p, s_p = pre.r, pre.eps, pre.sig2
    for t in range(total):
        s = params.omega + params.a * e_p**2 + params.b * s_p
        e = math.sqrt(s) * eta[t]
        r[t] = params.c + params.ar * r_p + params.ma * e_p + e
        sig2[t], eps[t] = s, e
        r_p, e_p, s_p = r[t], e, s
    k = burn_in
    kept_pre = pre if k == 0 else Presample(r=float(r[k - 1]), eps=float(eps[k - 1]), sig2=float(sig2[k - 1]))
    return r[k:], eta[k:], np.sqrt(sig2[k:]), kept_pre


def std_t_cdf(x, nu: float):
    """CDF of the unit-variance Student-t innovation."""
    scale = math.sqrt((nu - 2.0) / nu)
    return student_t.cdf(np.asarray(x, dtype=float) / scale, df=nu)


def std_t_ppf(q, nu: float):
    scale = math.sqrt((nu - 2.0) / nu)
    return student_t.ppf(np.asarray(q, dtype=float), df=nu) * scale
