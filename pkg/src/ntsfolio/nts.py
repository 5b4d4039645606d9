"""Univariate standard NTS and multivariate NTS distribution kernel.

Construction used throughout:

    X = mu + beta * (T - 1) + diag(gamma) * sqrt(T) * eps,   eps ~ N(0, Sigma)

where T is a tempered stable subordinator with stability index alpha/2 and
tempering rate theta, normalized to E[T] = 1. Its Laplace transform is

    E[exp(-s T)] = exp(-k * ((theta + s)^(alpha/2) - theta^(alpha/2))),
    k = 2 * theta^(1 - alpha/2) / alpha,

which gives Var(T) = (2 - alpha) / (2 theta). A margin is standardized (zero
mean, unit variance) exactly when mu_i = 0 and

    gamma_i^2 = 1 - beta_i^2 * (2 - alpha) / (2 theta),

forcing |beta_i| < sqrt(2 theta / (2 - alpha)).

Densities and CDFs come from FFT inversion of the characteristic function.
The real-space grid half-width fixes the frequency step (aliasing control),
and the grid size grows as a power of two until the characteristic function
magnitude at the top frequency falls below ``cf_tol`` (truncation control);
density tails beyond the resolvable floor are extrapolated exponentially.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AccuracyError,
    EstimationError,
    InsufficientDataError,
    ValidationError,
)
from .risk import ScenarioMatrix


@dataclass(frozen=True)
class FftConfig:
    """Inversion-grid settings; ``m`` is the default size, ``m_max`` the cap."""

    m: int = 2**16
    m_max: int = 2**20
    cf_tol: float = 1e-10
    x_hi: float = 60.0  # real-space half-width for standardized margins

    def key(self) -> tuple:
        return (self.m, self.m_max, self.cf_tol, self.x_hi)


DEFAULT_FFT = FftConfig()
FIT_FFT = FftConfig(m=2**13)


def _laplace_exponent(s, alpha: float, theta: float):
    """Exponent l(s) with E[exp(-s T)] = exp(-l(s)); complex-safe."""
    ah = 0.5 * alpha
    k = 2.0 * theta ** (1.0 - ah) / alpha
    return k * ((theta + s) ** ah - theta**ah)


def _std_margin_gamma(alpha: float, theta: float, beta):
    arg = 1.0 - np.asarray(beta) ** 2 * (2.0 - alpha) / (2.0 * theta)
    return np.sqrt(arg)


def beta_bound(alpha: float, theta: float) -> float:
    """Admissible skew range for a standardized margin: |beta| < bound."""
    return math.sqrt(2.0 * theta / (2.0 - alpha))


# ---------------------------------------------------------------------------
# FFT inversion tables
# ---------------------------------------------------------------------------


class DistributionTable:
    """Tabulated density/CDF on a uniform grid with exponential tail handling."""

    def __init__(self, x: np.ndarray, pdf: np.ndarray, diagnostics: dict | None = None):
        self.x = x
        dx = x[1] - x[0]
        pdf = np.clip(pdf, 0.0, None)
        cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) * (0.5 * dx))])
        mass = cdf[-1]
        if not 0.999 <= mass <= 1.001:
            raise AccuracyError(
                f"inverted density integrates to {mass:.6g}, not 1",
                diagnostics={"mass": mass, **(diagnostics or {})},
            )
        self.pdf = pdf / mass
        self.cdf = np.clip(cdf / mass, 0.0, 1.0)
        self.diagnostics = dict(diagnostics or {})
        # Strictly increasing knots for quantile inversion.
        _, first = np.unique(self.cdf, return_index=True)
        self._q_cdf = self.cdf[first]
        self._q_x = self.x[first]
        # Exponential-tail anchors at extreme quantiles.
        self._lo = self._anchor(1e-9, side="lo")
        self._hi = self._anchor(1.0 - 1e-9, side="hi")

    def _anchor(self, q: float, side: str) -> tuple:
        xa = float(np.interp(q, self._q_cdf, self._q_x))
        i = int(np.clip(np.searchsorted(self.x, xa), 1, len(self.x) - 2))
        fa = max(float(self.pdf[i]), 1e-300)
        if side == "lo":
            Fa = max(float(self.cdf[i]), 1e-300)
            lam = fa / Fa  # F(x) ~ Fa * exp(lam * (x - xa)) below
        else:
            Fa = max(float(1.0 - self.cdf[i]), 1e-300)
            lam = fa / Fa  # 1 - F(x) ~ Fa * exp(-lam * (x - xa)) above
        return (float(self.x[i]), Fa, fa, lam)

    def cdf_at(self, xq):
        xq = np.asarray(xq, dtype=float)
        out = np.interp(xq, self.x, self.cdf)
        xa, Fa, _, lam = self._lo
        below = xq < self.x[0]
        if np.any(below):
            out = np.where(below, Fa * np.exp(lam * (xq - xa)), out)
        xa, Fa, _, lam = self._hi
        above = xq > self.x[-1]
        if np.any(above):
            out = np.where(above, 1.0 - Fa * np.exp(-lam * (xq - xa)), out)
        return np.clip(out, 0.0, 1.0)

    def quantile_at(self, q):
        q = np.asarray(q, dtype=float)
        if np.any(q <= 0.0) or np.any(q >= 1.0):
            raise ValidationError("quantile probabilities must lie strictly in (0, 1)")
        return np.interp(q, self._q_cdf, self._q_x)

    def logpdf_at(self, xq):
        xq = np.asarray(xq, dtype=float)
        out = np.log(np.maximum(np.interp(xq, self.x, self.pdf), 1e-300))
        xa, _, fa, lam = self._lo
        below = xq < xa
        if np.any(below):
            out = np.where(below, math.log(fa) + lam * (xq - xa), out)
        xa, _, fa, lam = self._hi
        above = xq > xa
        if np.any(above):
            out = np.where(above, math.log(fa) - lam * (xq - xa), out)
        return out

    def sample(self, n: int, rng: np.random.Generator, positive: bool = False) -> np.ndarray:
        draws = self.quantile_at(rng.random(n) * (1.0 - 2e-16) + 1e-16)
        if positive:
            draws = np.maximum(draws, 1e-12)
        return draws


def _find_cutoff(cf_mag, tol: float, u_max: float) -> float:
    """Smallest power-of-two frequency with |cf| below tol (doubling search)."""
    u = 1.0
    while cf_mag(u) > tol:
        u *= 2.0
        if u > u_max:
            raise AccuracyError(
                "characteristic function decays too slowly for the frequency cap",
                diagnostics={"u_max": u_max, "cf_mag_at_cap": cf_mag(u_max), "cf_tol": tol},
            )
    return u


def invert_cf(cf, x_hi: float, cfg: FftConfig = DEFAULT_FFT) -> DistributionTable:
    """Tabulate the density of a real random variable from its char function.

    ``cf`` maps a nonnegative frequency array to complex values. The grid is
    x_k = -x_hi + k * dx with dx * du = 2 pi / M; M grows (up to ``m_max``)
    until the top frequency exceeds the |cf| < cf_tol cutoff.
    """
    du = math.pi / x_hi

    def cf_mag(u):
        return abs(complex(np.asarray(cf(np.array([u])))[0]))

    cutoff = _find_cutoff(cf_mag, cfg.cf_tol, u_max=du * cfg.m_max)
    m = cfg.m
    while m * du < cutoff:
        m *= 2
    if m > cfg.m_max:
        raise AccuracyError(
            "inversion grid would exceed the configured maximum size",
            diagnostics={"m_needed": m, "m_max": cfg.m_max, "cutoff": cutoff},
        )
    u = np.arange(m) * du
    phi = np.asarray(cf(u), dtype=complex)
    phi[0] *= 0.5  # trapezoid end weight at u = 0
    f = (du / math.pi) * np.real(np.fft.fft(phi * np.exp(1j * u * x_hi)))
    x = -x_hi + np.arange(m) * (2.0 * x_hi / m)
    return DistributionTable(x, f, diagnostics={"m": m, "cutoff": cutoff, "x_hi": x_hi, "du": du})


# ---------------------------------------------------------------------------
# Subordinator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubordinatorParams:
    """Unit-mean tempered stable subordinator (stability index alpha/2)."""

    alpha_sub: float
    theta: float
    scale_constant: float  # k in the Laplace exponent; makes E[T] = 1

    @classmethod
    def from_nts_alpha(cls, alpha: float, theta: float) -> "SubordinatorParams":
        if not 0.0 < alpha < 2.0:
            raise ValidationError("alpha must lie in (0, 2)")
        if theta <= 0.0:
            raise ValidationError("theta must be positive")
        ah = 0.5 * alpha
        return cls(alpha_sub=ah, theta=theta, scale_constant=2.0 * theta ** (1.0 - ah) / alpha)

    @property
    def variance(self) -> float:
        return (1.0 - self.alpha_sub) / self.theta

    def laplace(self, s):
        return np.exp(-self.scale_constant * ((self.theta + s) ** self.alpha_sub - self.theta**self.alpha_sub))

    def char_fn(self, u):
        return self.laplace(-1j * np.asarray(u))

    def table(self, cfg: FftConfig = DEFAULT_FFT) -> DistributionTable:
        return _subordinator_table(2.0 * self.alpha_sub, self.theta, cfg.key())

    def sample(self, n: int, rng: np.random.Generator, cfg: FftConfig = DEFAULT_FFT) -> np.ndarray:
        return self.table(cfg).sample(n, rng, positive=True)


@functools.lru_cache(maxsize=128)
def _subordinator_table(alpha: float, theta: float, cfg_key: tuple) -> DistributionTable:
    cfg = FftConfig(*cfg_key)
    sub = SubordinatorParams.from_nts_alpha(alpha, theta)
    # Tempered upper tail decays like exp(-theta t); cover it generously.
    x_hi = 1.0 + 50.0 / theta + 10.0 * math.sqrt(sub.variance)
    return invert_cf(sub.char_fn, x_hi=x_hi, cfg=cfg)


# ---------------------------------------------------------------------------
# Parameter sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StdNtsParams:
    """Standardized univariate NTS margin: zero mean, unit variance."""

    alpha: float
    theta: float
    beta: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ValidationError("alpha must lie in (0, 2)")
        if self.theta <= 0.0:
            raise ValidationError("theta must be positive")
        if abs(self.beta) >= beta_bound(self.alpha, self.theta):
            raise ValidationError(
                f"|beta| = {abs(self.beta):.6g} at or beyond the admissible bound "
                f"{beta_bound(self.alpha, self.theta):.6g}"
            )

    @property
    def gamma(self) -> float:
        return float(_std_margin_gamma(self.alpha, self.theta, self.beta))

    def char_fn(self, u):
        u = np.asarray(u, dtype=complex)
        s = 0.5 * self.gamma**2 * u**2 - 1j * self.beta * u
        return np.exp(-1j * u * self.beta - _laplace_exponent(s, self.alpha, self.theta))

    def subordinator(self) -> SubordinatorParams:
        return SubordinatorParams.from_nts_alpha(self.alpha, self.theta)

    def table(self, cfg: FftConfig = DEFAULT_FFT) -> DistributionTable:
        return _margin_table(self.alpha, self.theta, self.beta, cfg.key())


@functools.lru_cache(maxsize=256)
def _margin_table(alpha: float, theta: float, beta: float, cfg_key: tuple) -> DistributionTable:
    cfg = FftConfig(*cfg_key)
    p = StdNtsParams(alpha, theta, beta)
    return invert_cf(p.char_fn, x_hi=cfg.x_hi, cfg=cfg)


@dataclass(frozen=True, eq=False)
class MntsParams:
    """Multivariate NTS parameter set (alpha, theta, beta, gamma, mu, Sigma)."""

    alpha: float
    theta: float
    beta: np.ndarray
    gamma: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    fit_info: dict | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=float))
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float))
        object.__setattr__(self, "sigma", np.asarray(self.sigma, dtype=float))
        n = len(self.beta)
        if not 0.0 < self.alpha < 2.0:
            raise ValidationError("alpha must lie in (0, 2)")
        if self.theta <= 0.0:
            raise ValidationError("theta must be positive")
        if self.gamma.shape != (n,) or self.mu.shape != (n,) or self.sigma.shape != (n, n):
            raise ValidationError("beta, gamma, mu, sigma have inconsistent dimensions")
        if np.any(self.gamma <= 0.0):
            raise ValidationError("gamma entries must be positive")
        if not np.allclose(self.sigma, self.sigma.T, atol=1e-10):
            raise ValidationError("sigma must be symmetric")
        if not np.allclose(np.diag(self.sigma), 1.0, atol=1e-8):
            raise ValidationError("sigma must have a unit diagonal")
        if np.min(np.linalg.eigvalsh(self.sigma)) < -1e-8:
            raise ValidationError("sigma must be positive semi-definite")

    @property
    def n_assets(self) -> int:
        return len(self.beta)

    @classmethod
    def standardized(cls, alpha: float, theta: float, beta, sigma, fit_info: dict | None = None) -> "MntsParams":
        beta = np.asarray(beta, dtype=float)
        bound = beta_bound(alpha, theta)
        if np.any(np.abs(beta) >= bound):
            raise ValidationError(f"|beta| must stay below {bound:.6g} for standardized margins")
        gamma = _std_margin_gamma(alpha, theta, beta)
        return cls(alpha=alpha, theta=theta, beta=beta, gamma=gamma,
                   mu=np.zeros(len(beta)), sigma=np.asarray(sigma, dtype=float), fit_info=fit_info)

    @property
    def is_standardized(self) -> bool:
        return bool(
            np.allclose(self.mu, 0.0, atol=1e-10)
            and np.allclose(self.gamma, _std_margin_gamma(self.alpha, self.theta, self.beta), atol=1e-8)
        )

    def margin(self, i: int) -> StdNtsParams:
        if not self.is_standardized:
            raise ValidationError("margins are only exposed for standardized parameter sets")
        return StdNtsParams(alpha=self.alpha, theta=self.theta, beta=float(self.beta[i]))

    def char_fn(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_assets,):
            raise ValidationError(f"u must be a vector of length {self.n_assets}")
        gd = self.gamma * u  # diag(gamma) @ u
        s = 0.5 * gd @ self.sigma @ gd - 1j * float(self.beta @ u)
        return complex(np.exp(1j * float((self.mu - self.beta) @ u) - _laplace_exponent(s, self.alpha, self.theta)))

    def subordinator(self) -> SubordinatorParams:
        return SubordinatorParams.from_nts_alpha(self.alpha, self.theta)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha, "theta": self.theta,
            "beta": self.beta.tolist(), "gamma": self.gamma.tolist(),
            "mu": self.mu.tolist(), "sigma": self.sigma.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MntsParams":
        return cls(alpha=d["alpha"], theta=d["theta"], beta=np.array(d["beta"]),
                   gamma=np.array(d["gamma"]), mu=np.array(d["mu"]), sigma=np.array(d["sigma"]))


def char_fn(params, u):
    """Characteristic function of a StdNtsParams (scalar/array u) or MntsParams (vector u)."""
    return params.char_fn(u)


def cdf(params: StdNtsParams, x, cfg: FftConfig = DEFAULT_FFT):
    """FFT-inverted CDF of a standardized margin; scalar in, scalar out."""
    out = params.table(cfg).cdf_at(x)
    return float(out) if np.isscalar(x) else out


def quantile(params: StdNtsParams, q, cfg: FftConfig = DEFAULT_FFT):
    out = params.table(cfg).quantile_at(q)
    return float(out) if np.isscalar(q) else out


def logpdf(params: StdNtsParams, x, cfg: FftConfig = DEFAULT_FFT):
    out = params.table(cfg).logpdf_at(x)
    return float(out) if np.isscalar(x) else out


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def _psd_correlation(mat: np.ndarray, floor: float = 1e-10) -> np.ndarray:
    """Nearest-correlation projection by eigenvalue clipping and rescaling."""
    sym = 0.5 * (mat + mat.T)
    vals, vecs = np.linalg.eigh(sym)
    if np.min(vals) >= floor and np.allclose(np.diag(sym), 1.0, atol=1e-12):
        return sym
    vals = np.clip(vals, floor, None)
    fixed = (vecs * vals) @ vecs.T
    d = np.sqrt(np.diag(fixed))
    fixed = fixed / np.outer(d, d)
    np.fill_diagonal(fixed, 1.0)
    return 0.5 * (fixed + fixed.T)


def sample_mnts(
    params: MntsParams,
    n_scenarios: int,
    seed=None,
    asset_ids: tuple | None = None,
    cfg: FftConfig = DEFAULT_FFT,
) -> ScenarioMatrix:
    """Draw joint NTS residual scenarios; reproducible for a fixed seed.

    One subordinator draw per scenario mixes a correlated Gaussian vector:
    X = mu + beta * (T - 1) + diag(gamma) * sqrt(T) * Z.
    """
    if n_scenarios < 1:
        raise ValidationError("n_scenarios must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    t_draw = params.subordinator().sample(n_scenarios, rng, cfg)
    corr = _psd_correlation(params.sigma)
    try:
        chol = np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        chol = np.linalg.cholesky(corr + 1e-10 * np.eye(params.n_assets))
    z = rng.standard_normal((n_scenarios, params.n_assets)) @ chol.T
    values = params.mu + params.beta * (t_draw[:, None] - 1.0) + params.gamma * np.sqrt(t_draw)[:, None] * z
    ids = tuple(asset_ids) if asset_ids is not None else tuple(f"a{i}" for i in range(params.n_assets))
    return ScenarioMatrix(values=values, asset_ids=ids, seed=seed)


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

_ALPHA_LO, _ALPHA_HI = 0.1, 1.97
_COARSE_ALPHAS = (0.6, 1.0, 1.4, 1.8)
_COARSE_THETAS = (0.25, 1.0, 4.0)


def _subordinator_grid_ok(alpha: float, theta: float, cfg: FftConfig) -> bool:
    """True when the subordinator inversion provably fits under the grid cap.

    Small (alpha, theta) corners make the subordinator characteristic
    function decay so slowly that no affordable grid reaches the cutoff;
    the fit treats that region as inadmissible so every returned parameter
    set stays sampleable. The factor 4 covers the power-of-two rounding of
    the cutoff search.
    """
    sub = SubordinatorParams.from_nts_alpha(alpha, theta)
    x_hi = 1.0 + 50.0 / theta + 10.0 * math.sqrt(sub.variance)
    u_probe = (math.pi / x_hi) * (cfg.m_max / 4)
    return bool(abs(complex(np.asarray(sub.char_fn(np.array([u_probe])))[0])) < cfg.cf_tol)


def _margin_density_grid(alpha, theta, betas, cfg: FftConfig):
    """Densities of all standardized margins in one batched FFT; (x, pdf rows)."""
    betas = np.asarray(betas, dtype=float)
    gammas = _std_margin_gamma(alpha, theta, betas)
    x_hi = cfg.x_hi
    du = math.pi / x_hi

    def mag(u):
        s = 0.5 * gammas**2 * u**2 - 1j * betas * u
        return float(np.max(np.abs(np.exp(-1j * u * betas - _laplace_exponent(s, alpha, theta)))))

    cutoff = _find_cutoff(mag, cfg.cf_tol, u_max=du * cfg.m_max)
    m = cfg.m
    while m * du < cutoff:
        m *= 2
    if m > cfg.m_max:
        raise AccuracyError("margin density grid exceeds the configured cap",
                            diagnostics={"m_needed": m, "m_max": cfg.m_max})
    u = np.arange(m) * du
    s = 0.5 * gammas[:, None] ** 2 * u[None, :] ** 2 - 1j * betas[:, None] * u[None, :]
    phi = np.exp(-1j * u[None, :] * betas[:, None] - _laplace_exponent(s, alpha, theta))
    phi[:, 0] *= 0.5
    f = (du / math.pi) * np.real(np.fft.fft(phi * np.exp(1j * u * x_hi)[None, :], axis=1))
    x = -x_hi + np.arange(m) * (2.0 * x_hi / m)
    return x, np.clip(f, 0.0, None)


def _joint_margin_loglik(cols, alpha, theta, betas, cfg: FftConfig) -> float:
    if not np.all(np.isfinite(_std_margin_gamma(alpha, theta, np.asarray(betas)))):
        return -np.inf
    x, pdf = _margin_density_grid(alpha, theta, betas, cfg)
    total = 0.0
    for j, col in enumerate(cols):
        total += float(np.sum(np.log(np.maximum(np.interp(col, x, pdf[j]), 1e-300))))
    return total


def fit_std_mnts(
    residuals: np.ndarray,
    cfg: FftConfig = FIT_FFT,
    max_iter: int = 1200,
    min_obs: int = 250,
) -> MntsParams:
    """Fit a standard multivariate NTS law to standardized residuals.

    Shared (alpha, theta) and per-margin beta maximize the summed univariate
    margin log-likelihoods (FFT densities): a coarse (alpha, theta) profile
    grid with beta = 0 seeds a Nelder-Mead refinement of all margin
    parameters jointly on an unconstrained transform. gamma follows from the
    standardization constraint. Sigma starts from the residual sample
    correlation, removes the skew contribution beta_i beta_j Var(T) implied
    by the construction, and is projected back to a valid correlation matrix
    by eigenvalue clipping.
    """
    from scipy.optimize import minimize
    from scipy.special import expit, logit

    eta = np.asarray(residuals, dtype=float)
    if eta.ndim != 2:
        raise ValidationError("residuals must be an N x n matrix")
    n_obs, n_assets = eta.shape
    if n_obs < min_obs:
        raise InsufficientDataError(f"need at least {min_obs} residual rows, got {n_obs}")
    if not np.all(np.isfinite(eta)):
        raise ValidationError("residuals must be finite")
    col_var = eta.var(axis=0)
    col_mean = eta.mean(axis=0)
    if np.any(col_var < 1e-12):
        raise EstimationError("degenerate residual margin with (near) zero variance")
    if np.any(np.abs(col_mean) > 0.5) or np.any(col_var < 0.3) or np.any(col_var > 3.0):
        raise ValidationError("residuals do not look standardized (mean ~ 0, variance ~ 1)")

    cols = [np.ascontiguousarray(eta[:, j]) for j in range(n_assets)]

    best = (-np.inf, None, None)
    for al in _COARSE_ALPHAS:
        for th in _COARSE_THETAS:
            if not _subordinator_grid_ok(al, th, cfg):
                continue
            ll = _joint_margin_loglik(cols, al, th, np.zeros(n_assets), cfg)
            if ll > best[0]:
                best = (ll, al, th)
    ll0, al0, th0 = best
    if not np.isfinite(ll0):
        raise EstimationError("coarse profile grid produced no finite log-likelihood")

    def unpack(xv):
        alpha = _ALPHA_LO + (_ALPHA_HI - _ALPHA_LO) * expit(xv[0])
        theta = math.exp(float(np.clip(xv[1], -4.0, 4.5)))
        betas = 0.999 * beta_bound(alpha, theta) * np.tanh(xv[2:])
        return alpha, theta, betas

    def nobj(xv):
        alpha, theta, betas = unpack(xv)
        if not _subordinator_grid_ok(alpha, theta, cfg):
            return 1e12
        try:
            ll = _joint_margin_loglik(cols, alpha, theta, betas, cfg)
        except AccuracyError:
            return 1e12
        return -ll if np.isfinite(ll) else 1e12

    x0 = np.concatenate([
        [logit((al0 - _ALPHA_LO) / (_ALPHA_HI - _ALPHA_LO)), math.log(th0)],
        np.zeros(n_assets),
    ])
    # fatol well below the likelihood's own sampling noise (O(1) per fit)
    res = minimize(nobj, x0, method="Nelder-Mead",
                   options=dict(maxiter=max_iter, maxfev=max_iter, xatol=3e-4, fatol=1e-3, adaptive=True))
    if not np.isfinite(res.fun) or res.fun >= 1e12:
        raise EstimationError("margin likelihood optimization failed to find a finite optimum")
    alpha, theta, betas = unpack(res.x)

    # Per-margin skew polish at the selected (alpha, theta): a bounded 1-D
    # search per margin removes the simplex's residual noise from beta.
    from scipy.optimize import minimize_scalar

    bound = beta_bound(alpha, theta)
    betas = np.array(betas, dtype=float)
    for j in range(n_assets):
        def neg_margin_ll(bj, j=j):
            return -_joint_margin_loglik([cols[j]], alpha, theta, np.array([bj]), cfg)

        current = neg_margin_ll(betas[j])
        res_j = minimize_scalar(neg_margin_ll, bounds=(-0.999 * bound, 0.999 * bound),
                                method="bounded", options=dict(xatol=1e-4 * bound))
        if np.isfinite(res_j.fun) and res_j.fun < current:
            betas[j] = float(res_j.x)

    boundary = np.abs(betas) > 0.995 * beta_bound(alpha, theta)
    if np.any(boundary):
        warnings.warn(
            f"beta at the admissible boundary for margins {np.flatnonzero(boundary).tolist()}; values clamped",
            RuntimeWarning,
            stacklevel=2,
        )

    gammas = _std_margin_gamma(alpha, theta, betas)
    sample_corr = np.corrcoef(eta, rowvar=False)
    if n_assets == 1:
        sample_corr = np.array([[1.0]])
    v = (2.0 - alpha) / (2.0 * theta)  # Var(T)
    sigma = (sample_corr - v * np.outer(betas, betas)) / np.outer(gammas, gammas)
    np.fill_diagonal(sigma, 1.0)
    sigma = _psd_correlation(np.clip(sigma, -0.999, 0.999))

    x_grid, pdf_grid = _margin_density_grid(alpha, theta, betas, cfg)
    tables = [DistributionTable(x_grid, pdf_grid[j]) for j in range(n_assets)]
    fit_info = {
        "loglik": float(-res.fun),
        "converged": bool(res.success),
        "nfev": int(res.nfev),
        "coarse_start": {"alpha": al0, "theta": th0, "loglik": float(ll0)},
        "beta_boundary": boundary.tolist(),
        "margin_tables": tables,
    }
    return MntsParams.standardized(alpha=alpha, theta=theta, beta=betas, sigma=sigma, fit_info=fit_info)
