"""Scenario-based mean-risk portfolio optimization with transaction costs.

Objective (scale-free in w thanks to positively homogeneous risk measures):

    rho(w) / (w' mu)  +  C * [ lambda * ||w - w_prev||_1 / (w' mu) ]^2

minimized over the weight box subject to w' mu > 0, where rho evaluates SD,
AVaR, or Foster-Hart risk on the portfolio's scenario outcomes. Candidates
with nonpositive expected return (or, for Foster-Hart, candidates whose
outcome sample is not a gamble) receive a +inf sentinel, which keeps the
risk definitions intact while the direct-search solver routes around them.

Because the objective is homogeneous of degree zero when lambda = 0, the
solution is a ray; returned weights are normalized to unit gross exposure
(sum |w_i| = 1) so daily returns are comparable across days and strategies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import InfeasibleProblemError, ValidationError
from .risk import ScenarioMatrix, avar, foster_hart, is_gamble, portfolio_outcomes, sd


@dataclass(frozen=True)
class SolverSettings:
    multistarts: int = 8
    maxfev: int = 400
    xatol: float = 1e-5
    fatol: float = 1e-9
    fh_tol: float = 1e-10


@dataclass
class OptimizationProblem:
    scenarios: ScenarioMatrix
    mu: np.ndarray | None = None  # defaults to scenario column means
    w_prev: np.ndarray | None = None
    rho: str = "sd"  # "sd" | "avar" | "fh"
    lambda_: float = 1e-7
    cost_aversion: float = 0.0
    long_only: bool = False
    box: float = 1.0
    epsilon: float = 0.01  # tail level for rho = "avar"
    eps_mu: float = 1e-8

    def __post_init__(self):
        n = self.scenarios.n_assets
        self.mu = np.asarray(self.mu, dtype=float) if self.mu is not None else self.scenarios.values.mean(axis=0)
        self.w_prev = np.asarray(self.w_prev, dtype=float) if self.w_prev is not None else np.zeros(n)
        if self.rho not in ("sd", "avar", "fh"):
            raise ValidationError(f"rho must be 'sd', 'avar' or 'fh', got {self.rho!r}")
        if self.lambda_ < 0 or self.cost_aversion < 0:
            raise ValidationError("lambda and cost aversion must be nonnegative")
        if len(self.mu) != n or len(self.w_prev) != n:
            raise ValidationError("mu / w_prev dimension mismatch with scenarios")
        if self.box <= 0:
            raise ValidationError("box bound must be positive")

    @property
    def n_assets(self) -> int:
        return self.scenarios.n_assets

    @property
    def bounds(self) -> list:
        lo = 0.0 if self.long_only else -self.box
        return [(lo, self.box)] * self.n_assets


@dataclass
class OptimizationResult:
    weights: np.ndarray
    objective: float
    risk: float
    expected_return: float
    feasible: bool
    diagnostics: dict = field(default_factory=dict)


def _clip_to_box(problem: OptimizationProblem, w: np.ndarray) -> np.ndarray:
    lo = 0.0 if problem.long_only else -problem.box
    return np.clip(w, lo, problem.box)


def _portfolio_risk(problem: OptimizationProblem, outcomes: np.ndarray, fh_state: dict | None = None) -> float:
    if problem.rho == "sd":
        return sd(outcomes)
    if problem.rho == "avar":
        return avar(outcomes, problem.epsilon)
    if not is_gamble(outcomes):
        return math.inf
    hint = fh_state.get("reserve") if fh_state else None
    r = foster_hart(outcomes, reserve_hint=hint)
    if fh_state is not None:
        fh_state["reserve"] = r
    return r


def evaluate_objective(problem: OptimizationProblem, w, _fh_state: dict | None = None) -> float:
    """Exact objective value at w; +inf encodes infeasibility for the solver."""
    w = _clip_to_box(problem, np.asarray(w, dtype=float))
    expected = float(w @ problem.mu)
    if expected < problem.eps_mu:
        return math.inf
    risk = _portfolio_risk(problem, portfolio_outcomes(problem.scenarios, w), _fh_state)
    if not np.isfinite(risk):
        return math.inf
    value = risk / expected
    if problem.cost_aversion > 0.0 and problem.lambda_ > 0.0:
        turnover = float(np.sum(np.abs(w - problem.w_prev)))
        value += problem.cost_aversion * (problem.lambda_ * turnover / expected) ** 2
    return float(value)


def _starting_points(problem: OptimizationProblem, n_starts: int) -> list:
    """Deterministic multi-start set: previous weights, equal weights, signed
    per-asset corners, and the expected-return direction, all projected into
    the feasible box."""
    n = problem.n_assets
    mu = problem.mu
    sign = np.where(mu >= 0, 1.0, -1.0)
    if problem.long_only:
        sign = np.ones(n)
    starts = [problem.w_prev.copy(), sign / n]
    for i in np.argsort(-np.abs(mu)):
        e = np.zeros(n)
        e[i] = sign[i] * problem.box
        starts.append(e)
    denom = float(np.sum(np.abs(mu)))
    if denom > 0:
        starts.append(np.clip(mu / denom, *((0.0, problem.box) if problem.long_only else (-problem.box, problem.box))))
    starts.append(np.ones(n) / n)
    out, seen = [], set()
    for s in starts:
        s = _clip_to_box(problem, s)
        key = tuple(np.round(s, 12))
        if key not in seen:
            seen.add(key)
            out.append(s)
        if len(out) == n_starts:
            break
    return out


def optimize(problem: OptimizationProblem, settings: SolverSettings | None = None) -> OptimizationResult:
    """Minimize the mean-risk objective by multi-start adaptive simplex search.

    Derivative-free search covers the nonsmooth AVaR and Foster-Hart
    objectives uniformly. Returns box-feasible weights normalized to unit
    gross exposure; the pre-normalization solution and per-start values are
    kept in the diagnostics. Raises :class:`InfeasibleProblemError` when no
    weight vector in the box can reach the expected-return floor.
    """
    settings = settings or SolverSettings()
    mu = problem.mu
    reach = float(np.sum(np.abs(mu))) if not problem.long_only else float(np.sum(np.clip(mu, 0, None)))
    reach *= problem.box
    if reach < problem.eps_mu:
        raise InfeasibleProblemError(
            f"max attainable expected return {reach:.3g} below the floor {problem.eps_mu:.3g}"
        )

    fh_state: dict = {}

    def objective(w):
        return evaluate_objective(problem, w, _fh_state=fh_state)

    starts = _starting_points(problem, settings.multistarts)
    start_vals = [objective(s) for s in starts]
    best_w, best_val = None, math.inf
    per_start = []
    total_nfev = 0
    for x0, v0 in zip(starts, start_vals):
        with np.errstate(invalid="ignore", over="ignore"):  # inf sentinels inside the simplex
            res = minimize(
                objective, x0, method="Nelder-Mead", bounds=problem.bounds,
                options=dict(maxfev=settings.maxfev, xatol=settings.xatol,
                             fatol=settings.fatol, adaptive=True),
            )
        total_nfev += res.nfev
        # Never accept a point worse than where the search started.
        val, w = (float(res.fun), res.x) if res.fun <= v0 else (float(v0), x0)
        per_start.append(val)
        if val < best_val:
            best_val, best_w = val, _clip_to_box(problem, w)

    if best_w is None or not np.isfinite(best_val):
        raise InfeasibleProblemError("no feasible portfolio found from any starting point")

    best_start = float(np.min([v for v in start_vals if np.isfinite(v)], initial=math.inf))
    stagnated = bool(np.isfinite(best_start) and best_val >= best_start - 1e-14 * max(abs(best_start), 1.0))
    return _finalize(problem, best_w, best_val, {
        "per_start_objectives": per_start,
        "start_objectives": [float(v) for v in start_vals],
        "nfev": total_nfev,
        "stagnated": stagnated,
    })


def _finalize(problem: OptimizationProblem, best_w: np.ndarray, best_val: float, diag: dict) -> OptimizationResult:
    gross = float(np.sum(np.abs(best_w)))
    w_norm = best_w / gross
    expected = float(w_norm @ problem.mu)
    risk = _portfolio_risk(problem, portfolio_outcomes(problem.scenarios, w_norm), None)
    obj_norm = evaluate_objective(problem, w_norm)
    diag = dict(diag)
    diag.update({
        "raw_weights": best_w,
        "raw_objective": float(best_val),
        "gross_before_normalization": gross,
    })
    return OptimizationResult(
        weights=w_norm,
        objective=float(obj_norm),
        risk=float(risk),
        expected_return=expected,
        feasible=bool(np.isfinite(obj_norm) and expected > 0.0),
        diagnostics=diag,
    )


def frontier_sweep(
    problem: OptimizationProblem,
    cost_aversions,
    settings: SolverSettings | None = None,
) -> list:
    """Solve the problem for each cost-aversion level, warm-starting each
    solve from the previous solution. Levels whose effective cost coefficient
    C * lambda^2 coincides (e.g. every C when lambda = 0) share one solve:
    the objective is bit-identical, so rerunning could only add noise."""
    results = []
    warm = None
    seen: dict = {}
    for c in cost_aversions:
        effective = float(c) * problem.lambda_**2
        if effective in seen:
            results.append(seen[effective])
            continue
        p = OptimizationProblem(
            scenarios=problem.scenarios, mu=problem.mu, w_prev=problem.w_prev,
            rho=problem.rho, lambda_=problem.lambda_, cost_aversion=float(c),
            long_only=problem.long_only, box=problem.box,
            epsilon=problem.epsilon, eps_mu=problem.eps_mu,
        )
        s = settings or SolverSettings()
        res = _optimize_with_extra_start(p, s, warm) if warm is not None else optimize(p, s)
        warm = res.diagnostics["raw_weights"]
        seen[effective] = res
        results.append(res)
    return results


def _optimize_with_extra_start(problem: OptimizationProblem, settings: SolverSettings, extra: np.ndarray) -> OptimizationResult:
    base = optimize(problem, settings)
    fh_state: dict = {}
    with np.errstate(invalid="ignore", over="ignore"):
        res = minimize(
            lambda w: evaluate_objective(problem, w, _fh_state=fh_state),
            _clip_to_box(problem, extra), method="Nelder-Mead", bounds=problem.bounds,
            options=dict(maxfev=settings.maxfev, xatol=settings.xatol, fatol=settings.fatol, adaptive=True),
        )
    if float(res.fun) < base.diagnostics["raw_objective"]:
        diag = dict(base.diagnostics)
        diag["warm_start"] = True
        return _finalize(problem, _clip_to_box(problem, res.x), float(res.fun), diag)
    return base
