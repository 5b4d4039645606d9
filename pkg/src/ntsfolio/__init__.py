"""Portfolio risk and optimization engine.

Fits ARMA(1,1)-GARCH(1,1) models with normal, Student-t, or multivariate
normal tempered stable residuals to multi-asset return series, forecasts
risk (SD, VaR, AVaR, Foster-Hart), validates the forecasts statistically,
and runs rolling-window mean-risk portfolio optimization with transaction
costs.
"""

__version__ = "0.1.0"

from .config import RunConfig, load_config
from .data import (
    AlignedReturns,
    DescriptiveStats,
    PriceSeries,
    ReturnSeries,
    WindowSpec,
    describe,
    describe_table,
    load_prices,
    load_returns,
    to_returns,
    windows,
)
from .errors import (
    AccuracyError,
    AlignmentError,
    CompletenessError,
    ContractError,
    DegenerateSeriesError,
    EngineError,
    EstimationError,
    InfeasibleProblemError,
    InsufficientDataError,
    NotAGambleError,
    ParseError,
    ValidationError,
)
from .gof import GofResult, ad_test, ks_test, rejection_table
from .backtests import BreachSeries, ForecastStream, as_test, blr_tail_test, clr_test
from .harness import (
    RunLedger,
    StrategySpec,
    cumulative_curve,
    performance_table,
    run_experiment,
    statistical_suite,
    strategy_grid,
)
from .nts import (
    FftConfig,
    MntsParams,
    StdNtsParams,
    SubordinatorParams,
    cdf,
    char_fn,
    fit_std_mnts,
    quantile,
    sample_mnts,
)
from .optimizer import (
    OptimizationProblem,
    OptimizationResult,
    SolverSettings,
    evaluate_objective,
    frontier_sweep,
    optimize,
)
from .risk import (
    GambleSample,
    ScenarioMatrix,
    as_gamble,
    avar,
    foster_hart,
    portfolio_outcomes,
    sd,
    var,
)
from .timeseries import (
    ArmaGarchParams,
    FitOptions,
    Forecast,
    GarchFit,
    filter_residuals,
    fit_arma_garch,
    forecast_one_step,
    simulate_arma_garch,
)
