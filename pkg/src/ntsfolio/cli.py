"""Command-line interface.

Subcommands: describe, fit, gof, backtest, optimize, run, report. Every
command reads a price CSV (``date,asset,close`` long form or wide form),
writes delimited output into ``--out``, and prints the file paths it wrote.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .config import RunConfig, load_config
from .data import WindowSpec, describe_table, load_returns, windows
from .errors import EngineError
from .harness import (
    MODEL_FAMILY,
    estimate_windows,
    run_experiment,
    scenario_matrix,
    statistical_suite,
    strategy_grid,
)
from .optimizer import OptimizationProblem, SolverSettings, optimize
from .reporting import (
    write_backtest_report,
    write_descriptive_table,
    write_rejection_tables,
    write_run_outputs,
)


def _add_common(p: argparse.ArgumentParser, window: bool = True):
    p.add_argument("--data", required=True, help="price CSV (long 'date,asset,close' or wide form)")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--config", default=None, help="key=value config file")
    if window:
        p.add_argument("--window-length", type=int, default=None, help="rolling window length in days")
    p.add_argument("--seed", type=int, default=None, help="run seed override")


def _config_from(args, **extra) -> RunConfig:
    overrides = {k: v for k, v in extra.items() if v is not None}
    if getattr(args, "window_length", None) is not None:
        overrides["window_length"] = args.window_length
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if args.config:
        return load_config(args.config, overrides=overrides)
    return RunConfig(**overrides)


def _cmd_describe(args) -> int:
    config = _config_from(args)
    returns = load_returns(args.data)
    table = describe_table(returns, kurtosis_convention=config.kurtosis_convention)
    paths = write_descriptive_table(table, args.out, kurtosis_convention=config.kurtosis_convention)
    print(table.to_string(float_format=lambda v: f"{v:.4f}"))
    for p in paths:
        print(f"wrote {p}")
    return 0


def _cmd_fit(args) -> int:
    config = _config_from(args)
    returns = load_returns(args.data)
    spec = WindowSpec(length=min(config.window_length, len(returns)))
    wins = list(windows(returns, spec))
    index = args.window_index if args.window_index >= 0 else len(wins) + args.window_index
    if not 0 <= index < len(wins):
        print(f"error: window index {args.window_index} outside 0..{len(wins) - 1}", file=sys.stderr)
        return 2
    models = tuple(args.models.split(",")) if args.models else config.models
    sub = wins[index]
    sliced = type(returns)(dates=sub.dates, asset_ids=returns.asset_ids, values=sub.values)
    bundles = estimate_windows(sliced, WindowSpec(length=len(sliced)), config, models=models)
    bundle = bundles[0]
    payload = {
        "window_index": index,
        "window_end": str(bundle.end_date),
        "families": {
            fam: {asset: fit.to_dict() for asset, fit in zip(returns.asset_ids, fam_fits)}
            for fam, fam_fits in bundle.fits.items()
        },
        "mnts": bundle.mnts.to_dict() if bundle.mnts is not None else None,
    }
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"fit_window{index}.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {path}")
    return 0


def _suite(args, config):
    returns = load_returns(args.data)
    spec = WindowSpec(length=config.window_length, step=config.window_step)
    return statistical_suite(returns, spec, config)


def _cmd_gof(args) -> int:
    config = _config_from(args)
    suite = _suite(args, config)
    for p in write_rejection_tables(suite, args.out):
        print(f"wrote {p}")
    return 0


def _cmd_backtest(args) -> int:
    config = _config_from(args)
    suite = _suite(args, config)
    for p in write_backtest_report(suite, args.out):
        print(f"wrote {p}")
    return 0


def _cmd_optimize(args) -> int:
    config = _config_from(args)
    returns = load_returns(args.data)
    spec = WindowSpec(length=config.window_length)
    models = (args.model,)
    bundles = estimate_windows(returns, spec, config, models=models,
                               need_mnts=(args.model == "agnts"))
    bundle = bundles[-1]
    fam = "nts" if (args.model == "agnts" and args.rho != "sd") else MODEL_FAMILY[args.model]
    scen = scenario_matrix(fam, bundle, config.n_scenarios, config.seed, config, returns.asset_ids)
    problem = OptimizationProblem(scenarios=scen, rho=args.rho, lambda_=0.0,
                                  cost_aversion=0.0, long_only=config.long_only,
                                  epsilon=config.epsilon, eps_mu=config.eps_mu)
    res = optimize(problem, SolverSettings(multistarts=config.solver_multistarts))
    payload = {
        "window_end": str(bundle.end_date),
        "model": args.model,
        "rho": args.rho,
        "weights": {a: float(w) for a, w in zip(returns.asset_ids, res.weights)},
        "objective": res.objective,
        "risk": res.risk,
        "expected_return": res.expected_return,
    }
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"optimize_{args.model}_{args.rho}.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(payload["weights"], indent=2, sort_keys=True))
    print(f"wrote {path}")
    return 0


def _cmd_run(args) -> int:
    config = _config_from(args)
    returns = load_returns(args.data)
    spec = WindowSpec(length=config.window_length, step=config.window_step)
    strategies = strategy_grid(config)
    models = tuple(config.models)
    bundles = estimate_windows(returns, spec, config, models=models,
                               need_mnts="agnts" in models)
    result = run_experiment(returns, strategies, spec, config, bundles=bundles)
    suite = None
    if not args.skip_tests:
        suite = statistical_suite(returns, spec, config, bundles=bundles)
    table = describe_table(returns, kurtosis_convention=config.kurtosis_convention)
    paths = write_descriptive_table(table, args.out, kurtosis_convention=config.kurtosis_convention)
    paths += write_run_outputs(result, suite, args.out)
    for p in paths:
        print(f"wrote {p}")
    return 0


def _cmd_report(args) -> int:
    # Re-render figures and the performance table from saved ledgers.
    import pandas as pd

    from .harness import RunLedger, StrategySpec
    from .reporting import write_cumulative_curves, write_performance_table

    led_dir = os.path.join(args.run_dir, "ledgers")
    if not os.path.isdir(led_dir):
        print(f"error: {led_dir} not found", file=sys.stderr)
        return 2
    manifest_path = os.path.join(args.run_dir, "run_manifest.json")
    accounting, epsilon = "sum", 0.01
    if os.path.exists(manifest_path):
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        accounting = manifest.get("accounting", accounting)
        epsilon = manifest.get("epsilon", epsilon)
    ledgers = {}
    for name in sorted(os.listdir(led_dir)):
        if not name.endswith(".csv"):
            continue
        label = name[:-4]
        frame = pd.read_csv(os.path.join(led_dir, name))
        parts = label.split("_")
        spec = StrategySpec(model=parts[0], rho=parts[1],
                            lambda_=float(parts[2][3:]), cost_aversion=float(parts[3][1:]),
                            long_only=label.endswith("_long"))
        assets = tuple(c[2:] for c in frame.columns if c.startswith("w_"))
        ledger = RunLedger(strategy=spec, asset_ids=assets)
        for _, row in frame.iterrows():
            ledger.append(
                date=row["date"], weights=[row[f"w_{a}"] for a in assets], cost=row["cost"],
                gross=row["gross_return"], net=row["net_return"],
                var_a=[row[f"var_{a}"] for a in assets], avar_a=[row[f"avar_{a}"] for a in assets],
                var_p=row["var_portfolio"], avar_p=row["avar_portfolio"],
                defect=row["defect"] if isinstance(row["defect"], str) else "",
            )
        ledgers[label] = ledger
    paths = write_performance_table(ledgers, args.run_dir, epsilon=epsilon, accounting=accounting)
    paths += write_cumulative_curves(ledgers, args.run_dir, accounting=accounting)
    for p in paths:
        print(f"wrote {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ntsfolio",
                                     description="GARCH/NTS portfolio risk engine")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("describe", help="descriptive statistics of the return series")
    _add_common(p, window=False)
    p.set_defaults(func=_cmd_describe)

    p = sub.add_parser("fit", help="fit models on one rolling window")
    _add_common(p)
    p.add_argument("--window-index", type=int, default=-1, help="window to fit (default: last)")
    p.add_argument("--models", default=None, help="comma-separated model subset")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("gof", help="in-sample KS/AD rejection tables")
    _add_common(p)
    p.set_defaults(func=_cmd_gof)

    p = sub.add_parser("backtest", help="out-of-sample CLR/BLR/AS backtest report")
    _add_common(p)
    p.set_defaults(func=_cmd_backtest)

    p = sub.add_parser("optimize", help="optimize a single portfolio on the last window")
    _add_common(p)
    p.add_argument("--model", default="agnts", choices=list(MODEL_FAMILY))
    p.add_argument("--rho", default="fh", choices=["sd", "avar", "fh"])
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("run", help="full pipeline: estimate, test, optimize, report")
    _add_common(p)
    p.add_argument("--skip-tests", action="store_true", help="skip the statistical suite")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("report", help="re-render reports from saved ledgers")
    p.add_argument("--run-dir", required=True, help="directory holding ledgers/ and run_manifest.json")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EngineError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
