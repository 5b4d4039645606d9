"""Report rendering: delimited tables plus matplotlib figures on disk.

Every writer returns the paths it produced. Figures accompany the CSV output
(\"Agg\" backend, no display); the CSV stays the canonical, diff-able record.
"""

from __future__ import annotations

import json
import os

import matplotlib
import numpy as np
import pandas as pd

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .config import dump_manifest  # noqa: E402
from .harness import ExperimentResult, SuiteResult, cumulative_curve, performance_table  # noqa: E402


def _ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def write_descriptive_table(stats: pd.DataFrame, out_dir: str, kurtosis_convention: str = "raw") -> list:
    out_dir = _ensure_dir(out_dir)
    csv_path = os.path.join(out_dir, "descriptive_stats.csv")
    json_path = os.path.join(out_dir, "descriptive_stats.json")
    stats.to_csv(csv_path, float_format="%.6f")
    payload = {"kurtosis_convention": kurtosis_convention, "assets": stats.to_dict(orient="index")}
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return [csv_path, json_path]


def write_rejection_tables(suite: SuiteResult, out_dir: str) -> list:
    out_dir = _ensure_dir(out_dir)
    paths = []
    for name, table in (("ks_rejections.csv", suite.ks_table), ("ad_rejections.csv", suite.ad_table)):
        path = os.path.join(out_dir, name)
        flat = table.copy()
        flat.columns = [f"{lvl}|{model}" for lvl, model in table.columns]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# rejection counts out of {suite.n_windows} windows; "
                     "fully specified nulls (fitted parameters treated as known)\n")
            flat.to_csv(fh)
        paths.append(path)
    return paths


def write_backtest_report(suite: SuiteResult, out_dir: str, levels=(0.05, 0.10)) -> list:
    """Per-period p-values of the CLR/BLR/AS tests plus threshold-count rows."""
    out_dir = _ensure_dir(out_dir)
    path = os.path.join(out_dir, "backtest_pvalues.csv")
    report = suite.backtest_report
    blocks = []
    for period in report["period"].unique():
        sub = report[report["period"] == period]
        pivot = sub.pivot_table(index="asset", columns="model", values=["clr", "blr", "as"], sort=False)
        pivot = pivot.reindex(columns=["clr", "blr", "as"], level=0)
        block = pivot.copy()
        block.insert(0, ("period", ""), period)
        for level in levels:
            counts = (pivot < level).sum(axis=0)
            row = pd.DataFrame([counts], index=[f"n_p_below_{level:g}"])
            row.insert(0, ("period", ""), period)
            block = pd.concat([block, row])
        blocks.append(block)
    full = pd.concat(blocks)
    full.columns = [f"{a}|{b}" if b else a for a, b in full.columns]
    full.to_csv(path, float_format="%.4f")
    return [path]


def write_performance_table(ledgers: dict, out_dir: str, epsilon: float = 0.01, accounting: str = "sum") -> list:
    out_dir = _ensure_dir(out_dir)
    path = os.path.join(out_dir, "performance.csv")
    table = performance_table(ledgers, epsilon=epsilon, accounting=accounting)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# accounting={accounting}; weights normalized to unit gross exposure; "
                 "ret_over_sd is the Sharpe ratio\n")
        table.to_csv(fh, float_format="%.10g")
    return [path]


def write_ledgers(ledgers: dict, out_dir: str) -> list:
    led_dir = _ensure_dir(os.path.join(out_dir, "ledgers"))
    paths = []
    for label, ledger in ledgers.items():
        path = os.path.join(led_dir, f"{label}.csv")
        ledger.to_frame().to_csv(path, index=False)
        paths.append(path)
    return paths


def write_cumulative_curves(ledgers: dict, out_dir: str, accounting: str = "sum") -> list:
    """Plot-ready CSV of every strategy's cumulative net return plus figures.

    One figure per (lambda, C) cell with a line per (model, risk measure),
    mirroring the time-evolution panels of the headline experiment.
    """
    out_dir = _ensure_dir(out_dir)
    curves = {label: cumulative_curve(ledger, accounting=accounting) for label, ledger in ledgers.items()}
    frame = pd.DataFrame(curves)
    frame.index.name = "date"
    csv_path = os.path.join(out_dir, "cumulative_returns.csv")
    frame.to_csv(csv_path, float_format="%.10g")
    paths = [csv_path]

    cells: dict = {}
    for label, ledger in ledgers.items():
        s = ledger.strategy
        cells.setdefault((s.lambda_, s.cost_aversion), []).append(label)
    fig_dir = _ensure_dir(os.path.join(out_dir, "figures"))
    for (lam, c), labels in sorted(cells.items()):
        fig, ax = plt.subplots(figsize=(8, 5))
        for label in sorted(labels):
            curve = curves[label]
            s = ledgers[label].strategy
            ax.plot(np.arange(len(curve)), curve.values, label=f"{s.model}-{s.rho}", lw=1.2)
        n_ticks = min(6, len(frame))
        ticks = np.linspace(0, len(frame) - 1, n_ticks).astype(int)
        ax.set_xticks(ticks)
        ax.set_xticklabels([frame.index[t] for t in ticks], rotation=30, ha="right", fontsize=8)
        ax.set_ylabel("cumulative net return")
        title = "no transaction costs" if lam == 0 else f"lambda={lam:g}, C={c:g}"
        ax.set_title(f"Cumulative returns ({title})")
        ax.legend(fontsize=8)
        ax.grid(alpha=0.3)
        fig.tight_layout()
        fig_path = os.path.join(fig_dir, f"cumulative_lam{lam:g}_C{c:g}.png")
        fig.savefig(fig_path, dpi=150)
        plt.close(fig)
        paths.append(fig_path)
    return paths


def write_run_outputs(result: ExperimentResult, suite: SuiteResult | None, out_dir: str) -> list:
    """Everything a full run produces: ledgers, tables, curves, manifest."""
    out_dir = _ensure_dir(out_dir)
    cfg = result.config
    paths = []
    paths += write_ledgers(result.ledgers, out_dir)
    paths += write_performance_table(result.ledgers, out_dir, epsilon=cfg.epsilon, accounting=cfg.accounting)
    paths += write_cumulative_curves(result.ledgers, out_dir, accounting=cfg.accounting)
    if suite is not None:
        paths += write_rejection_tables(suite, out_dir)
        paths += write_backtest_report(suite, out_dir)
    manifest_path = os.path.join(out_dir, "run_manifest.json")
    dump_manifest(cfg, manifest_path, extra={
        "asset_ids": list(result.asset_ids),
        "n_ledger_days": {k: len(v) for k, v in result.ledgers.items()},
        "defect_windows": [[int(i), msg] for i, msg in result.defects],
        "conventions": result.conventions(),
    })
    paths.append(manifest_path)
    return paths
