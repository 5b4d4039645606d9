"""Global run configuration: a flat key=value text file with typed defaults."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields

from .errors import ParseError, ValidationError

MODELS = ("agnormal", "agt", "agnts")
RISK_MEASURES = ("sd", "avar", "fh")


@dataclass
class RunConfig:
    """Everything a full experiment run depends on, in one place.

    Any field can be set from a config file line ``name = value``. Lists are
    comma separated, booleans are ``true``/``false``.
    """

    # window / cadence
    window_length: int = 500
    window_step: int = 1
    refit_every: int = 1

    # strategy grid
    models: tuple = MODELS
    risk_measures: tuple = RISK_MEASURES
    lambdas: tuple = (0.0, 1e-7)
    cost_aversions: tuple = (0.01, 0.1, 1.0)
    long_only: bool = False
    epsilon: float = 0.01
    n_scenarios: int = 10_000
    scenario_floor: int = 1000

    # reproducibility
    seed: int = 20200331

    # estimation
    min_obs: int = 100
    garch_multistarts: int = 5
    mnts_max_iter: int = 500

    # portfolio solver
    solver_multistarts: int = 8
    solver_warm_multistarts: int = 3
    solver_maxfev: int = 400
    solver_warm_maxfev: int = 150
    solver_xatol: float = 1e-5
    solver_fatol: float = 1e-9
    fh_tol: float = 1e-10
    eps_mu: float = 1e-8

    # FFT inversion
    fft_m: int = 2**16
    fft_m_max: int = 2**20
    fft_cf_tol: float = 1e-10
    fft_m_fit: int = 2**13

    # accounting / reporting
    accounting: str = "sum"  # "sum" or "compound"
    kurtosis_convention: str = "raw"  # "raw" or "excess"
    period_breaks: tuple = ("2018-04-01", "2019-04-01")
    backtest_n_sim: int = 10_000

    # execution
    workers: int = 1
    checkpoint_dir: str = ""
    output_dir: str = "out"

    def __post_init__(self):
        if self.accounting not in ("sum", "compound"):
            raise ValidationError(f"accounting must be 'sum' or 'compound', got {self.accounting!r}")
        if self.kurtosis_convention not in ("raw", "excess"):
            raise ValidationError(f"kurtosis_convention must be 'raw' or 'excess', got {self.kurtosis_convention!r}")
        for m in self.models:
            if m not in MODELS:
                raise ValidationError(f"unknown model {m!r}; valid: {MODELS}")
        for r in self.risk_measures:
            if r not in RISK_MEASURES:
                raise ValidationError(f"unknown risk measure {r!r}; valid: {RISK_MEASURES}")
        if not 0 < self.epsilon < 1:
            raise ValidationError("epsilon must lie in (0, 1)")

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def to_manifest(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d = {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}
        d["config_hash"] = self.config_hash()
        return d


_FIELD_TYPES = {f.name: f for f in fields(RunConfig)}


def _parse_value(name: str, raw: str):
    f = _FIELD_TYPES[name]
    default = f.default
    raw = raw.strip()
    if isinstance(default, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ParseError(f"config key {name!r}: expected boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        items = [s.strip() for s in raw.split(",") if s.strip()]
        elem = default[0] if default else ""
        if isinstance(elem, float):
            return tuple(float(s) for s in items)
        if isinstance(elem, int):
            return tuple(int(s) for s in items)
        return tuple(items)
    return raw


def load_config(path: str, overrides: dict | None = None) -> RunConfig:
    """Read ``key = value`` lines; ``#`` starts a comment; unknown keys fail."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, raw = line.split("=", 1)
            key = key.strip()
            if key not in _FIELD_TYPES:
                raise ParseError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _parse_value(key, raw)
    values.update(overrides or {})
    return RunConfig(**values)


def dump_manifest(config: RunConfig, path: str, extra: dict | None = None) -> None:
    manifest = config.to_manifest()
    manifest.update(extra or {})
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
