"""Sweep experiments, welfare-loss tabulation and file I/O.

The two case-study experiment families vary one market parameter while
fixing the rest: the per-prosumer supply capacity s_max, or the
per-prosumer inelastic demand d_min. Each sweep point solves both welfare
programs, evaluates the true welfare of both allocations, counts eq21
violations at the strategic allocation and emits one CSV row.

Four canonical 11-prosumer panels ship with the package:

  capacity_bounded    d_min=4, beta_i = 2.0..3.0, s_max from 0.1 to 3;
                      conditions hold everywhere, loss stays bounded.
  capacity_unbounded  d_min=1, beta_i = 0.6..1.6, s_max from 0.1 to 4.5;
                      eq21 eventually fails and the loss keeps growing.
  demand_bounded      s_max=0.7, beta_i = 2.0..3.0, d_min from 5 down to
                      0.7; conditions hold everywhere.
  demand_unbounded    s_max=3, beta_i = 0.6..1.6, d_min from 5 down to
                      0.7; eq21 eventually fails as demand shrinks.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .conditions import ConditionReport, check_eq21, evaluate_conditions
from .errors import BracketFailure, ConfigError, DomainError
from .market import MarketConfig
from .solver import MODE_MODIFIED, MODE_TRUE, SolveResult, solve_dual

VARIABLE_CAPACITY = "s_max"
VARIABLE_DEMAND = "d_min"
SWEEP_VARIABLES = (VARIABLE_CAPACITY, VARIABLE_DEMAND)

#: environment variable capping sweep concurrency (default: machine parallelism)
THREADS_ENV_VAR = "PROSUMER_MARKET_THREADS"

CSV_HEADER = ("param_value,total_param,welfare_competitive,welfare_nash,"
              "welfare_loss,eq21_violations,non_concave_flag,"
              "price_competitive,price_nash")

PANELS = ("capacity_bounded", "capacity_unbounded",
          "demand_bounded", "demand_unbounded")


@dataclass(frozen=True)
class SweepSpec:
    """One parameter sweep: which variable, its range, and the base market.

    Swept configs inherit n_prosumers, betas and the root/stationarity
    tolerances from base_config; eps_price is re-derived per point so it
    tracks the market scale across d_min sweeps.
    """

    variable: str
    start: float
    stop: float
    steps: int
    base_config: MarketConfig

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise DomainError(
                f"variable must be one of {SWEEP_VARIABLES}, got {self.variable!r}")
        if self.steps < 2:
            raise DomainError(f"steps must be at least 2, got {self.steps}")
        if self.start == self.stop:
            raise DomainError("start and stop must differ")
        if min(self.start, self.stop) <= 0:
            raise DomainError("swept values must stay positive")

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.steps)

    def config_at(self, value: float) -> MarketConfig:
        base = self.base_config
        d_min = value if self.variable == VARIABLE_DEMAND else base.d_min
        s_max = value if self.variable == VARIABLE_CAPACITY else base.s_max
        return MarketConfig(
            n_prosumers=base.n_prosumers,
            d_min=d_min,
            s_max=s_max,
            betas=base.betas,
            tol_root=base.tol_root,
            tol_kkt=base.tol_kkt,
        )


@dataclass(frozen=True)
class SweepRow:
    """One sweep point: welfares, loss, condition flags and prices."""

    param_value: float
    total_param: float
    welfare_competitive: float
    welfare_nash: float
    welfare_loss: float
    eq21_violations: int
    non_concave_flag: bool
    price_competitive: float
    price_nash: float
    error: str | None = None


@dataclass(frozen=True)
class EquilibriumReport:
    """Paired competitive/strategic solutions for one market instance."""

    config: MarketConfig
    competitive: SolveResult
    nash: SolveResult
    conditions: ConditionReport
    welfare_loss: float


def equilibrium_report(config: MarketConfig) -> EquilibriumReport:
    """Solve both programs and check every condition at the strategic point."""
    competitive = solve_dual(config, MODE_TRUE)
    nash = solve_dual(config, MODE_MODIFIED)
    conditions = evaluate_conditions(
        config, nash.thetas, nash.allocation.quantities)
    return EquilibriumReport(
        config=config,
        competitive=competitive,
        nash=nash,
        conditions=conditions,
        welfare_loss=competitive.welfare_true - nash.welfare_true,
    )


def _sweep_point(spec: SweepSpec, value: float) -> SweepRow:
    config = spec.config_at(value)
    total = config.n_prosumers * value
    try:
        competitive = solve_dual(config, MODE_TRUE)
        nash = solve_dual(config, MODE_MODIFIED)
    except BracketFailure as exc:
        nan = float("nan")
        return SweepRow(value, total, nan, nan, nan, 0, False, nan, nan,
                        error=str(exc))
    eq21 = check_eq21(nash.allocation.quantities, config)
    return SweepRow(
        param_value=value,
        total_param=total,
        welfare_competitive=competitive.welfare_true,
        welfare_nash=nash.welfare_true,
        welfare_loss=competitive.welfare_true - nash.welfare_true,
        eq21_violations=int(np.size(eq21) - np.count_nonzero(eq21)),
        non_concave_flag=nash.non_concave,
        price_competitive=competitive.price,
        price_nash=nash.price,
    )


def _max_workers() -> int:
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        try:
            workers = int(env)
        except ValueError as exc:
            raise ConfigError(
                f"{THREADS_ENV_VAR} must be an integer, got {env!r}") from exc
        if workers < 1:
            raise ConfigError(f"{THREADS_ENV_VAR} must be >= 1, got {workers}")
        return workers
    return os.cpu_count() or 1


def run_sweep(spec: SweepSpec, max_workers: int | None = None) -> list[SweepRow]:
    """Evaluate every sweep point; rows follow the parameter order start->stop.

    Points run concurrently (capped by max_workers or the THREADS_ENV_VAR
    environment variable); the solver is pure, so results and row order are
    deterministic regardless of scheduling. A BracketFailure marks its row
    with an error message instead of aborting the sweep.
    """
    workers = max_workers if max_workers is not None else _max_workers()
    values = spec.values()
    if workers == 1:
        return [_sweep_point(spec, float(v)) for v in values]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda v: _sweep_point(spec, float(v)), values))


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def emit_csv(rows: list[SweepRow], path) -> None:
    """Write sweep rows as UTF-8 CSV: fixed header, 12-digit reals, 0/1 bools."""
    if not rows:
        raise DomainError("refusing to write an empty sweep CSV")
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(",".join([
            _fmt(r.param_value),
            _fmt(r.total_param),
            _fmt(r.welfare_competitive),
            _fmt(r.welfare_nash),
            _fmt(r.welfare_loss),
            str(int(r.eq21_violations)),
            str(int(r.non_concave_flag)),
            _fmt(r.price_competitive),
            _fmt(r.price_nash),
        ]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_gnuplot(rows: list[SweepRow], path) -> None:
    """Two-column (total parameter, welfare loss) export for gnuplot."""
    if not rows:
        raise DomainError("refusing to write an empty export")
    lines = ["# total_param welfare_loss"]
    lines += [f"{_fmt(r.total_param)} {_fmt(r.welfare_loss)}" for r in rows]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _case_study_betas(kind: str) -> tuple[float, ...]:
    if kind == "high":
        return tuple((19 + i) / 10 for i in range(1, 12))  # 2.0 .. 3.0
    return tuple((5 + i) / 10 for i in range(1, 12))       # 0.6 .. 1.6


def case_study_spec(panel: str, steps: int = 30) -> SweepSpec:
    """Canonical sweep definition for one of the four shipped panels."""
    if panel == "capacity_bounded":
        base = MarketConfig(11, d_min=4.0, s_max=3.0,
                            betas=_case_study_betas("high"))
        return SweepSpec(VARIABLE_CAPACITY, 0.1, 3.0, steps, base)
    if panel == "capacity_unbounded":
        base = MarketConfig(11, d_min=1.0, s_max=4.5,
                            betas=_case_study_betas("low"))
        return SweepSpec(VARIABLE_CAPACITY, 0.1, 4.5, steps, base)
    if panel == "demand_bounded":
        base = MarketConfig(11, d_min=5.0, s_max=0.7,
                            betas=_case_study_betas("high"))
        return SweepSpec(VARIABLE_DEMAND, 5.0, 0.7, steps, base)
    if panel == "demand_unbounded":
        base = MarketConfig(11, d_min=5.0, s_max=3.0,
                            betas=_case_study_betas("low"))
        return SweepSpec(VARIABLE_DEMAND, 5.0, 0.7, steps, base)
    raise DomainError(f"unknown panel {panel!r}; choose from {PANELS}")


_TOP_LEVEL_KEYS = {"n_prosumers", "d_min", "s_max", "betas",
                   "tolerances", "sweep"}
_TOLERANCE_KEYS = {"eps_price", "tol_root", "tol_kkt"}
_SWEEP_KEYS = {"variable", "start", "stop", "steps"}


def _reject_unknown(obj: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def load_config_file(path) -> tuple[MarketConfig, SweepSpec | None]:
    """Read a market (and optional sweep) from a JSON config file.

    Schema: {"n_prosumers": int, "d_min": num, "s_max": num,
             "betas": [num, ...],
             "tolerances": {"eps_price"?, "tol_root"?, "tol_kkt"?},
             "sweep": {"variable": "s_max"|"d_min", "start", "stop",
                       "steps"}}
    tolerances and sweep are optional; unknown keys are rejected.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    _reject_unknown(raw, _TOP_LEVEL_KEYS, str(path))
    for key in ("n_prosumers", "d_min", "s_max", "betas"):
        if key not in raw:
            raise ConfigError(f"{path}: missing required key {key!r}")
    tolerances = raw.get("tolerances", {})
    if not isinstance(tolerances, dict):
        raise ConfigError(f"{path}: tolerances must be an object")
    _reject_unknown(tolerances, _TOLERANCE_KEYS, f"{path} tolerances")
    if not isinstance(raw["betas"], list):
        raise ConfigError(f"{path}: betas must be an array")
    try:
        config = MarketConfig(
            n_prosumers=int(raw["n_prosumers"]),
            d_min=float(raw["d_min"]),
            s_max=float(raw["s_max"]),
            betas=tuple(float(b) for b in raw["betas"]),
            eps_price=(float(tolerances["eps_price"])
                       if "eps_price" in tolerances else None),
            tol_root=float(tolerances.get("tol_root", 1e-9)),
            tol_kkt=float(tolerances.get("tol_kkt", 1e-8)),
        )
    except (TypeError, ValueError, DomainError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    sweep = None
    if "sweep" in raw:
        block = raw["sweep"]
        if not isinstance(block, dict):
            raise ConfigError(f"{path}: sweep must be an object")
        _reject_unknown(block, _SWEEP_KEYS, f"{path} sweep")
        missing = sorted(_SWEEP_KEYS - set(block))
        if missing:
            raise ConfigError(
                f"{path}: sweep is missing key(s): {', '.join(missing)}")
        try:
            sweep = SweepSpec(
                variable=str(block["variable"]),
                start=float(block["start"]),
                stop=float(block["stop"]),
                steps=int(block["steps"]),
                base_config=config,
            )
        except (TypeError, ValueError, DomainError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return config, sweep
