"""JSON run configuration.

Every physical quantity carries its unit in the key: ``_m3s`` for discharges,
``_m3`` for volumes, ``_per_day`` for rates in days, ``_hours`` for the
sampling lag. With ``"time_unit": "nondimensional"`` the ``_days`` and
``_per_day`` keys are read as plain solver time units and discharges move
one volume unit per time unit. Unknown keys are rejected so that a
misspelled unit suffix cannot be silently ignored. Relative paths are
resolved against the directory of the configuration file.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .costs import CostSpec, HighFlowPenalty, make_residual
from .errors import ConfigError, InputError
from .problem import SECONDS_PER_DAY, Problem, single_regime_model
from .regime import RegimeModel, synthetic_regime_model
from .solver import SolveConfig

TIME_UNITS = {"day": SECONDS_PER_DAY, "nondimensional": None}


def _take(block: dict, allowed: set[str], where: str) -> dict:
    if not isinstance(block, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    return block


def _per_regime(value, inflows: np.ndarray, name: str) -> np.ndarray:
    if isinstance(value, str):
        if value != "inflow":
            raise ConfigError(f"{name}: only the string 'inflow' is understood")
        return inflows.copy()
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        return np.full(inflows.size, arr[0])
    if arr.size != inflows.size:
        raise ConfigError(f"{name}: {arr.size} entries for {inflows.size} regimes")
    return arr


@dataclass
class SimulateBlock:
    v0_fraction: float = 0.5
    i0: int = 0
    horizon_days: float = 125.0
    n_paths: int = 1000
    dt_sim_days: float | None = None
    seed: int = 0
    policy_csv: Path | None = None


@dataclass
class EstimateBlock:
    inflow_csv: Path | None = None
    lag_hours: float = 1.0
    bin_edges_m3s: list[float] = field(default_factory=list)
    representatives_m3s: list[float] = field(default_factory=list)


@dataclass
class VerifyBlock:
    K_values: list[int] = field(default_factory=lambda: [50, 100, 200, 400, 800])
    residual_samples: int = 1000


@dataclass
class RunConfig:
    """Parsed configuration; :meth:`problem` builds the model objects lazily."""

    base_dir: Path
    time_unit: str = "nondimensional"
    regimes: dict = field(default_factory=dict)
    costs: dict = field(default_factory=dict)
    solver: SolveConfig = field(default_factory=SolveConfig)
    estimate: EstimateBlock = field(default_factory=EstimateBlock)
    verify: VerifyBlock = field(default_factory=VerifyBlock)
    simulate: SimulateBlock = field(default_factory=SimulateBlock)
    seed: int | None = None

    @property
    def time_unit_seconds(self) -> float | None:
        return TIME_UNITS[self.time_unit]

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    # -- model construction -------------------------------------------

    def regime_model(self) -> RegimeModel:
        r = _take(self.regimes, {"model", "inline", "synthetic", "single_inflow_m3s"}, "regimes")
        if len(r) != 1:
            raise ConfigError("regimes needs exactly one of model, inline, synthetic, "
                              "single_inflow_m3s")
        ((kind, spec),) = r.items()
        if kind == "model":
            path = self.resolve(spec)
            if not path.is_file():
                raise InputError(f"regime model file not found: {path}")
            try:
                return RegimeModel.from_json(path.read_text())
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise InputError(f"{path}: malformed regime model ({exc})") from None
        if kind == "inline":
            return RegimeModel.from_dict(spec)
        if kind == "synthetic":
            s = dict(_take(spec, {"num_regimes", "seed", "bin_width_m3s", "rep_slope_m3s",
                                  "rep_offset_m3s", "lag_hours"}, "regimes.synthetic"))
            seed = s.pop("seed", 0) if self.seed is None else self.seed
            return synthetic_regime_model(
                num_regimes=int(s.get("num_regimes", 41)),
                seed=seed,
                bin_width=s.get("bin_width_m3s", 10.0),
                rep_slope=s.get("rep_slope_m3s", 5.0),
                rep_offset=s.get("rep_offset_m3s", 2.5),
                lag_hours=s.get("lag_hours", 1.0),
            )
        return single_regime_model(float(spec))

    def cost_spec(self, model: RegimeModel) -> CostSpec:
        c = _take(self.costs, {
            "capacity_m3", "band", "band_fraction", "band_schedule_days", "m", "n", "w", "y",
            "y_factor", "y_scale_m3s", "delta_per_day", "q_min_m3s", "q_max_m3s",
            "target_m3s", "threshold_m3s", "high_flow", "residual",
        }, "costs")
        capacity = float(c.get("capacity_m3", 1.0))
        if ("band" in c) == ("band_fraction" in c):
            raise ConfigError("costs needs exactly one of band, band_fraction")
        scale = 1.0 if "band" in c else capacity
        band = tuple(scale * float(x) for x in c.get("band", c.get("band_fraction")))
        schedule = tuple((float(t), scale * float(a), scale * float(b))
                         for t, a, b in c.get("band_schedule_days", []))
        if "y" in c and ("y_factor" in c or "y_scale_m3s" in c):
            raise ConfigError("give either y or y_factor with y_scale_m3s")
        y = float(c["y"]) if "y" in c else float(c.get("y_factor", 0.5)) * float(
            c.get("y_scale_m3s", 1.0)) ** 2
        inflows = model.representatives
        high = None
        if c.get("high_flow") is not None:
            h = _take(c["high_flow"], {"weight", "threshold_m3s"}, "costs.high_flow")
            high = HighFlowPenalty(float(h["weight"]), float(h["threshold_m3s"]))
        residual = c.get("residual", {"kind": "zero"})
        residual = dict(residual)
        kind = residual.pop("kind", "zero")
        try:
            res_fn = make_residual(kind, **residual)
        except TypeError as exc:
            raise ConfigError(f"costs.residual: {exc}") from None
        return CostSpec(
            target=_per_regime(c.get("target_m3s", "inflow"), inflows, "target_m3s"),
            threshold=_per_regime(c.get("threshold_m3s", "inflow"), inflows, "threshold_m3s"),
            capacity=capacity,
            band=band,
            m=float(c.get("m", 1.0)),
            n=float(c.get("n", 1.0)),
            w=float(c.get("w", 0.4)),
            y=y,
            delta=float(c.get("delta_per_day", 0.1)),
            q_min=float(c.get("q_min_m3s", 0.0)),
            q_max=float(c.get("q_max_m3s", 3.0)),
            high_flow=high,
            band_schedule=schedule,
            residual=res_fn,
        )

    def problem(self, model: RegimeModel | None = None) -> Problem:
        model = model or self.regime_model()
        return Problem(model, self.cost_spec(model), self.time_unit_seconds)


def _solver_block(d: dict) -> SolveConfig:
    s = _take(d, {"K", "T_days", "dt_factor", "steps", "steady_mode", "steady_tol",
                  "steady_criterion", "weno", "viscosity_sign", "literal_boundary",
                  "log_stride", "snapshot_stride"}, "solver")
    kw: dict[str, Any] = {k: v for k, v in s.items() if k != "T_days"}
    if "T_days" in s:
        kw["T"] = float(s["T_days"])
    return SolveConfig(**kw)


def parse_config(data: dict, base_dir: Path) -> RunConfig:
    top = _take(data, {"mode", "time_unit", "regimes", "costs", "solver", "estimate",
                       "verify", "simulate", "seed", "description"}, "config")
    unit = top.get("time_unit", "nondimensional")
    if unit not in TIME_UNITS:
        raise ConfigError(f"time_unit must be one of {sorted(TIME_UNITS)}")
    cfg = RunConfig(base_dir=Path(base_dir), time_unit=unit,
                    regimes=top.get("regimes", {"single_inflow_m3s": 1.0}),
                    costs=top.get("costs", {"band": [0.3, 0.7]}),
                    seed=top.get("seed"))
    try:
        cfg.solver = _solver_block(top.get("solver", {}))
        e = _take(top.get("estimate", {}), {"inflow_csv", "lag_hours", "bin_edges_m3s",
                                            "representatives_m3s"}, "estimate")
        cfg.estimate = EstimateBlock(
            inflow_csv=cfg.resolve(e["inflow_csv"]) if "inflow_csv" in e else None,
            lag_hours=float(e.get("lag_hours", 1.0)),
            bin_edges_m3s=list(e.get("bin_edges_m3s", [])),
            representatives_m3s=list(e.get("representatives_m3s", [])),
        )
        v = _take(top.get("verify", {}), {"K_values", "residual_samples"}, "verify")
        cfg.verify = VerifyBlock(**v)
        sm = _take(top.get("simulate", {}), {"v0_fraction", "i0", "horizon_days", "n_paths",
                                             "dt_sim_days", "seed", "policy_csv"}, "simulate")
        sm = dict(sm)
        if "policy_csv" in sm:
            sm["policy_csv"] = cfg.resolve(sm["policy_csv"])
        cfg.simulate = SimulateBlock(**sm)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.simulate.n_paths < 2:
        raise ConfigError("simulate.n_paths must be >= 2")
    if any(int(k) != k or k < 4 for k in cfg.verify.K_values):
        raise ConfigError("verify.K_values must be integers >= 4")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg})", line=exc.lineno) from None
    return parse_config(data, path.parent)


def estimate_bins(block: EstimateBlock) -> tuple[np.ndarray, np.ndarray]:
    """Bin edges and representatives for ``estimate``; midpoints by default."""
    edges = np.asarray(block.bin_edges_m3s, dtype=float)
    if edges.size == 0:
        raise ConfigError("estimate.bin_edges_m3s is empty: no regimes defined")
    if block.representatives_m3s:
        reps = np.asarray(block.representatives_m3s, dtype=float)
    else:
        upper = np.append(edges[1:], math.nan)
        reps = np.where(np.isnan(upper), edges, 0.5 * (edges + upper))
    return edges, reps


__all__ = [
    "RunConfig",
    "load_config",
    "parse_config",
    "estimate_bins",
]
