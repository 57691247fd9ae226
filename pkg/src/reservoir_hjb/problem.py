"""A regime chain and a cost specification bundled with their unit conventions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costs import CostSpec
from .errors import ConfigError
from .regime import RegimeModel

SECONDS_PER_HOUR = 3600.0
SECONDS_PER_DAY = 86400.0


def single_regime_model(inflow: float) -> RegimeModel:
    """A chain with one regime and no switching."""
    return RegimeModel(bin_edges=[0.0], representatives=[inflow], rates=[[0.0]])


@dataclass(frozen=True, eq=False)
class Problem:
    """Everything the solver and simulator need besides numerical settings.

    Parameters
    ----------
    regimes : RegimeModel
        Inflow chain; rates in 1/h.
    costs : CostSpec
        Penalties and bounds. Scalar targets/thresholds are broadcast.
    time_unit_seconds : float or None
        Length of one solver time unit. ``86400`` measures time in days, in
        which case discharges in m³/s move ``86400`` volume units per day and
        hourly rates are multiplied by 24. ``None`` means everything is
        already expressed in one consistent set of units.
    """

    regimes: RegimeModel
    costs: CostSpec
    time_unit_seconds: float | None = None

    def __post_init__(self):
        costs = self.costs.for_regimes(self.regimes.num_regimes)
        object.__setattr__(self, "costs", costs)
        if self.time_unit_seconds is not None and not self.time_unit_seconds > 0:
            raise ConfigError("time_unit_seconds must be positive")
        times = [0.0] + [t for t, _, _ in costs.band_schedule]
        lo_res, hi_res = costs.residual_range(times)
        q = self.regimes.representatives
        if not costs.q_max > q.max() + hi_res:
            raise ConfigError(
                f"capacity assumption violated: q_max={costs.q_max} must exceed "
                f"max inflow {q.max()} + sup residual {hi_res}"
            )
        if not costs.q_min < q[0] + lo_res:
            raise ConfigError(
                f"capacity assumption violated: q_min={costs.q_min} must be below "
                f"lowest inflow {q[0]} + inf residual {lo_res}"
            )

    @property
    def num_regimes(self) -> int:
        return self.regimes.num_regimes

    @property
    def time_scale(self) -> float:
        """Volume moved per solver time unit by a net flow of one m³/s."""
        return 1.0 if self.time_unit_seconds is None else float(self.time_unit_seconds)

    @property
    def drift_factor(self) -> float:
        """Factor turning a net flow (m³/s) into d(v/capacity)/dt."""
        return self.time_scale / self.costs.capacity

    @property
    def rate_factor(self) -> float:
        """Factor turning hourly rates into rates per solver time unit."""
        if self.time_unit_seconds is None:
            return 1.0
        return self.time_unit_seconds / SECONDS_PER_HOUR

    def switching_rates(self) -> np.ndarray:
        """Off-diagonal rates per solver time unit, zero diagonal."""
        return self.regimes.off_diagonal_rates() * self.rate_factor

    def inflow(self, i: int) -> float:
        return float(self.regimes.representatives[i])

    def control_interval(self, t: float, v: float, i: int) -> tuple[float, float]:
        return self.costs.control_interval(t, v, self.inflow(i))

    def max_running_cost(self) -> float:
        return self.costs.max_running_cost(self.regimes.representatives)
