"""Running penalties and the state-dependent admissible discharge interval."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .errors import ConfigError

# Layout of the packed scalar parameter vector handed to the jitted kernels.
P_M, P_N, P_W, P_Y3, P_Q3, P_QMIN, P_QMAX = range(7)


@njit(cache=True, inline="always")
def _pow(x, e):
    # small integer exponents dominate; skip the generic pow call for them
    if e == 1.0:
        return x
    if e == 2.0:
        return x * x
    if e == 3.0:
        return x * x * x
    return x**e


@njit(cache=True, inline="always")
def penalty_value(q, target, threshold, par):
    """Flow penalty f1 + f2 (+ f3 when the high-flow weight is positive)."""
    m = par[P_M]
    n = par[P_N]
    f = _pow(abs(target - q), m + 1.0) / (m + 1.0)
    short = threshold - q
    if short > 0.0:
        f += par[P_W] * _pow(short, n + 1.0) / (n + 1.0)
    if par[P_Y3] > 0.0:
        over = q - par[P_Q3]
        if over > 0.0:
            f += par[P_Y3] * _pow(over, m + 1.0) / (m + 1.0)
    return f


@njit(cache=True, inline="always")
def penalty_slope(q, target, threshold, par):
    """df/dq. Continuous and nondecreasing for positive exponents."""
    m = par[P_M]
    n = par[P_N]
    d = q - target
    s = _pow(abs(d), m)
    slope = s if d > 0.0 else -s
    short = threshold - q
    if short > 0.0:
        slope -= par[P_W] * _pow(short, n)
    if par[P_Y3] > 0.0:
        over = q - par[P_Q3]
        if over > 0.0:
            slope += par[P_Y3] * _pow(over, m)
    return slope


@njit(cache=True)
def penalty_curvature(q, target, threshold, par):
    """d²f/dq² (one-sided at the kinks; may be inf or 0 for exponents != 1)."""
    m = par[P_M]
    n = par[P_N]
    d = abs(q - target)
    c = m * _pow(d, m - 1.0) if (d > 0.0 or m >= 1.0) else np.inf
    short = threshold - q
    if short > 0.0:
        c += par[P_W] * n * _pow(short, n - 1.0)
    if par[P_Y3] > 0.0:
        over = q - par[P_Q3]
        if over > 0.0:
            c += par[P_Y3] * m * _pow(over, m - 1.0)
    return c


# --------------------------------------------------------------------------
# Residual flow registry
# --------------------------------------------------------------------------

ResidualFn = Callable[[float, "np.ndarray | float"], "np.ndarray | float"]

_RESIDUALS: dict[str, Callable[..., ResidualFn]] = {}


def register_residual(name: str):
    """Register a factory ``(**params) -> residual(t, v)`` under ``name``."""

    def deco(factory):
        _RESIDUALS[name] = factory
        return factory

    return deco


def make_residual(name: str, **params) -> ResidualFn:
    try:
        factory = _RESIDUALS[name]
    except KeyError:
        raise ConfigError(
            f"unknown residual {name!r}; registered: {sorted(_RESIDUALS)}"
        ) from None
    fn = factory(**params)
    fn.residual_name = name
    fn.residual_params = dict(params)
    return fn


@register_residual("zero")
def _zero_residual():
    def residual(t, v):
        return np.zeros_like(np.asarray(v, dtype=float)) if np.ndim(v) else 0.0

    residual.lipschitz = 0.0
    residual.is_zero = True
    return residual


@register_residual("constant")
def _constant_residual(value_m3s=0.0):
    def residual(t, v):
        return np.full_like(np.asarray(v, dtype=float), value_m3s) if np.ndim(v) else value_m3s

    residual.lipschitz = 0.0
    return residual


@register_residual("linear")
def _linear_residual(intercept_m3s=0.0, slope_m3s_per_volume=0.0):
    def residual(t, v):
        return intercept_m3s + slope_m3s_per_volume * np.asarray(v, dtype=float)

    residual.lipschitz = abs(slope_m3s_per_volume)
    return residual


@register_residual("sine")
def _sine_residual(amplitude_m3s=0.0, wavenumber_per_volume=1.0, period=None):
    """``A sin(k v)``, optionally modulated by ``cos(2π t / period)``."""

    def residual(t, v):
        s = amplitude_m3s * np.sin(wavenumber_per_volume * np.asarray(v, dtype=float))
        if period:
            s = s * math.cos(2.0 * math.pi * t / period)
        return s

    residual.lipschitz = abs(amplitude_m3s * wavenumber_per_volume)
    residual.period = period
    return residual


ZERO_RESIDUAL = make_residual("zero")


# --------------------------------------------------------------------------
# Cost specification
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class HighFlowPenalty:
    """Penalty on discharges above ``threshold``; the exponent is shared with f1."""

    weight: float
    threshold: float

    def __post_init__(self):
        if not self.weight > 0:
            raise ConfigError("high-flow weight must be positive")


@dataclass(frozen=True, eq=False)
class CostSpec:
    """Penalty weights, discharge bounds and the comfort band.

    Discharges are in m³/s, volumes in the same unit as ``capacity`` and
    ``delta`` is per solver time unit. ``band_schedule`` holds
    ``(t_start, a, b)`` rows; the band in force at ``t`` is the last row with
    ``t_start <= t``.
    """

    target: np.ndarray
    threshold: np.ndarray
    capacity: float = 1.0
    band: tuple[float, float] = (0.3, 0.7)
    m: float = 1.0
    n: float = 1.0
    w: float = 0.4
    y: float = 0.5
    delta: float = 0.1
    q_min: float = 0.0
    q_max: float = 3.0
    high_flow: HighFlowPenalty | None = None
    band_schedule: tuple[tuple[float, float, float], ...] = ()
    residual: ResidualFn = field(default=ZERO_RESIDUAL)

    def __post_init__(self):
        target = np.atleast_1d(np.asarray(self.target, dtype=float))
        threshold = np.atleast_1d(np.asarray(self.threshold, dtype=float))
        for name, val in (("m", self.m), ("n", self.n), ("w", self.w), ("y", self.y)):
            if not val > 0:
                raise ConfigError(f"{name} must be positive, got {val}")
        if not self.capacity > 0:
            raise ConfigError("capacity must be positive")
        if not self.delta >= 0:
            raise ConfigError("delta must be non-negative")
        if not 0 <= self.q_min < self.q_max:
            raise ConfigError("need 0 <= q_min < q_max")
        schedule = tuple(sorted((float(t), float(a), float(b)) for t, a, b in self.band_schedule))
        for _, a, b in ((0.0, *self.band), *schedule):
            if not 0 < a < b < self.capacity:
                raise ConfigError(f"band ({a}, {b}) must satisfy 0 < a < b < capacity")
        target.setflags(write=False)
        threshold.setflags(write=False)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "threshold", threshold)
        object.__setattr__(self, "band", (float(self.band[0]), float(self.band[1])))
        object.__setattr__(self, "band_schedule", schedule)

    # -- helpers --------------------------------------------------------

    def for_regimes(self, num_regimes: int) -> "CostSpec":
        """Broadcast scalar target/threshold to ``num_regimes`` entries."""
        out = {}
        for name in ("target", "threshold"):
            arr = getattr(self, name)
            if arr.size == 1:
                out[name] = np.full(num_regimes, arr[0])
            elif arr.size != num_regimes:
                raise ConfigError(f"{name} has {arr.size} entries for {num_regimes} regimes")
        if not out:
            return self
        from dataclasses import replace

        return replace(self, **out)

    @property
    def is_time_dependent(self) -> bool:
        return bool(self.band_schedule) or bool(getattr(self.residual, "period", None))

    @property
    def residual_is_zero(self) -> bool:
        return bool(getattr(self.residual, "is_zero", False))

    def packed(self) -> np.ndarray:
        hf = self.high_flow
        return np.array(
            [
                self.m,
                self.n,
                self.w,
                hf.weight if hf else 0.0,
                hf.threshold if hf else 0.0,
                self.q_min,
                self.q_max,
            ]
        )

    def band_at(self, t: float) -> tuple[float, float]:
        a, b = self.band
        for t0, a0, b0 in self.band_schedule:
            if t0 <= t:
                a, b = a0, b0
            else:
                break
        return a, b

    # -- penalties ------------------------------------------------------

    def flow_penalty(self, t, q, i):
        """Discharge penalty ``f(t, q, i)`` for scalar or array ``q``."""
        par = self.packed()
        tgt, thr = self.target[i], self.threshold[i]
        if np.ndim(q) == 0:
            return penalty_value(float(q), tgt, thr, par)
        qa = np.asarray(q, dtype=float)
        out = np.empty_like(qa)
        for idx, qq in np.ndenumerate(qa):
            out[idx] = penalty_value(qq, tgt, thr, par)
        return out

    def volume_penalty(self, t, v):
        """``y`` outside the closed comfort band, 0 inside."""
        a, b = self.band_at(t)
        inside = (np.asarray(v) >= a) & (np.asarray(v) <= b)
        out = np.where(inside, 0.0, self.y)
        return float(out) if np.ndim(v) == 0 else out

    def control_interval(self, t, v, inflow: float) -> tuple[float, float]:
        """Admissible discharges at volume ``v`` given the current inflow ``Q_i``.

        Only the exact endpoints ``v == 0`` and ``v == capacity`` restrict the
        technological interval.
        """
        lo, hi = self.q_min, self.q_max
        if v == 0:
            hi = inflow + float(self.residual(t, 0.0))
        elif v == self.capacity:
            lo = inflow + float(self.residual(t, self.capacity))
        if not lo <= hi:
            raise ConfigError(
                f"empty control interval [{lo}, {hi}] at v={v}: dam capacity assumption violated"
            )
        return lo, hi

    def residual_range(self, times: Sequence[float] = (0.0,), samples: int = 201):
        """Sampled (inf, sup) of the residual flow over the volume range."""
        v = np.linspace(0.0, self.capacity, samples)
        vals = np.concatenate([np.atleast_1d(self.residual(t, v)) for t in times])
        return float(vals.min()), float(vals.max())

    def max_running_cost(self, inflows) -> float:
        """Upper bound of f + g over the technological interval and all regimes."""
        hi = 0.0
        for i in range(len(inflows)):
            for q in (self.q_min, self.q_max):
                hi = max(hi, self.flow_penalty(0.0, q, i))
        return hi + self.y
