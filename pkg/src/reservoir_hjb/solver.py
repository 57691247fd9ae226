"""Backward marching from the terminal condition, steady detection and policy extraction."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError, NumericalError
from .problem import Problem
from .scheme import (
    STEADY,
    Grid,
    ValueField,
    kernel_inputs,
    march_kernel,
    policy_kernel,
    raise_for_status,
)

log = logging.getLogger(__name__)

STEADY_CRITERIA = ("fixed_point", "increment")


class SteadyStateWarning(UserWarning):
    """Steady mode was requested but the tolerance was not reached."""


class ValueBoundWarning(UserWarning):
    """The computed value left the interval implied by nonnegative bounded costs."""


@dataclass(frozen=True)
class SolveConfig:
    """Numerical settings of a backward solve.

    Attributes
    ----------
    K : int
        Number of grid cells.
    T : float
        Horizon in solver time units.
    dt_factor : float
        ``dt = dt_factor / K`` in normalized volume units. Ignored if ``steps``
        is given.
    steps : int, optional
        Explicit number of time steps ``L``; then ``dt = T / L``.
    steady_mode : bool
        Stop as soon as the steady criterion is met.
    steady_tol : float
        Steady tolerance in value units.
    steady_criterion : {"fixed_point", "increment"}
        ``"fixed_point"`` stops when the per-step change bounds the distance to
        the discrete fixed point by ``steady_tol``: with discount ``δ`` the
        step map contracts by ``1 - δ dt``, so the bound is
        ``change / (δ dt)``. Without discount ``change / dt`` is used.
        ``"increment"`` compares the raw per-step change with ``steady_tol``.
    weno : bool
        WENO3 gradients; ``False`` selects plain LLF.
    viscosity_sign : float
        Sign of the dissipation term, ``-1`` for the monotone flux.
    literal_boundary : bool
        See :func:`reservoir_hjb.scheme.weno_derivative_pair`.
    log_stride : int
        Keep every ``log_stride``-th residual in the convergence log (the last
        step is always kept).
    snapshot_stride : int, optional
        Retain a copy of the field every that many steps.
    check_stride : int
        Value-bound check interval in steps.
    """

    K: int = 100
    T: float = 125.0
    dt_factor: float = 0.25
    steps: int | None = None
    steady_mode: bool = False
    steady_tol: float = 1e-10
    steady_criterion: str = "fixed_point"
    weno: bool = True
    viscosity_sign: float = -1.0
    literal_boundary: bool = False
    log_stride: int = 1
    snapshot_stride: int | None = None
    check_stride: int = 5000

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigError("T must be positive")
        if self.steps is None and not self.dt_factor > 0:
            raise ConfigError("dt_factor must be positive")
        if self.steps is not None and not (int(self.steps) == self.steps and self.steps >= 1):
            raise ConfigError("steps must be a positive integer")
        if not self.steady_tol > 0:
            raise ConfigError("steady_tol must be positive")
        if self.steady_criterion not in STEADY_CRITERIA:
            raise ConfigError(f"steady_criterion must be one of {STEADY_CRITERIA}")
        if self.viscosity_sign not in (-1.0, 1.0):
            raise ConfigError("viscosity_sign must be +1 or -1")
        if self.log_stride < 1 or self.check_stride < 1:
            raise ConfigError("strides must be >= 1")
        if self.snapshot_stride is not None and self.snapshot_stride < 1:
            raise ConfigError("snapshot_stride must be >= 1")
        Grid(self.K)  # validates K

    @property
    def num_steps(self) -> int:
        if self.steps is not None:
            return int(self.steps)
        ratio = self.T * self.K / self.dt_factor
        n = round(ratio)
        return int(n) if abs(ratio - n) < 1e-9 * max(1.0, ratio) else math.ceil(ratio)

    @property
    def dt(self) -> float:
        return self.T / self.num_steps


@dataclass(frozen=True, eq=False)
class PolicyField:
    """Optimal discharge ``q*_i(v_k)`` (m³/s) extracted at time ``t``."""

    grid: Grid
    q_star: np.ndarray
    t: float = 0.0

    @property
    def num_regimes(self) -> int:
        return self.q_star.shape[0]

    def at(self, v: float, i: int) -> float:
        """Linear interpolation in volume for regime ``i``."""
        return float(np.interp(v, self.grid.vertices, self.q_star[i]))


@dataclass(frozen=True, eq=False)
class SolveResult:
    """Outcome of :func:`solve`."""

    value: ValueField
    policy: PolicyField
    residuals: np.ndarray
    steps_taken: int
    dt: float
    converged: bool
    status: str
    snapshots: list[ValueField] = field(default_factory=list)

    @property
    def final_residual(self) -> float:
        return float(self.residuals[-1]) if self.residuals.size else math.nan

    def convergence_log(self, stride: int = 1) -> np.ndarray:
        """Rows ``(step, t, residual)``; the last step is always included."""
        n = self.residuals.size
        idx = np.arange(0, n, stride)
        if n and idx[-1] != n - 1:
            idx = np.append(idx, n - 1)
        T = self.value.t + self.steps_taken * self.dt
        steps = idx + 1
        return np.column_stack([steps, T - steps * self.dt, self.residuals[idx]])


def value_upper_bound(problem: Problem, remaining: float) -> float:
    """``F_max (1 - e^{-δ s}) / δ`` for a remaining horizon ``s`` (``F_max s`` if ``δ = 0``)."""
    fmax = problem.max_running_cost()
    delta = problem.costs.delta
    if delta == 0:
        return fmax * remaining
    return fmax * -math.expm1(-delta * remaining) / delta


def steady_residual(prev: ValueField, nxt: ValueField) -> float:
    """l∞ distance between two fields on the same grid."""
    a = np.asarray(prev.values)
    b = np.asarray(nxt.values)
    if a.shape != b.shape or prev.grid.K != nxt.grid.K:
        raise InputError(f"field shapes differ: {a.shape} vs {b.shape}")
    return float(np.max(np.abs(a - b)))


def _stop_tol(config: SolveConfig, problem: Problem, dt: float) -> float:
    if not config.steady_mode:
        return -1.0
    if config.steady_criterion == "increment":
        return config.steady_tol
    rate = problem.costs.delta if problem.costs.delta > 0 else 1.0
    return config.steady_tol * rate * dt


def extract_policy(value: ValueField, problem: Problem, *, weno: bool = True,
                   literal_boundary: bool = False) -> PolicyField:
    """Minimize the Hamiltonian at the averaged gradient of every vertex."""
    if not np.all(np.isfinite(value.values)):
        raise InputError("value field contains non-finite entries")
    if value.num_regimes != problem.num_regimes:
        raise InputError("field and problem disagree on the number of regimes")
    d = kernel_inputs(problem, value.grid, value.t)
    q = np.empty_like(value.values)
    i, k = policy_kernel(np.ascontiguousarray(value.values), value.grid.dv_normalized, weno,
                         literal_boundary, d.argmin, d.inflow, d.target, d.threshold, d.par,
                         d.drift, d.res, q)
    if i >= 0:
        raise NumericalError(f"inner minimization failed at regime {i}, vertex {k}")
    return PolicyField(value.grid, q, value.t)


def solve(config: SolveConfig, problem: Problem, terminal=0.0) -> SolveResult:
    """March the optimality system from ``t = T`` down to ``t = 0``.

    Parameters
    ----------
    config : SolveConfig
    problem : Problem
    terminal : float or array_like
        Terminal data at ``t = T``, broadcast to ``(I+1, K+1)``.

    Returns
    -------
    SolveResult
        Field at the final time level (``0`` unless steady mode stopped
        early), the policy extracted from it and the per-step residuals.

    Raises
    ------
    InstabilityError
        If a non-finite value appears; carries the step index.
    """
    grid = Grid(config.K, problem.costs.capacity)
    R = problem.num_regimes
    phi = np.array(np.broadcast_to(np.asarray(terminal, dtype=float), (R, grid.K + 1)))
    if not np.all(np.isfinite(phi)):
        raise ConfigError("terminal data must be finite")
    L = config.num_steps
    dt = config.dt
    stop_tol = _stop_tol(config, problem, dt)
    residuals = np.empty(L)
    snapshots: list[ValueField] = []
    time_dependent = problem.costs.is_time_dependent
    change_times = sorted(t for t, _, _ in problem.costs.band_schedule)
    terminal_max = float(np.max(np.abs(phi)))
    done = 0
    status = 0
    data = None
    while done < L:
        t_now = config.T - done * dt
        chunk = min(L - done, config.check_stride)
        if config.snapshot_stride:
            chunk = min(chunk, config.snapshot_stride - done % config.snapshot_stride)
        if time_dependent:
            # the band schedule is piecewise constant; other time dependence goes step by step
            if getattr(problem.costs.residual, "period", None):
                chunk = 1
            else:
                upcoming = [t for t in change_times if t < t_now]
                if upcoming:
                    chunk = min(chunk, max(1, math.ceil((t_now - upcoming[-1]) / dt - 1e-9)))
            data = kernel_inputs(problem, grid, t_now)
        elif data is None:
            data = kernel_inputs(problem, grid, t_now)
        n, status, i, k = march_kernel(
            phi, chunk, dt, grid.dv_normalized, config.weno, config.literal_boundary,
            float(config.viscosity_sign), *data, stop_tol, residuals, done,
        )
        raise_for_status(status, done + n, i, k)
        done += n
        remaining = done * dt
        bound = value_upper_bound(problem, remaining) + terminal_max
        # WENO is not monotone; small overshoots are expected, only divergence is flagged
        slack = 1e-3 * (1.0 + bound)
        if phi.max() > bound + slack or phi.min() < -terminal_max - slack:
            warnings.warn(
                f"value left [0, {bound:.6g}] after {done} steps "
                f"(range [{phi.min():.6g}, {phi.max():.6g}])",
                ValueBoundWarning,
                stacklevel=2,
            )
        if config.snapshot_stride and done % config.snapshot_stride == 0:
            snapshots.append(ValueField(grid, phi.copy(), config.T - done * dt))
        if status == STEADY:
            break
    residuals = residuals[:done]
    converged = status == STEADY
    if config.steady_mode and not converged:
        warnings.warn(
            f"steady tolerance not reached in {L} steps; final residual "
            f"{residuals[-1]:.3e} (stop threshold {stop_tol:.3e})",
            SteadyStateWarning,
            stacklevel=2,
        )
        status_text = "not_converged"
    else:
        status_text = "steady" if converged else "completed"
    log.info("solve %s after %d/%d steps, last residual %.3e", status_text, done, L,
             residuals[-1] if done else math.nan)
    value = ValueField(grid, phi, config.T - done * dt)
    policy = extract_policy(value, problem, weno=config.weno,
                            literal_boundary=config.literal_boundary)
    return SolveResult(value, policy, residuals, done, dt, converged, status_text, snapshots)
