"""Monte Carlo simulation of the controlled reservoir under a tabulated feedback policy."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .costs import P_QMAX, P_QMIN
from .errors import ConfigError, InputError, NumericalError
from .hamiltonian import kernel_functions
from .problem import Problem
from .regime import sample_regime_path
from .solver import PolicyField
from .scheme import Grid


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled path. ``cost_increment[k]`` is the discounted cost accrued on
    ``[t[k-1], t[k]]`` (zero for the first sample); ``q[k]`` is the discharge
    applied from ``t[k]`` on."""

    t: np.ndarray
    v: np.ndarray
    regime: np.ndarray
    q: np.ndarray
    cost_increment: np.ndarray

    @property
    def total_cost(self) -> float:
        return float(self.cost_increment.sum())

    def rows(self):
        for row in zip(self.t, self.regime, self.v, self.q, self.cost_increment):
            yield float(row[0]), int(row[1]), float(row[2]), float(row[3]), float(row[4])


@dataclass(frozen=True)
class ObjectiveEstimate:
    mean: float
    stderr: float
    n_paths: int
    tail_bound: float


def constant_policy(grid: Grid, num_regimes: int, q) -> PolicyField:
    """Policy table that ignores the volume; ``q`` is a scalar or one value per regime."""
    q = np.broadcast_to(np.asarray(q, dtype=float).reshape(-1, 1), (num_regimes, grid.K + 1))
    return PolicyField(grid, np.array(q))


def default_dt(problem: Problem, grid: Grid) -> float:
    """Substep that moves the volume by at most half a grid cell."""
    return grid.dv / (2.0 * problem.costs.q_max * problem.time_scale)


def mc_allowance(problem: Problem, grid: Grid, dt_sim: float) -> float:
    """Discretization allowance ``(Δv + dt_sim) F_max / δ`` with normalized ``Δv``."""
    delta = problem.costs.delta
    if delta <= 0:
        raise ConfigError("allowance needs a positive discount rate")
    return (grid.dv_normalized + dt_sim) * problem.max_running_cost() / delta


def tail_bound(problem: Problem, horizon: float) -> float:
    """Discounted cost that can accrue after ``horizon``."""
    delta = problem.costs.delta
    if delta <= 0:
        return math.inf
    return math.exp(-delta * horizon) * problem.max_running_cost() / delta


@njit(cache=True)
def _interp(table, v, dv, K):
    x = v / dv
    k = int(x)
    if k >= K:
        return table[K]
    if k < 0:
        return table[0]
    s = x - k
    return (1.0 - s) * table[k] + s * table[k + 1]


@njit(cache=True)
def _band_penalty(t, v, band_t, band_a, band_b, y):
    j = 0
    for s in range(band_t.size):
        if band_t[s] <= t:
            j = s
    return 0.0 if band_a[j] <= v <= band_b[j] else y


@njit(cache=True)
def _control(v, i, qtab, restab, dv, K, capacity, inflow, par):
    q = _interp(qtab[i], v, dv, K)
    lo = par[P_QMIN]
    hi = par[P_QMAX]
    if v <= 0.0:
        hi = inflow[i] + restab[0]
    elif v >= capacity:
        lo = inflow[i] + restab[K]
    return min(max(q, lo), hi)


@njit(cache=True)
def _integrate(penalty, switch_t, switch_i, horizon, dt, v0, qtab, restab, capacity, inflow,
               target, threshold, par, time_scale, delta, y, band_t, band_a, band_b,
               record, out_t, out_v, out_i, out_q, out_c):
    """Euler integration; returns ``(total_cost, n_samples, ok)``."""
    K = qtab.shape[1] - 1
    dv = capacity / K
    t = 0.0
    v = v0
    seg = 0
    nseg = switch_t.size
    i = switch_i[0]
    total = 0.0
    inc = 0.0
    n = 0
    while True:
        q = _control(v, i, qtab, restab, dv, K, capacity, inflow, par)
        f = penalty(q, target[i], threshold[i], par)
        c0 = math.exp(-delta * t) * (f + _band_penalty(t, v, band_t, band_a, band_b, y))
        if record:
            out_t[n] = t
            out_v[n] = v
            out_i[n] = i
            out_q[n] = q
            out_c[n] = inc
        n += 1
        if t >= horizon:
            break
        stop = horizon
        if seg + 1 < nseg and switch_t[seg + 1] < horizon:
            stop = switch_t[seg + 1]
        rem = stop - t
        if rem <= dt * (1.0 + 1e-9):
            h = rem
            t_new = stop
        else:
            h = dt
            t_new = t + dt
        net = inflow[i] + _interp(restab, v, dv, K) - q
        v = min(max(v + h * time_scale * net, 0.0), capacity)
        if not np.isfinite(v):
            return total, n, False
        c1 = math.exp(-delta * t_new) * (f + _band_penalty(t_new, v, band_t, band_a, band_b, y))
        inc = 0.5 * h * (c0 + c1)
        total += inc
        t = t_new
        if t_new == stop and stop < horizon:
            seg += 1
            i = switch_i[seg]
    return total, n, True


class _Setup:
    """Arrays shared by every path of one simulation run."""

    def __init__(self, policy: PolicyField, problem: Problem, v0: float, i0: int,
                 horizon: float, dt_sim: float | None):
        costs = problem.costs
        if policy.num_regimes != problem.num_regimes:
            raise InputError(
                f"policy has {policy.num_regimes} regimes, model has {problem.num_regimes}"
            )
        if not np.isclose(policy.grid.capacity, costs.capacity, rtol=1e-12, atol=0.0):
            raise InputError("policy grid capacity differs from the cost specification")
        if getattr(costs.residual, "period", None):
            raise ConfigError("time-periodic residual flows are not supported by the simulator")
        if not 0 <= v0 <= costs.capacity:
            raise InputError(f"v0={v0} outside [0, {costs.capacity}]")
        if not 0 <= i0 < problem.num_regimes:
            raise InputError(f"i0={i0} out of range")
        if not horizon > 0:
            raise InputError("horizon must be positive")
        self.dt = default_dt(problem, policy.grid) if dt_sim is None else float(dt_sim)
        if not self.dt > 0:
            raise InputError("dt_sim must be positive")
        vg = policy.grid.vertices
        par = costs.packed()
        _, self.penalty = kernel_functions(par)
        sched = [(-math.inf, *costs.band)] + list(costs.band_schedule)
        self.band_t = np.array([s[0] for s in sched])
        self.band_a = np.array([s[1] for s in sched])
        self.band_b = np.array([s[2] for s in sched])
        self.kw = dict(
            qtab=np.ascontiguousarray(policy.q_star, dtype=float),
            restab=np.ascontiguousarray(np.broadcast_to(costs.residual(0.0, vg), vg.shape),
                                        dtype=float),
            capacity=float(costs.capacity),
            inflow=np.ascontiguousarray(problem.regimes.representatives, dtype=float),
            target=np.ascontiguousarray(costs.target),
            threshold=np.ascontiguousarray(costs.threshold),
            par=par,
            time_scale=problem.time_scale,
            delta=float(costs.delta),
            y=float(costs.y),
        )
        self.problem = problem
        self.v0, self.i0, self.horizon = float(v0), int(i0), float(horizon)

    def run(self, rng, record: bool):
        path = sample_regime_path(self.problem.regimes, self.horizon, self.i0, seed=rng,
                                  rate_scale=self.problem.rate_factor)
        st = np.array([p[0] for p in path])
        si = np.array([p[1] for p in path], dtype=np.int64)
        n_max = int(math.ceil(self.horizon / self.dt)) + 2 * st.size + 2 if record else 1
        out = [np.empty(n_max), np.empty(n_max), np.empty(n_max, dtype=np.int64),
               np.empty(n_max), np.empty(n_max)]
        k = self.kw
        total, n, ok = _integrate(
            self.penalty, st, si, self.horizon, self.dt, self.v0, k["qtab"], k["restab"],
            k["capacity"], k["inflow"], k["target"], k["threshold"], k["par"],
            k["time_scale"], k["delta"], k["y"], self.band_t, self.band_a, self.band_b,
            record, *out,
        )
        if not ok:
            raise NumericalError("non-finite volume during simulation")
        return total, n, out


def simulate_trajectory(policy: PolicyField, problem: Problem, v0: float, i0: int,
                        horizon: float, dt_sim: float | None = None, seed=None) -> Trajectory:
    """Simulate one path of the piecewise-deterministic volume dynamics.

    Explicit Euler between the exact switch times of the regime chain; the
    discharge is the policy interpolated linearly in volume, projected onto
    the boundary control interval at an empty or full reservoir. Volumes are
    clamped to ``[0, capacity]`` after every substep.

    Parameters
    ----------
    policy : PolicyField
    problem : Problem
    v0 : float
        Initial volume in the units of ``capacity``.
    i0 : int
        Initial regime.
    horizon : float
        Simulated time in solver time units.
    dt_sim : float, optional
        Euler substep; defaults to :func:`default_dt`.
    seed : int, Generator or None
    """
    setup = _Setup(policy, problem, v0, i0, horizon, dt_sim)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    _, n, (t, v, i, q, c) = setup.run(rng, record=True)
    return Trajectory(t[:n].copy(), v[:n].copy(), i[:n].copy(), q[:n].copy(), c[:n].copy())


def estimate_objective(policy: PolicyField, problem: Problem, v0: float, i0: int,
                       horizon: float, n_paths: int, dt_sim: float | None = None,
                       seed: int = 0) -> ObjectiveEstimate:
    """Monte Carlo mean and standard error of the discounted cost.

    Path ``k`` draws from its own stream seeded by ``(seed, k)``, so results do
    not depend on evaluation order.
    """
    if n_paths < 2:
        raise InputError("n_paths must be >= 2")
    setup = _Setup(policy, problem, v0, i0, horizon, dt_sim)
    costs = np.empty(n_paths)
    for k in range(n_paths):
        costs[k] = setup.run(np.random.default_rng([seed, k]), record=False)[0]
    return ObjectiveEstimate(
        mean=float(costs.mean()),
        stderr=float(costs.std(ddof=1) / math.sqrt(n_paths)),
        n_paths=n_paths,
        tail_bound=tail_bound(problem, horizon),
    )
