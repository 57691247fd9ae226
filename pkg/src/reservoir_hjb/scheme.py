"""WENO3 one-sided gradients and the explicit local Lax-Friedrichs update.

The kernels work on the normalized volume ``v / capacity`` in ``[0, 1]``; a
field holds one row of ``K + 1`` vertex values per regime.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

from .costs import P_QMAX, P_QMIN
from .errors import ConfigError, InputError, InstabilityError, NumericalError
from .hamiltonian import kernel_functions
from .problem import Problem

EPS = 1e-12

# status codes returned by the jitted kernels
OK, STEADY, NONFINITE, NEWTON_FAIL = 0, 1, 2, 3


@dataclass(frozen=True)
class Grid:
    """Uniform volume grid with ``K`` cells on ``[0, capacity]``."""

    K: int
    capacity: float = 1.0

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 4:
            raise ConfigError(f"K must be an integer >= 4, got {self.K}")
        if not self.capacity > 0:
            raise ConfigError("capacity must be positive")
        object.__setattr__(self, "K", int(self.K))

    @property
    def dv(self) -> float:
        return self.capacity / self.K

    @property
    def dv_normalized(self) -> float:
        return 1.0 / self.K

    @property
    def vertices(self) -> np.ndarray:
        # k * V / K rather than k * dv so that band edges land exactly on vertices
        return np.arange(self.K + 1) * self.capacity / self.K

    @property
    def normalized_vertices(self) -> np.ndarray:
        return np.arange(self.K + 1) / self.K


@dataclass(frozen=True, eq=False)
class ValueField:
    """Per-regime vertex values at time ``t``; ``values`` has shape ``(I+1, K+1)``."""

    grid: Grid
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, ndmin=2)
        if vals.shape[1] != self.grid.K + 1:
            raise InputError(f"field has {vals.shape[1]} vertices, grid needs {self.grid.K + 1}")
        object.__setattr__(self, "values", vals)

    @property
    def num_regimes(self) -> int:
        return self.values.shape[0]

    def regime(self, i: int) -> np.ndarray:
        return self.values[i]


# --------------------------------------------------------------------------
# Gradient reconstruction
# --------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _weights(d2_side, d2_center):
    r = (EPS + d2_side * d2_side) / (EPS + d2_center * d2_center)
    return 1.0 / (1.0 + 2.0 * r * r)


@njit(cache=True, inline="always")
def derivative_pair_kernel(phi, k, dv, weno, literal_boundary):
    """(p⁻, p⁺) at vertex ``k`` of one regime row."""
    K = phi.size - 1
    if k == 0:
        d = (phi[1] - phi[0]) / dv
        return d, d
    if k == K:
        d = (phi[K] - phi[K - 1]) / dv
        return d, d
    bwd = (phi[k] - phi[k - 1]) / dv
    fwd = (phi[k + 1] - phi[k]) / dv
    if not weno:
        return bwd, fwd
    if k == K - 1 and literal_boundary:
        return fwd, fwd
    base = 0.5 * (bwd + fwd)
    d2k = phi[k + 1] - 2.0 * phi[k] + phi[k - 1]
    if k == 1:
        pm = bwd
    else:
        om = _weights(phi[k] - 2.0 * phi[k - 1] + phi[k - 2], d2k)
        third = (phi[k - 1] - phi[k - 2]) - 2.0 * (phi[k] - phi[k - 1]) + (phi[k + 1] - phi[k])
        pm = base - 0.5 * om * third / dv
    if k == K - 1:
        pp = fwd
    else:
        op = _weights(phi[k + 2] - 2.0 * phi[k + 1] + phi[k], d2k)
        third = (phi[k + 2] - phi[k + 1]) - 2.0 * (phi[k + 1] - phi[k]) + (phi[k] - phi[k - 1])
        pp = base - 0.5 * op * third / dv
    return pm, pp


@njit(cache=True)
def _pairs_into(phi, dv, weno, literal_boundary, pm, pp):
    R, K1 = phi.shape
    for i in range(R):
        row = phi[i]
        for k in range(K1):
            pm[i, k], pp[i, k] = derivative_pair_kernel(row, k, dv, weno, literal_boundary)


def _check_row(values) -> np.ndarray:
    phi = np.ascontiguousarray(values, dtype=float)
    if phi.ndim != 1 or phi.size < 5:
        raise ConfigError("need a 1-D array on a grid with K >= 4")
    return phi


def weno_derivative_pair(values, k: int, dv: float, *, weno: bool = True,
                         literal_boundary: bool = False) -> tuple[float, float]:
    """One-sided gradients ``(p⁻, p⁺)`` at vertex ``k``.

    Parameters
    ----------
    values : array_like
        One regime's ``K + 1`` vertex values.
    k : int
        Vertex index, ``0 <= k <= K``.
    dv : float
        Grid spacing.
    weno : bool
        ``False`` gives the plain adjacent one-sided differences.
    literal_boundary : bool
        At ``k = K-1`` use the forward difference for both sides instead of
        only for ``p⁺``.
    """
    phi = _check_row(values)
    if not 0 <= k < phi.size:
        raise InputError(f"vertex {k} outside 0..{phi.size - 1}")
    pm, pp = derivative_pair_kernel(phi, int(k), float(dv), weno, literal_boundary)
    return float(pm), float(pp)


def derivative_pairs(values, dv: float, *, weno: bool = True,
                     literal_boundary: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`weno_derivative_pair` over every vertex and regime."""
    phi = np.ascontiguousarray(values, dtype=float)
    squeeze = phi.ndim == 1
    phi = np.atleast_2d(phi)
    if phi.shape[1] < 5:
        raise ConfigError("need K >= 4")
    pm = np.empty_like(phi)
    pp = np.empty_like(phi)
    _pairs_into(phi, float(dv), weno, literal_boundary, pm, pp)
    return (pm[0], pp[0]) if squeeze else (pm, pp)


# --------------------------------------------------------------------------
# Time step
# --------------------------------------------------------------------------


class KernelInputs(NamedTuple):
    """Problem data frozen at one time level, laid out for the kernels."""

    argmin: object
    penalty: object
    inflow: np.ndarray
    lam: np.ndarray
    target: np.ndarray
    threshold: np.ndarray
    par: np.ndarray
    delta: float
    drift: float
    g: np.ndarray
    res: np.ndarray


def kernel_inputs(problem: Problem, grid: Grid, t: float) -> KernelInputs:
    costs = problem.costs
    if not np.isclose(grid.capacity, costs.capacity, rtol=1e-12, atol=0.0):
        raise ConfigError("grid capacity differs from the cost specification")
    v = grid.vertices
    par = costs.packed()
    argmin, penalty = kernel_functions(par)
    return KernelInputs(
        argmin=argmin,
        penalty=penalty,
        inflow=np.ascontiguousarray(problem.regimes.representatives, dtype=float),
        lam=np.ascontiguousarray(problem.switching_rates()),
        target=np.ascontiguousarray(costs.target),
        threshold=np.ascontiguousarray(costs.threshold),
        par=par,
        delta=float(costs.delta),
        drift=problem.drift_factor,
        g=np.ascontiguousarray(costs.volume_penalty(t, v), dtype=float),
        res=np.ascontiguousarray(np.broadcast_to(costs.residual(t, v), v.shape), dtype=float),
    )


@njit(cache=True, inline="always")
def _vertex_interval(k, K, Q, res, par):
    lo = par[P_QMIN]
    hi = par[P_QMAX]
    if k == 0:
        hi = Q + res[0]
    elif k == K:
        lo = Q + res[K]
    return lo, hi


@njit(cache=True)
def _advance(phi, out, pm, pp, dt, dv, weno, literal_boundary, sign, argmin, penalty,
             inflow, lam, target, threshold, par, delta, drift, g, res):
    """One explicit step of all regimes from the frozen ``phi``; returns (status, i, k)."""
    R, K1 = phi.shape
    K = K1 - 1
    _pairs_into(phi, dv, weno, literal_boundary, pm, pp)
    for i in range(R):
        Q = inflow[i]
        tgt = target[i]
        thr = threshold[i]
        for k in range(K1):
            lo, hi = _vertex_interval(k, K, Q, res, par)
            a = pm[i, k]
            b = pp[i, k]
            P = drift * 0.5 * (a + b)
            q, it = argmin(P, tgt, thr, par, lo, hi)
            if it < 0:
                return NEWTON_FAIL, i, k
            base = Q + res[k]
            running = (base - q) * P + penalty(q, tgt, thr, par) + g[k]
            phik = phi[i, k]
            coupling = 0.0
            for j in range(R):
                if lam[i, j] != 0.0:
                    coupling += lam[i, j] * (phik - phi[j, k])
            H = delta * phik + coupling - running
            visc = 0.0
            if 0 < k < K and a != b:
                q1, it1 = argmin(drift * min(a, b), tgt, thr, par, lo, hi)
                q2, it2 = argmin(drift * max(a, b), tgt, thr, par, lo, hi)
                if it1 < 0 or it2 < 0:
                    return NEWTON_FAIL, i, k
                D = drift * max(abs(base - q1), abs(base - q2))
                visc = sign * 0.5 * D * (b - a)
            val = phik - dt * (H + visc)
            out[i, k] = val
    return OK, -1, -1


@njit(cache=True)
def _first_nonfinite(a):
    R, K1 = a.shape
    for i in range(R):
        for k in range(K1):
            if not np.isfinite(a[i, k]):
                return i, k
    return -1, -1


@njit(cache=True)
def march_kernel(phi, nsteps, dt, dv, weno, literal_boundary, sign, argmin, penalty,
                 inflow, lam, target, threshold, par, delta, drift, g, res,
                 stop_tol, residuals, offset):
    """Advance ``phi`` in place by up to ``nsteps`` steps.

    Per-step l∞ changes go to ``residuals[offset:]``. Stops early once a change
    is ``<= stop_tol``. Returns ``(steps_done, status, i, k)``.
    """
    out = np.empty_like(phi)
    pm = np.empty_like(phi)
    pp = np.empty_like(phi)
    for s in range(nsteps):
        status, bi, bk = _advance(phi, out, pm, pp, dt, dv, weno, literal_boundary, sign,
                                  argmin, penalty, inflow, lam, target, threshold, par,
                                  delta, drift, g, res)
        if status != OK:
            return s, status, bi, bk
        r = 0.0
        bad = False
        R, K1 = phi.shape
        for i in range(R):
            for k in range(K1):
                d = abs(out[i, k] - phi[i, k])
                if d > r:
                    r = d
                elif not d < np.inf:  # NaN fails every comparison
                    bad = True
                phi[i, k] = out[i, k]
        if bad or not r < np.inf:
            bi, bk = _first_nonfinite(out)
            return s, NONFINITE, bi, bk
        residuals[offset + s] = r
        if r <= stop_tol:
            return s + 1, STEADY, -1, -1
    return nsteps, OK, -1, -1


@njit(cache=True)
def policy_kernel(phi, dv, weno, literal_boundary, argmin, inflow, target, threshold, par,
                  drift, res, q_out):
    R, K1 = phi.shape
    K = K1 - 1
    for i in range(R):
        for k in range(K1):
            a, b = derivative_pair_kernel(phi[i], k, dv, weno, literal_boundary)
            lo, hi = _vertex_interval(k, K, inflow[i], res, par)
            q, it = argmin(drift * 0.5 * (a + b), target[i], threshold[i], par, lo, hi)
            if it < 0:
                return i, k
            q_out[i, k] = q
    return -1, -1


def raise_for_status(status: int, step: int, i: int, k: int):
    if status == NONFINITE:
        raise InstabilityError(step, i, k)
    if status == NEWTON_FAIL:
        raise NumericalError(f"inner minimization failed at step {step} (regime {i}, vertex {k})")


def llf_step(field: ValueField, problem: Problem, dt: float, *, weno: bool = True,
             literal_boundary: bool = False, viscosity_sign: float = -1.0) -> ValueField:
    """Advance ``field`` one explicit step backward in time.

    Every regime is updated from the same frozen input. The LLF dissipation is
    ``viscosity_sign · (D/2)(p⁺ - p⁻)`` inside the bracket, with ``D = 0`` at
    the two boundary vertices.

    Raises
    ------
    InstabilityError
        At the first non-finite output value.
    """
    if not dt > 0:
        raise ConfigError("dt must be positive")
    if field.num_regimes != problem.num_regimes:
        raise InputError("field and problem disagree on the number of regimes")
    data = kernel_inputs(problem, field.grid, field.t)
    phi = np.ascontiguousarray(field.values, dtype=float)
    out = np.empty_like(phi)
    pm = np.empty_like(phi)
    pp = np.empty_like(phi)
    status, i, k = _advance(phi, out, pm, pp, float(dt), field.grid.dv_normalized, weno,
                            literal_boundary, float(viscosity_sign), *data)
    if status == OK and not np.all(np.isfinite(out)):
        status, (i, k) = NONFINITE, _first_nonfinite(out)
    raise_for_status(status, 0, i, k)
    return ValueField(field.grid, out, field.t - dt)
