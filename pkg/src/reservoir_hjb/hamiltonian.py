"""Pointwise Hamiltonian, the inner discharge minimization and the LLF viscosity bound.

Gradients ``p`` are derivatives of the value with respect to volume in the
units of ``CostSpec.capacity``; the net flow (m³/s) is converted to volume
per time unit by ``Problem.time_scale``. Inside the solver the same kernels
run on the normalized volume ``v / capacity`` with ``Problem.drift_factor``.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np
from numba import njit

from .costs import P_M, P_N, P_W, P_Y3, penalty_curvature, penalty_slope, penalty_value
from .errors import NumericalError
from .problem import Problem

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 100


def uses_closed_form(par) -> bool:
    return par[P_M] == 1.0 and par[P_N] == 1.0 and par[P_Y3] <= 0.0


@njit(cache=True, inline="always")
def argmin_closed_form(P, target, threshold, w, lo, hi):
    """Minimizer of ``-qP + f(q)`` for quadratic penalties without the high-flow term."""
    q = target + P
    if q < threshold:
        q_lo = (target + P + w * threshold) / (1.0 + w)
        q = q_lo if q_lo < threshold else threshold
    return min(max(q, lo), hi)


@njit(cache=True)
def argmin_newton(P, target, threshold, par, lo, hi):
    """Safeguarded Newton on the nondecreasing derivative ``f'(q) - P``.

    Returns ``(q, iterations)``; ``iterations == -1`` flags a missed tolerance.
    """
    if penalty_slope(lo, target, threshold, par) - P >= 0.0:
        return lo, 0
    if penalty_slope(hi, target, threshold, par) - P <= 0.0:
        return hi, 0
    a = lo
    b = hi
    # start from the stationary point of the deviation term alone
    x = target + np.sign(P) * abs(P) ** (1.0 / par[P_M])
    if not (a < x < b):
        x = 0.5 * (a + b)
    for it in range(1, NEWTON_MAX_ITER + 1):
        g = penalty_slope(x, target, threshold, par) - P
        if g == 0.0:
            return x, it
        if g > 0.0:
            b = x
        else:
            a = x
        c = penalty_curvature(x, target, threshold, par)
        if c > 0.0 and c < np.inf:
            xn = x - g / c
            # test before the bracket guard: a converged step may round onto an endpoint
            if abs(xn - x) < NEWTON_TOL:
                return min(max(xn, lo), hi), it
        else:
            xn = 0.5 * (a + b)
        if not (a < xn < b):
            xn = 0.5 * (a + b)
        if abs(xn - x) < NEWTON_TOL or b - a < NEWTON_TOL:
            return xn, it
        x = xn
    return x, -1


@njit(cache=True)
def argmin_quadratic(P, target, threshold, par, lo, hi):
    return argmin_closed_form(P, target, threshold, par[P_W], lo, hi), 0


@njit(cache=True)
def penalty_quadratic(q, target, threshold, par):
    d = target - q
    short = max(threshold - q, 0.0)
    return 0.5 * d * d + 0.5 * par[P_W] * short * short


def kernel_functions(par):
    """Jitted ``(argmin, penalty)`` pair matching the packed cost parameters.

    The grid kernels take these as arguments so that numba compiles a
    specialization without the Newton path for quadratic penalties.
    """
    if uses_closed_form(par):
        return argmin_quadratic, penalty_quadratic
    return argmin_newton, penalty_value


@dataclass(frozen=True)
class InnerMinResult:
    """Minimizer and minimum of ``-q·P + f(q)`` over the control interval."""

    q_star: float
    min_value: float
    iterations: int


def inner_minimize(problem: Problem, p: float, t: float, v: float, i: int) -> InnerMinResult:
    """Minimize ``-q·P + f(t, q, i)`` over the admissible discharges at ``(t, v)``.

    ``P = time_scale · p``. Quadratic penalties without the high-flow term are
    solved in closed form, everything else by safeguarded Newton.

    Raises
    ------
    NumericalError
        If Newton misses its tolerance; ``best`` holds the last iterate.
    """
    costs = problem.costs
    lo, hi = problem.control_interval(t, v, i)
    par = costs.packed()
    P = problem.time_scale * float(p)
    tgt, thr = costs.target[i], costs.threshold[i]
    argmin, _ = kernel_functions(par)
    q, iters = argmin(P, tgt, thr, par, lo, hi)
    if iters < 0:
        raise NumericalError(f"inner minimization did not converge (P={P})", best=q)
    return InnerMinResult(q, -q * P + penalty_value(q, tgt, thr, par), iters)


def _coupling(problem: Problem, i: int, phi_i: float, phi_others) -> float:
    lam = problem.switching_rates()[i]
    total = 0.0
    if isinstance(phi_others, Mapping):
        items = phi_others.items()
    else:
        items = enumerate(np.asarray(phi_others, dtype=float))
    for j, phi_j in items:
        if j != i and lam[j] != 0.0:
            total += lam[j] * (phi_i - phi_j)
    return total


def hamiltonian_value(
    problem: Problem, t: float, v: float, i: int, phi_i: float, phi_others, p: float
) -> float:
    """Evaluate ``δφ + Σ_{j≠i} λ_ij(φ - φ_j) - min_q [(Q_i - q + ϖ)P + f + g]``.

    ``phi_others`` is either a length-``I+1`` sequence (entry ``i`` ignored) or
    a mapping from regime index to value.
    """
    inner = inner_minimize(problem, p, t, v, i)
    costs = problem.costs
    P = problem.time_scale * float(p)
    res = float(costs.residual(t, v))
    running = (problem.inflow(i) + res) * P + inner.min_value + costs.volume_penalty(t, v)
    return costs.delta * phi_i + _coupling(problem, i, phi_i, phi_others) - running


def viscosity_coefficient(
    problem: Problem, t: float, v: float, i: int, p_minus: float, p_plus: float
) -> float:
    """Bound on ``|∂H/∂p|`` over ``[min(p±), max(p±)]``.

    ``∂H/∂p = -time_scale·(Q_i - q*(p) + ϖ)`` is monotone in ``p``, so the
    endpoints suffice. Boundary vertices, where the scheme forces zero
    viscosity, are the caller's business.
    """
    drift0 = problem.inflow(i) + float(problem.costs.residual(t, v))
    d = 0.0
    for p in (min(p_minus, p_plus), max(p_minus, p_plus)):
        q = inner_minimize(problem, p, t, v, i).q_star
        d = max(d, abs(drift0 - q))
    return problem.time_scale * d
