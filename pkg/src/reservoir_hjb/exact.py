"""Closed-form steady solution for a target equal to the threshold and a constant band.

The setting: ``m = n``, ``q̌_i = q̃_i = Q_i``, no residual flow, no high-flow
term, drift ``Q_i - q`` in consistent units. The value does not depend on
the regime or on the switching rates; only the policy does, through ``Q_i``.

Both outer branches have the form ``y/δ - [s - C·d]^{m+1}`` with ``d`` the
distance to the band and ``s = (y/δ)^{1/(m+1)}``. Below the band releases
are cut, which activates the shortfall weight, so the left constant carries
the factor ``(1+w)^{1/(m+1)}``. Above the band releases exceed the target and
the shortfall term is inactive, so the right constant is the same expression
with ``w = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .problem import Problem


@dataclass(frozen=True)
class ExactParams:
    """Parameters of the closed-form solution."""

    capacity: float = 1.0
    a: float = 0.3
    b: float = 0.7
    m: float = 1.0
    w: float = 0.4
    y: float = 0.5
    delta: float = 0.1
    inflows: tuple[float, ...] = (1.0,)
    q_min: float = 0.0
    q_max: float = 3.0
    C: float = field(init=False)
    C_right: float = field(init=False)

    def __post_init__(self):
        if not 0 < self.a < self.b < self.capacity:
            raise ConfigError("need 0 < a < b < capacity")
        if not self.delta > 0:
            raise ConfigError("delta must be positive")
        if not (self.m > 0 and self.w > 0 and self.y >= 0):
            raise ConfigError("need m > 0, w > 0, y >= 0")
        object.__setattr__(self, "inflows", tuple(float(q) for q in np.atleast_1d(self.inflows)))
        m, d = self.m, self.delta
        base = ((m + 1.0) * d / m) ** (m / (m + 1.0)) / (m + 1.0)
        object.__setattr__(self, "C", (1.0 + self.w) ** (1.0 / (m + 1.0)) * base)
        object.__setattr__(self, "C_right", base)

    @property
    def s(self) -> float:
        return (self.y / self.delta) ** (1.0 / (self.m + 1.0))

    @classmethod
    def from_problem(cls, problem: Problem) -> "ExactParams":
        """Extract parameters, refusing configurations outside the closed-form setting."""
        c = problem.costs
        q = problem.regimes.representatives
        reasons = []
        if c.m != c.n:
            reasons.append("m != n")
        if c.high_flow is not None:
            reasons.append("high-flow term present")
        if c.band_schedule:
            reasons.append("time-varying band")
        if not c.residual_is_zero:
            reasons.append("nonzero residual flow")
        if not (np.array_equal(c.target, q) and np.array_equal(c.threshold, q)):
            reasons.append("target and threshold must both equal the representatives")
        if problem.time_unit_seconds is not None:
            reasons.append("unit conversion active")
        if reasons:
            raise ConfigError("closed-form solution not applicable: " + "; ".join(reasons))
        return cls(
            capacity=c.capacity, a=c.band[0], b=c.band[1], m=c.m, w=c.w, y=c.y,
            delta=c.delta, inflows=tuple(q), q_min=c.q_min, q_max=c.q_max,
        )


@dataclass(frozen=True)
class Validity:
    """Slack of the sufficient parameter condition and of the derived admissibility.

    ``left_margin = y - lower bound`` and ``right_margin = upper bound - y``;
    the condition holds when both are ``>= 0``. The admissibility margins
    measure how far the corrected closed-form policy stays inside
    ``[q_min, q_max]`` and how far the bracketed terms stay nonnegative.
    """

    valid: bool
    left_margin: float
    right_margin: float
    lower_bound: float
    upper_bound: float
    admissible: bool
    policy_low_margin: float
    policy_high_margin: float
    bracket_left_margin: float
    bracket_right_margin: float


def check_validity(params: ExactParams) -> Validity:
    """Evaluate the sufficient condition on ``y`` and the policy admissibility."""
    p = params
    m = p.m
    lower = (1.0 + p.w) / (m**m * (m + 1.0)) * p.delta ** (m + 1.0) \
        * max(p.a, p.capacity - p.b) ** (m + 1.0)
    q = np.asarray(p.inflows)
    upper = m / ((m + 1.0) * (1.0 + p.w) ** (1.0 / m)) \
        * float(np.min(np.minimum(q, p.q_max - q))) ** (m + 1.0)
    left, right = p.y - lower, upper - p.y
    bl = p.s - p.C * p.a
    br = p.s - p.C_right * (p.capacity - p.b)
    # the brackets grow toward the band, so the policy is most extreme at a⁻ and b⁺
    lowest = float(q.min()) - ((m + 1.0) * p.C / (1.0 + p.w)) ** (1.0 / m) * p.s
    highest = float(q.max()) + ((m + 1.0) * p.C_right) ** (1.0 / m) * p.s
    lo_m, hi_m = lowest - p.q_min, p.q_max - highest
    return Validity(
        valid=left >= 0 and right >= 0,
        left_margin=left,
        right_margin=right,
        lower_bound=lower,
        upper_bound=upper,
        admissible=min(lo_m, hi_m, bl, br) >= 0,
        policy_low_margin=lo_m,
        policy_high_margin=hi_m,
        bracket_left_margin=bl,
        bracket_right_margin=br,
    )


def _brackets(v, p: ExactParams):
    v = np.asarray(v, dtype=float)
    xl = p.s - p.C * (p.a - v)
    xr = p.s - p.C_right * (v - p.b)
    return v, xl, xr


def exact_value(v, params: ExactParams):
    """Steady value at volume ``v`` (scalar or array), zero on the closed band."""
    p = params
    v, xl, xr = _brackets(v, p)
    e = p.m + 1.0
    out = np.where(v < p.a, p.y / p.delta - np.abs(xl) ** e,
                   np.where(v > p.b, p.y / p.delta - np.abs(xr) ** e, 0.0))
    return float(out) if out.ndim == 0 else out


def exact_gradient(v, params: ExactParams):
    """Derivative of :func:`exact_value` away from the band edges."""
    p = params
    v, xl, xr = _brackets(v, p)
    m = p.m
    out = np.where(v < p.a, -(m + 1.0) * p.C * np.abs(xl) ** m,
                   np.where(v > p.b, (m + 1.0) * p.C_right * np.abs(xr) ** m, 0.0))
    return float(out) if out.ndim == 0 else out


def exact_policy_unclamped(v: float, i: int, params: ExactParams) -> float:
    p = params
    _, xl, xr = _brackets(v, p)
    m = p.m
    Q = p.inflows[i]
    if v < p.a:
        return Q - ((m + 1.0) * p.C / (1.0 + p.w)) ** (1.0 / m) * float(xl)
    if v > p.b:
        return Q + ((m + 1.0) * p.C_right) ** (1.0 / m) * float(xr)
    return Q


def exact_policy(v: float, i: int, params: ExactParams) -> tuple[float, bool]:
    """Optimal discharge in regime ``i``, clamped to ``[q_min, q_max]``.

    Returns
    -------
    (q, clamped)
        ``clamped`` is ``True`` when the bound was active.
    """
    q = exact_policy_unclamped(v, i, params)
    qc = min(max(q, params.q_min), params.q_max)
    return qc, qc != q


def _inner_min(P: float, Q: float, p: ExactParams) -> float:
    """min over q of ``(Q - q)P + f(q)`` with ``q̌ = q̃ = Q``, written in ``r = Q - q``."""
    m, w = p.m, p.w
    if P < 0:
        r = (-P / (1.0 + w)) ** (1.0 / m)  # release below the target
    else:
        r = -(P ** (1.0 / m))  # release above the target
    q = min(max(Q - r, p.q_min), p.q_max)
    r = Q - q
    cost = abs(r) ** (m + 1.0) / (m + 1.0)
    if r > 0:
        cost += w * r ** (m + 1.0) / (m + 1.0)
    return r * P + cost


def steady_residual_at(v: float, params: ExactParams, i: int = 0) -> float:
    """Residual of the steady optimality equation for the closed-form value.

    Uses the analytic gradient and an analytic inner minimum, independent of
    the iterative minimizer. Regime coupling vanishes identically because
    every regime carries the same value.

    Raises
    ------
    ValueError
        At the band edges, where the value has a kink.
    """
    p = params
    if v == p.a or v == p.b:
        raise ValueError(f"v={v} is a band edge; the value is not differentiable there")
    if not 0 <= v <= p.capacity:
        raise ValueError(f"v={v} outside [0, {p.capacity}]")
    phi = exact_value(v, p)
    P = exact_gradient(v, p)
    g = 0.0 if p.a <= v <= p.b else p.y
    return p.delta * phi - (_inner_min(P, p.inflows[i], p) + g)


def exact_value_literal(v, params: ExactParams):
    """Variant using the left constant on both outer branches."""
    p = params
    v = np.asarray(v, dtype=float)
    e = p.m + 1.0
    out = np.where(v < p.a, p.y / p.delta - np.abs(p.s - p.C * (p.a - v)) ** e,
                   np.where(v > p.b, p.y / p.delta - np.abs(p.s - p.C * (v - p.b)) ** e, 0.0))
    return float(out) if out.ndim == 0 else out


def exact_policy_literal(v: float, i: int, params: ExactParams) -> float:
    """Variant with the shift ``∓((m+1)C)^{1/m}·[s - C·d]`` on both outer branches."""
    p = params
    k = ((p.m + 1.0) * p.C) ** (1.0 / p.m)
    Q = p.inflows[i]
    if v < p.a:
        return Q - k * (p.s - p.C * (p.a - v))
    if v > p.b:
        return Q + k * (p.s - p.C * (v - p.b))
    return Q
