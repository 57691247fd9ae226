"""Continuous-time inflow regime chain: classification, estimation, sampling.

Rates are stored per hour (the lag unit of the hourly discharge record). The
solver converts them to its own time unit.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, InputError

__all__ = [
    "RegimeModel",
    "RepresentativeWarning",
    "classify_inflow",
    "classify_inflows",
    "estimate_transition_probs",
    "rates_from_probs",
    "stationary_distribution",
    "sample_regime_path",
    "sample_discrete_chain",
    "synthetic_transition_matrix",
    "synthetic_regime_model",
    "synthetic_inflow_record",
    "read_inflow_csv",
    "write_inflow_csv",
]


class RepresentativeWarning(UserWarning):
    """A representative discharge lies outside its own regime bin."""


@dataclass(frozen=True, eq=False)
class RegimeModel:
    """Finite-state inflow chain.

    Parameters
    ----------
    bin_edges : array_like
        Lower bin edges ``Δ_0 = 0 < Δ_1 < ... < Δ_I`` in m³/s. A trailing
        ``+inf`` is accepted and dropped; the last bin is always unbounded.
    representatives : array_like
        One representative discharge ``Q_i`` per regime (m³/s).
    rates : array_like
        ``(I+1, I+1)`` switching-rate matrix in 1/h. The diagonal is kept as
        supplied but never enters the Hamiltonian.
    lag_hours : float
        Sampling interval of the record the rates were estimated from.
    """

    bin_edges: np.ndarray
    representatives: np.ndarray
    rates: np.ndarray
    lag_hours: float = 1.0
    stationary: np.ndarray | None = field(default=None)

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        if edges.ndim != 1 or edges.size == 0:
            raise ConfigError("bin_edges must be a non-empty 1-D sequence")
        if np.isinf(edges[-1]):
            edges = edges[:-1]
        if edges.size == 0 or edges[0] != 0.0:
            raise ConfigError("bin_edges must start at 0")
        if np.any(np.diff(edges) <= 0) or not np.all(np.isfinite(edges)):
            raise ConfigError("bin_edges must be finite and strictly increasing")
        n = edges.size
        reps = np.asarray(self.representatives, dtype=float)
        if reps.shape != (n,):
            raise ConfigError(f"expected {n} representatives, got shape {reps.shape}")
        rates = np.asarray(self.rates, dtype=float)
        if rates.shape != (n, n):
            raise ConfigError(f"rates must be {n}x{n}, got {rates.shape}")
        off = rates[~np.eye(n, dtype=bool)]
        if np.any(off < 0) or not np.all(np.isfinite(rates)):
            raise ConfigError("off-diagonal rates must be finite and non-negative")
        if not self.lag_hours > 0:
            raise ConfigError("lag_hours must be positive")
        upper = np.append(edges[1:], np.inf)
        outside = np.flatnonzero((reps < edges) | (reps >= upper))
        if outside.size:
            warnings.warn(
                f"representatives of regimes {outside.tolist()} lie outside their bins",
                RepresentativeWarning,
                stacklevel=3,
            )
        stationary = self.stationary
        if stationary is not None:
            stationary = np.asarray(stationary, dtype=float)
            if stationary.shape != (n,):
                raise ConfigError("stationary distribution has the wrong length")
            stationary.setflags(write=False)
        for arr in (edges, reps, rates):
            arr.setflags(write=False)
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "representatives", reps)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "lag_hours", float(self.lag_hours))
        object.__setattr__(self, "stationary", stationary)

    @property
    def num_regimes(self) -> int:
        return self.bin_edges.size

    @property
    def upper_edges(self) -> np.ndarray:
        return np.append(self.bin_edges[1:], np.inf)

    def off_diagonal_rates(self) -> np.ndarray:
        """Rate matrix with the diagonal zeroed, as consumed by the Hamiltonian."""
        lam = np.array(self.rates, copy=True)
        np.fill_diagonal(lam, 0.0)
        return lam

    def exit_rates(self) -> np.ndarray:
        return self.off_diagonal_rates().sum(axis=1)

    def to_dict(self) -> dict:
        out = {
            "bin_edges": self.bin_edges.tolist(),
            "representatives": self.representatives.tolist(),
            "rates": self.rates.tolist(),
            "lag_hours": self.lag_hours,
        }
        if self.stationary is not None:
            out["stationary_distribution"] = self.stationary.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RegimeModel":
        try:
            return cls(
                bin_edges=data["bin_edges"],
                representatives=data["representatives"],
                rates=data["rates"],
                lag_hours=data.get("lag_hours", 1.0),
                stationary=data.get("stationary_distribution"),
            )
        except KeyError as exc:
            raise ConfigError(f"regime model is missing key {exc.args[0]!r}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RegimeModel":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid regime model JSON: {exc}") from None
        return cls.from_dict(data)


def classify_inflow(discharge: float, model: RegimeModel) -> int:
    """Return the regime ``i`` with ``Δ_i <= discharge < Δ_{i+1}``."""
    if not discharge >= 0:
        raise InputError(f"discharge must be non-negative, got {discharge}")
    return int(np.searchsorted(model.bin_edges, discharge, side="right") - 1)


def classify_inflows(discharge, model: RegimeModel) -> np.ndarray:
    """Vectorised :func:`classify_inflow`."""
    q = np.asarray(discharge, dtype=float)
    if np.any(~(q >= 0)):
        raise InputError("discharges must be non-negative")
    return np.searchsorted(model.bin_edges, q, side="right") - 1


def estimate_transition_probs(seq: Sequence[int], num_regimes: int) -> np.ndarray:
    """Empirical one-lag transition matrix from an observed regime sequence.

    Unvisited regimes (no occurrence before the final sample) get an
    absorbing row so that the result stays row-stochastic.
    """
    s = np.asarray(seq)
    if s.ndim != 1 or s.size < 2:
        raise InputError("need a regime sequence of length >= 2")
    if not np.issubdtype(s.dtype, np.integer):
        if not np.all(s == np.round(s)):
            raise InputError("regime indices must be integers")
        s = s.astype(np.int64)
    if s.min() < 0 or s.max() >= num_regimes:
        raise InputError(f"regime indices must lie in [0, {num_regimes})")
    counts = np.zeros((num_regimes, num_regimes))
    np.add.at(counts, (s[:-1], s[1:]), 1.0)
    visits = counts.sum(axis=1)
    p = np.zeros_like(counts)
    seen = visits > 0
    p[seen] = counts[seen] / visits[seen, None]
    idx = np.flatnonzero(~seen)
    p[idx, idx] = 1.0
    return p


def _check_stochastic(p: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise InputError("transition matrix must be square")
    if np.any(p < -tol) or np.any(np.abs(p.sum(axis=1) - 1.0) > tol):
        raise InputError("transition matrix rows must be non-negative and sum to 1")
    return p


def rates_from_probs(p, h: float) -> np.ndarray:
    """Switching rates (1/h) from a lag-``h`` transition matrix.

    Off-diagonal entries are ``p_ij / h``; the diagonal follows the printed
    convention ``(1 - p_ii) / h`` and is ignored downstream.
    """
    if not h > 0:
        raise InputError(f"lag h must be positive, got {h}")
    p = _check_stochastic(p)
    lam = p / h
    np.fill_diagonal(lam, (1.0 - np.diag(p)) / h)
    return lam


def stationary_distribution(p, tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    """Stationary distribution by power iteration from the uniform vector.

    Iterates the lazy chain ``(I + p) / 2``, which has the same stationary
    vectors as ``p`` but is aperiodic, so periodic chains converge too. For a
    reducible chain the limit reached from the uniform start is returned.
    """
    p = _check_stochastic(p)
    n = p.shape[0]
    lazy = 0.5 * (p + np.eye(n))
    pi = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = pi @ lazy
        nxt /= nxt.sum()
        if np.abs(nxt - pi).sum() < tol:
            pi = nxt
            break
        pi = nxt
    return np.clip(pi, 0.0, None) / np.clip(pi, 0.0, None).sum()


def sample_regime_path(
    model: RegimeModel,
    t_end: float,
    initial: int,
    seed=None,
    rate_scale: float = 1.0,
) -> list[tuple[float, int]]:
    """Exact jump-chain sample of the regime process on ``[0, t_end]``.

    Returns ``[(0.0, initial), (t_1, i_1), ...]`` with the switch times. Time
    is measured in hours unless ``rate_scale`` rescales the rates into another
    unit (e.g. 24 for days).
    """
    if not t_end > 0:
        raise InputError("t_end must be positive")
    n = model.num_regimes
    if not 0 <= initial < n:
        raise InputError(f"initial regime {initial} out of range")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    lam = model.off_diagonal_rates() * rate_scale
    exit_rate = lam.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cdf = np.cumsum(lam, axis=1) / exit_rate[:, None]
    path = [(0.0, int(initial))]
    t, i = 0.0, int(initial)
    while True:
        if exit_rate[i] <= 0.0:
            break
        t += rng.exponential(1.0 / exit_rate[i])
        if t >= t_end:
            break
        # searchsorted on the row CDF; the clamp guards against round-off in cdf[-1]
        i = min(int(np.searchsorted(cdf[i], rng.random(), side="right")), n - 1)
        path.append((t, i))
    return path


def sample_discrete_chain(p, n_steps: int, initial: int = 0, seed=None) -> np.ndarray:
    """Sample ``n_steps`` states of a discrete-time chain with matrix ``p``."""
    p = _check_stochastic(p)
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(p, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(n_steps - 1)
    out = np.empty(n_steps, dtype=np.int64)
    out[0] = initial
    for k in range(1, n_steps):
        out[k] = np.searchsorted(cdf[out[k - 1]], u[k - 1], side="right")
    return out


def synthetic_transition_matrix(
    num_regimes: int = 41,
    seed=0,
    stay_low: float = 0.985,
    stay_high: float = 0.6,
    reach: float = 1.0,
    recession_bias: float = 10.0,
) -> np.ndarray:
    """Diagonal-dominant hourly transition matrix mimicking a river inflow chain.

    Persistence decreases from ``stay_low`` at the lowest regime to
    ``stay_high`` at the highest; the leaving mass decays geometrically with
    the jump size and is biased towards lower regimes (recessions), so the
    lowest regime carries the largest stationary mass.
    """
    rng = np.random.default_rng(seed)
    n = num_regimes
    idx = np.arange(n)
    frac = idx / max(n - 1, 1)
    stay = stay_low + (stay_high - stay_low) * np.sqrt(frac)
    stay = np.clip(stay + rng.uniform(-0.01, 0.01, n), 0.0, 0.999)
    p = np.zeros((n, n))
    for i in range(n):
        if n == 1:
            p[0, 0] = 1.0
            break
        dist = np.abs(idx - i).astype(float)
        weight = np.exp(-(dist - 1.0) / reach) * rng.uniform(0.8, 1.2, n)
        weight[idx < i] *= recession_bias
        weight[i] = 0.0
        p[i] = (1.0 - stay[i]) * weight / weight.sum()
        p[i, i] = stay[i]
    return p


def synthetic_regime_model(
    num_regimes: int = 41,
    seed=0,
    bin_width: float = 10.0,
    rep_slope: float = 5.0,
    rep_offset: float = 2.5,
    lag_hours: float = 1.0,
) -> RegimeModel:
    """Application-style model: bins ``Δ_i = bin_width·i``, ``Q_i = rep_slope·i + rep_offset``.

    The defaults reproduce the printed configuration, whose representatives
    are not bin midpoints; a :class:`RepresentativeWarning` is suppressed here.
    """
    p = synthetic_transition_matrix(num_regimes, seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RepresentativeWarning)
        return RegimeModel(
            bin_edges=bin_width * np.arange(num_regimes),
            representatives=rep_slope * np.arange(num_regimes) + rep_offset,
            rates=rates_from_probs(p, lag_hours),
            lag_hours=lag_hours,
            stationary=stationary_distribution(p),
        )


def synthetic_inflow_record(
    p,
    bin_edges,
    n_hours: int = 31_417,
    seed=0,
    initial: int = 0,
    tail_scale: float = 50.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Hourly discharge record driven by a discrete chain with matrix ``p``.

    Each hour's discharge is uniform inside the current bin (exponential above
    the last finite edge), so classifying the record returns the chain path.
    """
    rng = np.random.default_rng(seed)
    edges = np.asarray(bin_edges, dtype=float)
    if np.isinf(edges[-1]):
        edges = edges[:-1]
    states = sample_discrete_chain(p, n_hours, initial, rng)
    upper = np.append(edges[1:], np.nan)
    lo = edges[states]
    hi = upper[states]
    q = lo + rng.random(n_hours) * np.where(np.isnan(hi), 0.0, hi - lo)
    last = np.isnan(hi)
    q[last] = lo[last] + rng.exponential(tail_scale, last.sum())
    return states, q


def write_inflow_csv(path, discharge, start: datetime | None = None, lag_hours: float = 1.0):
    start = start or datetime(2016, 4, 1)
    step = timedelta(hours=lag_hours)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "discharge_m3s"])
        for k, q in enumerate(discharge):
            w.writerow([(start + k * step).isoformat(), repr(float(q))])


def read_inflow_csv(path, lag_hours: float = 1.0) -> tuple[list[datetime], np.ndarray]:
    """Read a ``timestamp,discharge_m3s`` record sampled every ``lag_hours``.

    Gaps, duplicates, and unparsable rows raise :class:`InputError` carrying
    the offending line number; nothing is interpolated.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"inflow file not found: {path}")
    step = timedelta(hours=lag_hours)
    times: list[datetime] = []
    values: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["timestamp", "discharge_m3s"]:
            raise InputError("expected header 'timestamp,discharge_m3s'", line=1)
        for row in reader:
            line = reader.line_num
            if len(row) != 2:
                raise InputError(f"expected 2 columns, got {len(row)}", line=line)
            try:
                ts = datetime.fromisoformat(row[0].strip())
                q = float(row[1])
            except ValueError as exc:
                raise InputError(str(exc), line=line) from None
            if not math.isfinite(q) or q < 0:
                raise InputError(f"invalid discharge {row[1]!r}", line=line)
            if times and ts - times[-1] != step:
                raise InputError(
                    f"timestamp {row[0]} does not follow {times[-1].isoformat()} "
                    f"by {lag_hours} h (missing or duplicated row)",
                    line=line,
                )
            times.append(ts)
            values.append(q)
    if len(values) < 2:
        raise InputError("inflow record needs at least 2 rows")
    return times, np.asarray(values)
