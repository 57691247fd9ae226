import math

import numpy as np
import pytest

from conftest import make_problem
from reservoir_hjb.costs import make_residual
from reservoir_hjb.errors import ConfigError, InputError
from reservoir_hjb.scheme import Grid
from reservoir_hjb.sim import (
    constant_policy,
    default_dt,
    estimate_objective,
    mc_allowance,
    simulate_trajectory,
    tail_bound,
)


def discounted(c, t0, t1, delta=0.1):
    return c * (math.exp(-delta * t0) - math.exp(-delta * t1)) / delta


class TestDeterministicPath:
    """One regime, constant release: the path and its cost are known in closed form."""

    @pytest.fixture
    def traj(self, test_problem):
        pol = constant_policy(Grid(100), 1, 0.5)
        return simulate_trajectory(pol, test_problem, 0.2, 0, 10.0, dt_sim=1e-4, seed=0)

    def test_volume_rises_then_sticks(self, traj):
        t, v = traj.t, traj.v
        early = t <= 1.5
        assert np.allclose(v[early], 0.2 + 0.5 * t[early], atol=1e-12)
        assert np.all(v[t >= 1.6 + 1e-3] == 1.0)

    def test_full_reservoir_releases_inflow(self, traj):
        assert np.all(traj.q[traj.v >= 1.0] == 1.0)
        assert np.all(traj.q[traj.v < 1.0] == 0.5)

    def test_total_cost(self, traj):
        f = 0.5 * 0.25 + 0.4 * 0.5 * 0.25   # f(0.5) with target = threshold = 1
        expected = (discounted(f + 0.5, 0.0, 0.2) + discounted(f, 0.2, 1.0)
                    + discounted(f + 0.5, 1.0, 1.6) + discounted(0.5, 1.6, 10.0))
        assert traj.total_cost == pytest.approx(expected, abs=2e-4)

    def test_time_grid(self, traj):
        assert traj.t[0] == 0.0 and traj.t[-1] == pytest.approx(10.0)
        assert traj.cost_increment[0] == 0.0
        assert np.all(np.diff(traj.t) > 0)

    def test_empty_reservoir_caps_release(self, test_problem):
        pol = constant_policy(Grid(20), 1, 2.0)
        tr = simulate_trajectory(pol, test_problem, 0.0, 0, 1.0, seed=0)
        assert np.all(tr.v == 0.0)
        assert np.all(tr.q == 1.0)


class TestStochastic:
    @pytest.fixture
    def problem(self):
        rates = np.array([[0, 2.0], [1.0, 0]])
        return make_problem(inflows=[0.5, 1.5], rates=rates)

    def test_seed_reproducible(self, problem):
        pol = constant_policy(Grid(20), 2, 1.0)
        a = simulate_trajectory(pol, problem, 0.5, 0, 20.0, seed=3)
        b = simulate_trajectory(pol, problem, 0.5, 0, 20.0, seed=3)
        assert np.array_equal(a.v, b.v) and np.array_equal(a.regime, b.regime)
        assert set(np.unique(a.regime)) == {0, 1}

    def test_paths_use_independent_streams(self, problem):
        pol = constant_policy(Grid(20), 2, 1.0)
        est = estimate_objective(pol, problem, 0.5, 0, 15.0, n_paths=6, seed=9)
        costs = [simulate_trajectory(pol, problem, 0.5, 0, 15.0,
                                     seed=np.random.default_rng([9, k])).total_cost
                 for k in range(6)]
        assert est.mean == pytest.approx(np.mean(costs), rel=1e-12)
        assert est.stderr == pytest.approx(np.std(costs, ddof=1) / math.sqrt(6), rel=1e-10)

    def test_volume_stays_in_range(self, problem):
        pol = constant_policy(Grid(20), 2, [0.0, 3.0])
        tr = simulate_trajectory(pol, problem, 0.5, 0, 50.0, seed=1)
        assert tr.v.min() >= 0.0 and tr.v.max() <= 1.0


class TestValidation:
    def test_periodic_residual_rejected(self):
        r = make_residual("sine", amplitude_m3s=0.1, period=3.0)
        prob = make_problem(residual=r)
        with pytest.raises(ConfigError):
            simulate_trajectory(constant_policy(Grid(10), 1, 1.0), prob, 0.5, 0, 1.0)

    @pytest.mark.parametrize("kw", [dict(v0=1.5), dict(v0=-0.1), dict(i0=3), dict(horizon=0.0),
                                    dict(dt_sim=0.0)])
    def test_bad_inputs(self, test_problem, kw):
        args = dict(v0=0.5, i0=0, horizon=1.0, dt_sim=None)
        args.update(kw)
        with pytest.raises(InputError):
            simulate_trajectory(constant_policy(Grid(10), 1, 1.0), test_problem, **args)

    def test_regime_count_mismatch(self, test_problem):
        with pytest.raises(InputError):
            simulate_trajectory(constant_policy(Grid(10), 2, 1.0), test_problem, 0.5, 0, 1.0)

    def test_needs_two_paths(self, test_problem):
        with pytest.raises(InputError):
            estimate_objective(constant_policy(Grid(10), 1, 1.0), test_problem, 0.5, 0, 1.0, 1)


class TestBounds:
    def test_default_dt_half_cell(self, test_problem):
        assert default_dt(test_problem, Grid(100)) == pytest.approx(0.01 / 6)

    def test_allowance(self, test_problem):
        assert mc_allowance(test_problem, Grid(100), 0.01) == pytest.approx(0.02 * 2.5 / 0.1)

    def test_tail_bound(self, test_problem):
        assert tail_bound(test_problem, 0.0) == pytest.approx(25.0)
        assert tail_bound(test_problem, 100.0) == pytest.approx(25.0 * math.exp(-10))
