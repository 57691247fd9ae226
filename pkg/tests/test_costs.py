import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reservoir_hjb.costs import (
    CostSpec,
    HighFlowPenalty,
    make_residual,
    penalty_slope,
    penalty_value,
    register_residual,
)
from reservoir_hjb.errors import ConfigError


def reference_penalty(q, target, threshold, m, n, w, y3=0.0, q3=0.0):
    f = abs(target - q) ** (m + 1) / (m + 1)
    f += w * max(threshold - q, 0.0) ** (n + 1) / (n + 1)
    f += y3 * max(q - q3, 0.0) ** (m + 1) / (m + 1)
    return f


def spec(**kw):
    base = dict(target=[1.0], threshold=[1.0])
    base.update(kw)
    return CostSpec(**base)


exponents = st.sampled_from([1.0, 2.0, 1.5, 0.5])


class TestPenalty:
    @given(q=st.floats(0, 5), tgt=st.floats(0, 3), thr=st.floats(0, 3), m=exponents, n=exponents,
           w=st.floats(0.01, 2), y3=st.sampled_from([0.0, 0.5, 2.0]), q3=st.floats(0, 4))
    @settings(max_examples=300, deadline=None)
    def test_matches_reference(self, q, tgt, thr, m, n, w, y3, q3):
        c = spec(target=[tgt], threshold=[thr], m=m, n=n, w=w,
                 high_flow=HighFlowPenalty(y3, q3) if y3 else None)
        assert c.flow_penalty(0.0, q, 0) == pytest.approx(
            reference_penalty(q, tgt, thr, m, n, w, y3, q3), rel=1e-12, abs=1e-14)

    @given(tgt=st.floats(0, 3), thr=st.floats(0, 3), m=exponents, n=exponents,
           w=st.floats(0.01, 2), y3=st.sampled_from([0.0, 1.0]))
    @settings(max_examples=200, deadline=None)
    def test_convex_and_slope_nondecreasing(self, tgt, thr, m, n, w, y3):
        c = spec(target=[tgt], threshold=[thr], m=m, n=n, w=w,
                 high_flow=HighFlowPenalty(y3, 2.0) if y3 else None)
        par = c.packed()
        q = np.linspace(0, 5, 401)
        f = c.flow_penalty(0.0, q, 0)
        assert np.all(f[:-2] + f[2:] - 2 * f[1:-1] >= -1e-12)
        slope = np.array([penalty_slope(x, tgt, thr, par) for x in q])
        assert np.all(np.diff(slope) >= -1e-12)

    @pytest.mark.parametrize("q", [0.3, 0.99, 1.0, 1.7])
    @pytest.mark.parametrize("m, n", [(1, 1), (2, 1), (1.5, 2)])
    def test_slope_is_derivative(self, q, m, n):
        c = spec(target=[1.0], threshold=[1.2], m=m, n=n, w=0.4,
                 high_flow=HighFlowPenalty(0.5, 1.5))
        par = c.packed()
        h = 1e-6
        fd = (penalty_value(q + h, 1.0, 1.2, par) - penalty_value(q - h, 1.0, 1.2, par)) / (2 * h)
        assert penalty_slope(q, 1.0, 1.2, par) == pytest.approx(fd, abs=1e-6)

    def test_array_input(self):
        c = spec()
        q = np.array([[0.0, 1.0], [2.0, 3.0]])
        out = c.flow_penalty(0.0, q, 0)
        assert out.shape == (2, 2)
        assert out[0, 1] == 0.0


class TestVolumePenalty:
    def test_band_is_closed(self):
        c = spec(band=(0.3, 0.7), y=0.5)
        v = np.array([0.0, 0.3, 0.5, 0.7, 0.7000001, 1.0])
        assert np.array_equal(c.volume_penalty(0.0, v), [0.5, 0, 0, 0, 0.5, 0.5])

    def test_schedule_switches_band(self):
        c = spec(band=(0.3, 0.7), band_schedule=((10.0, 0.1, 0.2),))
        assert c.band_at(9.9) == (0.3, 0.7)
        assert c.band_at(10.0) == (0.1, 0.2)
        assert c.volume_penalty(11.0, 0.5) == c.y
        assert c.is_time_dependent


class TestControlInterval:
    def test_interior(self):
        assert spec().control_interval(0.0, 0.5, 1.0) == (0.0, 3.0)

    def test_empty_reservoir_caps_release(self):
        assert spec().control_interval(0.0, 0.0, 1.0) == (0.0, 1.0)

    def test_full_reservoir_forces_release(self):
        c = spec(residual=make_residual("constant", value_m3s=0.25))
        assert c.control_interval(0.0, 1.0, 1.0) == (1.25, 3.0)

    def test_only_exact_endpoints(self):
        assert spec().control_interval(0.0, 1e-12, 1.0) == (0.0, 3.0)

    def test_empty_interval_raises(self):
        with pytest.raises(ConfigError):
            spec().control_interval(0.0, 1.0, 5.0)


class TestValidation:
    @pytest.mark.parametrize("kw", [
        dict(m=0.0), dict(w=-1.0), dict(y=0.0), dict(q_min=3.0, q_max=1.0),
        dict(band=(0.7, 0.3)), dict(band=(0.0, 0.5)), dict(band=(0.5, 1.0)), dict(delta=-0.1),
        dict(capacity=0.0),
    ])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            spec(**kw)

    def test_for_regimes_broadcasts(self):
        c = spec(target=[2.0], threshold=[1.0]).for_regimes(3)
        assert np.array_equal(c.target, [2.0, 2.0, 2.0])

    def test_for_regimes_length_mismatch(self):
        with pytest.raises(ConfigError):
            spec(target=[1.0, 2.0]).for_regimes(3)

    def test_high_flow_weight_positive(self):
        with pytest.raises(ConfigError):
            HighFlowPenalty(0.0, 1.0)

    def test_max_running_cost(self):
        c = spec()
        # f(0) = 0.5 + 0.2, f(3) = 2; plus y
        assert c.max_running_cost([1.0]) == pytest.approx(2.0 + 0.5)


class TestResiduals:
    def test_unknown(self):
        with pytest.raises(ConfigError, match="registered"):
            make_residual("nope")

    def test_registry(self):
        @register_residual("_test_cubic")
        def _cubic(c=1.0):
            def r(t, v):
                return c * np.asarray(v) ** 3

            r.lipschitz = 3 * abs(c)
            return r

        fn = make_residual("_test_cubic", c=2.0)
        assert fn(0.0, 2.0) == 16.0
        assert fn.residual_name == "_test_cubic"

    @pytest.mark.parametrize("name, params", [
        ("linear", dict(intercept_m3s=0.1, slope_m3s_per_volume=-0.4)),
        ("sine", dict(amplitude_m3s=0.3, wavenumber_per_volume=7.0)),
    ])
    def test_lipschitz_constant_holds(self, name, params, rng):
        fn = make_residual(name, **params)
        u, v = rng.uniform(0, 1, (2, 5000))
        ratio = np.abs(fn(0.0, u) - fn(0.0, v)) / np.abs(u - v)
        assert ratio.max() <= fn.lipschitz * (1 + 1e-9)

    def test_periodic_sine(self):
        fn = make_residual("sine", amplitude_m3s=1.0, wavenumber_per_volume=np.pi / 2, period=4.0)
        assert fn(0.0, 1.0) == pytest.approx(1.0)
        assert fn(2.0, 1.0) == pytest.approx(-1.0)

    def test_zero_flag(self):
        assert spec().residual_is_zero
        assert not spec(residual=make_residual("constant", value_m3s=0.0)).residual_is_zero
