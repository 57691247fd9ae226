import warnings

import numpy as np
import pytest

from reservoir_hjb.costs import CostSpec
from reservoir_hjb.exact import ExactParams
from reservoir_hjb.problem import Problem, single_regime_model
from reservoir_hjb.regime import RepresentativeWarning

# Acceptance outcomes, filled by tests/test_acceptance.py and printed at the end of the run.
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda s: (int(s.split()[0].rstrip(".")), s)):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


def make_problem(inflows=(1.0,), rates=None, **cost_kw) -> Problem:
    """Nondimensional problem; cost keywords override the verification case."""
    inflows = np.asarray(inflows, dtype=float)
    if inflows.size == 1 and rates is None:
        model = single_regime_model(float(inflows[0]))
    else:
        n = inflows.size
        edges = np.concatenate([[0.0], 0.5 * (inflows[1:] + inflows[:-1])])
        if rates is None:
            rates = np.full((n, n), 0.1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RepresentativeWarning)
            from reservoir_hjb.regime import RegimeModel

            model = RegimeModel(edges, inflows, rates)
    kw = dict(target=inflows, threshold=inflows)
    kw.update(cost_kw)
    return Problem(model, CostSpec(**kw))


@pytest.fixture
def test_problem() -> Problem:
    return make_problem()


@pytest.fixture
def exact_params() -> ExactParams:
    return ExactParams()


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)
