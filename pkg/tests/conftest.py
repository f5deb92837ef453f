import numpy as np
import pytest

from harmid.atlas import model
from harmid.deform import DeformedMetric
from harmid.geometry import ScalarField


@pytest.fixture
def euclid2():
    return model("euclidean", 2)


@pytest.fixture
def hyp2():
    return model("hyperbolic", 2)


@pytest.fixture
def sphere2():
    return model("sphere_stereo", 2)


@pytest.fixture
def quadratic(euclid2):
    """f = 0.1 (x1^2 + x2^2) on R^2; the running hand-computed example."""
    f = ScalarField(euclid2.chart, "0.1*(x1^2 + x2^2)")
    return DeformedMetric(euclid2.metric, f)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(RESULTS):
        ok, detail = RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
