import numpy as np
import pytest

from graphex_cdegree.graphex import GraphexSpec

# lines added by the acceptance module, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=["sum_power_shifted", "sum_power_stable", "separable_shifted"])
def builtin_spec(request):
    alpha = {"sum_power_shifted": 3.0, "sum_power_stable": 2.0, "separable_shifted": 2.0}[request.param]
    return GraphexSpec.from_config({"family": request.param, "alpha": alpha})
