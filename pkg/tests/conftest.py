import numpy as np
import pytest

from heatoc import (
    OcProblem, RobinBC, build_system, decompose, ones_profile, sparse_target,
)

# pass/fail lines collected by the acceptance tests, echoed after the run
ACCEPTANCE_LINES: list[str] = []

BENCH_DELTAS = ((1, 1.0 / 75.0), (2, 1.0 / 75.0))


def make_instance(m: int, T: float = 1.0, alpha: float = 1.0,
                  bc: RobinBC | None = None, deltas=BENCH_DELTAS):
    """Benchmark-style instance: Dirichlet control, constant-one start."""
    sys = build_system(bc or RobinBC.dirichlet(), m, ones_profile)
    dec = decompose(sys)
    y_hat, sol = sparse_target(sys, dec, T=T, alpha=alpha, deltas=deltas)
    prob = OcProblem(sys=sys, dec=dec, T=T, alpha=alpha, y_hat=y_hat)
    return prob, sol


@pytest.fixture(scope="session")
def instance8():
    return make_instance(8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
