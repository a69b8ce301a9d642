import numpy as np
import pytest

from graph_wpt_hos.config import RunConfig
from graph_wpt_hos.graph_spectral import SensorGraph, build_random_geometric_graph, spectrum_of


def cycle_graph(n: int) -> SensorGraph:
    a = np.zeros((n, n))
    for i in range(n):
        a[i, (i + 1) % n] = a[(i + 1) % n, i] = 1.0
    return SensorGraph(a)


def path_graph(n: int) -> SensorGraph:
    a = np.zeros((n, n))
    for i in range(n - 1):
        a[i, i + 1] = a[i + 1, i] = 1.0
    return SensorGraph(a)


@pytest.fixture(scope="session")
def table_graph() -> SensorGraph:
    return build_random_geometric_graph(24, 4.0, 7)


@pytest.fixture(scope="session")
def table_spectrum(table_graph):
    return spectrum_of(table_graph)


@pytest.fixture(scope="session")
def tiny_cfg() -> RunConfig:
    """Fast settings for end-to-end plumbing tests."""
    return RunConfig(
        node_count=8,
        window_length=64,
        mean_degree=3.0,
        trials=2,
        calibration_windows=40,
        test_nominal_windows=20,
        test_anomalous_windows=10,
        stream_count=3,
        stream_length=30,
        stream_onset=10,
        stream_horizon=20,
        crossfit_folds=5,
        chunk_size=16,
        master_seed=11,
    ).validate()


ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request) -> list[str]:
    return request.config.stash.setdefault(ACCEPTANCE_LINES, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
