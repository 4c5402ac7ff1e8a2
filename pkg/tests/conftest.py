import numpy as np
import pytest

from ptlsi.data import MultiTaskData, TaskData


def make_tasks(rng, p=8, n_target=10, n_source=12, K=2, signal=1.0, shift=0.3):
    """Small random multi-task instance with a few strong target coefficients."""
    beta = np.zeros(p)
    beta[: min(3, p)] = signal

    def task(n, b):
        X = rng.standard_normal((n, p))
        return TaskData(X, X @ b + rng.standard_normal(n), np.eye(n))

    sources = [task(n_source, beta + shift * rng.standard_normal(p)) for _ in range(K)]
    return MultiTaskData(task(n_target, beta), sources)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


#: One line per acceptance criterion, echoed in the terminal summary.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
