import numpy as np
import pytest

from fdcov.data import FunctionalSample, Subject


def random_sample(gen, n_subjects, max_obs, label="x", min_obs=2):
    subjects = []
    for i in range(n_subjects):
        N = int(gen.integers(min_obs, max_obs + 1))
        subjects.append(Subject(f"{label}{i}", gen.uniform(0, 1, N), gen.normal(size=N)))
    return FunctionalSample(label, tuple(subjects))


@pytest.fixture
def gen():
    return np.random.default_rng(20240611)


# One line per acceptance criterion, filled by test_acceptance and echoed in the terminal summary.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
