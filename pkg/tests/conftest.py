import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k[2:])):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def rng():
    return np.random.default_rng(20260101)


EXAMPLE_5X5 = np.array(
    [
        [2, -1, 0, 1, 0],
        [0, -8, 6, 14, 1],
        [0, 10, -4, -14, -1],
        [0, -10, 6, 16, 1],
        [0, -5, 3, 7, 0],
    ],
    dtype=float,
)
