import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("sfpro", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("sfpro")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    from sfpro.data import synth_corpus

    root = tmp_path_factory.mktemp("corpus")
    return synth_corpus(4, 4, 0.3, 11, root / "c")


# one line per acceptance criterion, printed after the run regardless of capture
ACCEPTANCE_LINES = {}


def record_criterion(number: int, passed: bool, detail: str) -> str:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
