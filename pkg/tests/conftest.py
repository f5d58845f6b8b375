import numpy as np
import pytest

from slowfast import make_builtin

_CRITERIA = {}


def record_criterion(number, passed, detail):
    """Store one acceptance verdict; printed in the terminal summary."""
    _CRITERIA[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA, key=lambda k: (int(str(k).rstrip("ab")), str(k))):
        ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")


@pytest.fixture(scope="session")
def iid():
    return make_builtin("iid-bessel", kappa=0.1)


@pytest.fixture(scope="session")
def markov_sym():
    return make_builtin("markov-sym")


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
