import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from talweg.field import builtin

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def fig1():
    return builtin("fig1")


@pytest.fixture(scope="session")
def quad():
    return builtin("quadratic", {"lambdas": [1.0, 3.0]})


@pytest.fixture(scope="session")
def sharp():
    return builtin("sharpness", {"l1": 1.0, "l2": 3.0, "a": 1.0})


@pytest.fixture
def origin():
    return np.zeros(2)


_ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion: ``criterion(n, title, ok, detail)``."""

    def record(n, title, ok, detail=""):
        line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}  [{detail}]"
        _ACCEPTANCE[n] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
