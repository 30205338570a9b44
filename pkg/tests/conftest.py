import numpy as np
import pytest

from entropic_sdot.measures import DiscreteTarget, builtin_density, random_target

NAMES = ("lebesgue", "gaussian", "laplace", "holder")


def symmetric_pair() -> DiscreteTarget:
    return DiscreteTarget(np.array([-1.0, 1.0]), np.array([0.5, 0.5]))


def five_point():
    rho = builtin_density("laplace", shrink=1.0)
    return rho, random_target(5, rho, 42)


@pytest.fixture
def pair():
    return symmetric_pair()


@pytest.fixture
def lebesgue():
    return builtin_density("lebesgue")


@pytest.fixture
def instance5():
    return five_point()


@pytest.fixture(params=NAMES)
def density(request):
    return builtin_density(request.param)


_VERDICTS = []


@pytest.fixture
def verdict():
    """Record and print one acceptance line; returns the pass flag."""

    def record(number, title, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}  {title}: {detail}"
        _VERDICTS.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
