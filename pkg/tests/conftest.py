import numpy as np
import pytest

from esqm.cs import gen_cauchy_instance, gen_gaussian_instance, make_cs_problem


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def quad_instance():
    return gen_gaussian_instance(72, 256, 16, seed=3)


@pytest.fixture(scope="session")
def quad_problem(quad_instance):
    return make_cs_problem(quad_instance)


@pytest.fixture(scope="session")
def lorentz_instance():
    return gen_cauchy_instance(72, 256, 8, seed=3)


@pytest.fixture(scope="session")
def lorentz_problem(lorentz_instance):
    return make_cs_problem(lorentz_instance)


_CRITERIA = []


@pytest.fixture
def report():
    """Record one acceptance line; the assertion is left to the caller."""
    def _report(number, title, ok, detail=""):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        print(line)
        _CRITERIA.append(line)
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
