import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gravinst import zoo as Z

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def kerr():
    fam = Z.family("kerr", m=1.0, a=0.3)
    return fam, Z.instantiate(fam)


@pytest.fixture(scope="session")
def schwarzschild():
    fam = Z.family("schwarzschild", m=1.0)
    return fam, Z.instantiate(fam)


@pytest.fixture(scope="session")
def taub_bolt():
    fam = Z.family("taub_bolt", n=1.0)
    return fam, Z.instantiate(fam)


@pytest.fixture(scope="session")
def flat():
    fam = Z.family("flat")
    return fam, Z.instantiate(fam)


def random_tracefree(rng, n):
    a = rng.normal(size=(n, 3, 3))
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    return a - np.trace(a, axis1=-2, axis2=-1)[:, None, None] * np.eye(3) / 3.0


# acceptance lines ----------------------------------------------------------------------
# test_acceptance.py records one line per criterion here; they are echoed as the
# checks run and repeated together at the end of the session.
ACCEPTANCE = {}


def record(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print("\n" + line, flush=True)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
