import numpy as np
import pytest
from hypothesis import settings

from multipole_resolvent import Cutoff, Pole, PotentialSpec, inverse_square

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def single_pole(a=1.0, l=0.5, taper=0.25, d=2):
    pos = (0.0,) * d
    return PotentialSpec(d, (Pole(pos, inverse_square(a), l, taper=taper),), hardy_constant=a)


def two_poles(a=1.0, l=0.5, sep=1.5):
    poles = tuple(Pole((s, 0.0), inverse_square(a), l, taper=l / 2) for s in (-sep, sep))
    return PotentialSpec(2, poles, hardy_constant=a)


@pytest.fixture
def unipolar():
    return single_pole()


@pytest.fixture
def free2():
    return PotentialSpec(2)


@pytest.fixture
def disk_cutoffs():
    return Cutoff.around([(0.0, 0.0)], 0.9, 1.2), Cutoff.around([(0.0, 0.0)], 1.2, 1.8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance lines collected by test_acceptance and echoed at the end of the run
ACCEPTANCE = {}


def report(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
