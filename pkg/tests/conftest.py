import numpy as np
import pytest
from hypothesis import strategies as st

from pmctl.trigpoly import TrigPoly

coef = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False, allow_infinity=False)


@st.composite
def trigpolys(draw, max_degree=5, min_degree=0):
    m = draw(st.integers(min_value=min_degree, max_value=max_degree))
    c = draw(st.lists(coef, min_size=m + 1, max_size=m + 1))
    s = draw(st.lists(coef, min_size=m, max_size=m))
    return TrigPoly(c, s)


def random_poly(rng, degree, scale=1.0):
    return TrigPoly(scale * rng.standard_normal(degree + 1), scale * rng.standard_normal(degree))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# -- acceptance reporting ----------------------------------------------------
# Criteria record one line each; the lines are printed immediately (visible
# with -s) and repeated in the terminal summary of every run.

ACCEPTANCE = {}


def record_criterion(number, title, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title} -- {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
