import math
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from demonsim.thermo import context_from_prep_angle, equilibrium_distribution
from demonsim.measurement import measure

THETAS = (math.pi / 6, math.pi / 3, math.pi / 2)
EPS_GRID = tuple(round(0.05 * k, 2) for k in range(1, 20))


def point(theta_c, eps):
    ctx = context_from_prep_angle(theta_c)
    p_eq = equilibrium_distribution(ctx)
    return ctx, p_eq, measure(p_eq, eps)


@pytest.fixture
def third():
    """theta_c = pi/3, epsilon = 0.2: the worked point with p_eq = (3/4, 1/4)."""
    return point(math.pi / 3, 0.2)


ACCEPTANCE_RESULTS = []


def record_criterion(label, ok, detail=""):
    ACCEPTANCE_RESULTS.append((label, bool(ok), detail))
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in ACCEPTANCE_RESULTS:
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{status}] {label}" + (f": {detail}" if detail else ""))
