import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from demonsim.measurement import ErrorModel, error_from_pulse, measure
from demonsim.thermo import (Distribution, TWO_LEVEL, ThermalContext,
                             beta_from_prep_angle, equilibrium_distribution,
                             mutual_information)

P_THIRD = Distribution(TWO_LEVEL, (0.75, 0.25))


def test_error_from_pulse_examples():
    assert error_from_pulse(ErrorModel(1.94, 0.0)) == 0.0
    assert error_from_pulse(ErrorModel(1.94, 60.0)) == pytest.approx(1.0, abs=1e-15)
    assert error_from_pulse(ErrorModel(1.94, 0.357)) == pytest.approx(0.49971632928137342,
                                                                      abs=1e-15)


def test_error_model_validation():
    with pytest.raises(ValueError):
        ErrorModel(0.0, 1.0)
    with pytest.raises(ValueError):
        ErrorModel(1.0, -0.1)


def test_error_monotone():
    eps = [error_from_pulse(ErrorModel(1.94, t)) for t in np.linspace(0, 5, 200)]
    assert all(b > a for a, b in zip(eps, eps[1:]))
    assert all(0 <= e < 1 for e in eps)


def _brute_table(p_up, eps):
    p = {0: 1 - p_up, 1: p_up}
    return {(x, y): p[x] * ((1 - eps) if x == y else eps) for x in (0, 1) for y in (0, 1)}


def test_measure_error_free():
    t = measure(P_THIRD, 0.0)
    assert t.p_record(1) == 0.25
    assert t.conditional_state[1, 1] == 1.0


def test_measure_worked_point_against_fractions():
    t = measure(P_THIRD, 0.2)
    cells = _brute_table(Fraction(1, 4), Fraction(1, 5))
    py1 = cells[0, 1] + cells[1, 1]
    assert py1 == Fraction(7, 20)
    assert t.p_record(1) == pytest.approx(float(py1), abs=1e-15)
    assert t.conditional_state[1, 1] == pytest.approx(float(cells[1, 1] / py1), abs=1e-15)
    assert float(cells[1, 1] / py1) == pytest.approx(4 / 7)


def test_measure_deterministic_flip():
    t = measure(P_THIRD, 1.0)
    assert t.p_record(1) == 0.75
    assert t.conditional_state[1, 1] == 0.0


def test_asymmetric_errors():
    t = measure(P_THIRD, 0.1, 0.3)
    assert not t.symmetric
    assert t.conditional_record[0, 1] == pytest.approx(0.1)
    assert t.conditional_record[1, 0] == pytest.approx(0.3)


def test_measure_rejects_bad_error():
    with pytest.raises(ValueError):
        measure(P_THIRD, 1.5)


@given(st.floats(1e-3, math.pi / 2), st.floats(0, 1))
def test_marginals_and_bayes(theta, eps):
    p = equilibrium_distribution(ThermalContext(beta_from_prep_angle(theta)))
    t = measure(p, eps)
    assert np.allclose(t.joint.sum(axis=1), p.probabilities, atol=1e-12, rtol=0)
    post, like, py, px = (t.conditional_state, t.conditional_record,
                          t.marginal_record, t.marginal_state)
    for x in range(2):
        for y in range(2):
            assert abs(post[x, y] * py[y] - like[x, y] * px[x]) < 1e-12
    assert abs(like[0, 1] - eps) < 1e-12 and abs(like[1, 0] - eps) < 1e-12


@pytest.mark.parametrize("theta", [math.pi / 6, math.pi / 3, math.pi / 2])
def test_uninformative_measurement_is_independent(theta):
    p = equilibrium_distribution(ThermalContext(beta_from_prep_angle(theta)))
    assert mutual_information(measure(p, 0.5)) < 1e-12
