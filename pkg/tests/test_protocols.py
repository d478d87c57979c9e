import math

import numpy as np
import pytest

from conftest import EPS_GRID, THETAS, point
from demonsim.errors import DimensionMismatchError, TruncationError
from demonsim.measurement import measure
from demonsim.protocols import (COMPOSITE, IonCompositeModel, apply_control,
                                identity_protocol, ion_composite_protocol,
                                make_protocol, sideband_transfer_prob,
                                state_flip_protocol, szilard_protocol,
                                thermal_phonons, work_of_step)
from demonsim.thermo import StateSpace, TWO_LEVEL, Distribution


@pytest.mark.parametrize("x0, y, xc, w", [
    ("up", 1, "down", 1.0),
    ("down", 1, "down", 0.0),
    ("up", 0, "up", 0.0),
])
def test_szilard_branches(x0, y, xc, w):
    p = szilard_protocol()
    assert p.transition(y, x0, xc) == 1.0
    assert work_of_step(x0, xc, p.space) == w


@pytest.mark.parametrize("x0, y, xc, w", [
    ("down", 1, "up", -1.0),
    ("up", 1, "down", 1.0),
    ("down", 0, "down", 0.0),
])
def test_flip_branches(x0, y, xc, w):
    p = state_flip_protocol()
    assert p.transition(y, x0, xc) == 1.0
    assert work_of_step(x0, xc, p.space) == w
    assert p.reconstructed


def test_channel_columns_must_be_stochastic():
    from demonsim.protocols import FeedbackProtocol
    with pytest.raises(ValueError):
        FeedbackProtocol("bad", TWO_LEVEL, (np.eye(2), np.array([[0.5, 0], [0.4, 1]])))


@pytest.mark.parametrize("n, expected", [
    (1, 1.0),
    (2, 0.63312767102070774),
    (4, 0.0),
])
def test_sideband_transfer(n, expected):
    assert sideband_transfer_prob(n) == pytest.approx(expected, abs=1e-15)


def test_sideband_rejects_n0():
    with pytest.raises(ValueError):
        sideband_transfer_prob(0)


def test_thermal_phonons():
    p = thermal_phonons(0.14, 30)
    assert math.fsum(p) == pytest.approx(1.0, abs=1e-15)
    assert math.fsum(p * np.arange(31)) == pytest.approx(0.14, abs=1e-12)
    with pytest.raises(TruncationError):
        thermal_phonons(5.0, 10)


def test_ion_channels_are_stochastic():
    prot = ion_composite_protocol()
    for c in prot.channel + prot.battery.channel:
        assert np.all(c >= 0)
        assert np.allclose(c.sum(axis=0), 1.0, atol=1e-12, rtol=0)


def test_szilard_worked_point(third):
    _, _, table = third
    cd = apply_control(szilard_protocol(), table)
    assert cd.q("down", 1) == 1.0
    assert cd.q("down", 0) == pytest.approx(12 / 13, abs=1e-15)
    assert cd.marginal.tolist() == pytest.approx([0.95, 0.05], abs=1e-15)


def test_szilard_perfect_measurement_drives_to_ground():
    _, _, table = point(math.pi / 3, 0.0)
    cd = apply_control(szilard_protocol(), table)
    assert cd.marginal[0] == pytest.approx(1.0, abs=1e-15)
    assert cd.marginal[1] == 0.0


def test_identity_protocol_leaves_posteriors(third):
    _, p_eq, table = third
    cd = apply_control(identity_protocol(), table)
    assert np.allclose(cd.conditional, table.conditional_state, atol=1e-15)
    assert np.allclose(cd.marginal, p_eq.probabilities, atol=1e-15)


def test_dimension_mismatch(third):
    _, _, table = third
    three = StateSpace(("a", "b", "c"), (0, 1, 2))
    with pytest.raises(DimensionMismatchError):
        apply_control(identity_protocol(three), table)


def test_ion_excites_ground_state_on_record_one(third):
    _, _, table = third
    cd = apply_control(ion_composite_protocol(IonCompositeModel(nbar=0.14)), table)
    prot = ion_composite_protocol(IonCompositeModel(nbar=0.14))
    assert prot.transition(1, "down", "up") > 0
    assert cd.q("up", 1) > 0


@pytest.mark.parametrize("theta", THETAS)
def test_ion_cold_battery_reduces_to_szilard(theta):
    ion = ion_composite_protocol(IonCompositeModel(nbar=0.0))
    sz = szilard_protocol()
    for eps in (0.0,) + EPS_GRID + (1.0,):
        _, _, table = point(theta, eps)
        a, b = apply_control(ion, table), apply_control(sz, table)
        assert np.allclose(a.conditional, b.conditional, atol=1e-12, rtol=0)
        assert np.allclose(a.marginal, b.marginal, atol=1e-12, rtol=0)


@pytest.mark.parametrize("theta", THETAS)
def test_ion_full_support(theta):
    ion = ion_composite_protocol()
    for eps in EPS_GRID:
        _, _, table = point(theta, eps)
        cd = apply_control(ion, table)
        assert cd.conditional.min() > 0
        assert abs(math.fsum(cd.marginal) - 1) < 1e-12


def test_composite_resolution(third):
    _, _, table = third
    ion = ion_composite_protocol()
    cd = apply_control(ion, table, COMPOSITE)
    assert cd.space.size == 62
    assert np.allclose(cd.conditional.sum(axis=0), 1.0, atol=1e-12)
    sys_cd = apply_control(ion, table)
    folded = cd.conditional.reshape(2, 31, 2).sum(axis=1)
    assert np.allclose(folded, sys_cd.conditional, atol=1e-12)
    with pytest.raises(ValueError):
        apply_control(szilard_protocol(), table, COMPOSITE)


def test_make_protocol_names():
    assert make_protocol("szilard").name == "szilard"
    assert make_protocol("flip").name == "flip"
    assert make_protocol("ion").battery is not None
    with pytest.raises(ValueError):
        make_protocol("carnot")
