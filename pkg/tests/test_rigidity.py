import numpy as np
import pytest

from twistlab.action import RotationVector
from twistlab.errors import ConstantPotential
from twistlab.maps import PerturbedFamily, TrigPotential, quadratic_map, shear, standard_family
from twistlab.rigidity import (
    breakdown_bound,
    epsilon_sweep,
    green_form_at_witness,
    melnikov_modes,
    rigidity_scan,
    sampled_modes,
)


def test_sampled_modes():
    x = np.arange(8) / 8
    modes = sampled_modes(3 + np.cos(2 * np.pi * x))
    assert modes[(0,)] == pytest.approx(3)
    assert modes[(1,)] == pytest.approx(0.5) and modes[(-1,)] == pytest.approx(0.5)
    assert set(modes) == {(0,), (1,), (-1,)}


def test_melnikov_modes_two_dimensional():
    fam = PerturbedFamily(shear(2), TrigPotential([[1, 1]], [1.0]), 0.0)
    modes = melnikov_modes(fam, RotationVector((1, 1), 2))
    assert modes[(1, 1)] == pytest.approx(1.0, abs=1e-14)
    assert abs(modes.get((1, 0), 0)) <= 1e-14


def test_rigidity_scan_verdicts():
    cos = TrigPotential([[1]], [1.0])
    assert rigidity_scan(cos, rots=[RotationVector((1,), 1)]).verdict == "constant"
    assert rigidity_scan(cos, rots=[RotationVector((1,), 2)]).verdict == "undetermined"
    G = TrigPotential([[k] for k in range(1, 11)], [1.0] * 10)
    rep = rigidity_scan(G, queries=[([[1]], [[1, 2]])], max_denominator=8)
    assert rep.surviving == [(-1,), (1,)]
    assert rep.verdict == "trig-polynomial"
    assert rep.to_dict()["arithmetic_set"] == [[-1], [1]]


def test_breakdown_bound_standard_family():
    fam = standard_family()
    b = breakdown_bound(fam)
    assert b.Lambda == pytest.approx(2.0, abs=1e-9)
    assert abs(np.cos(2 * np.pi * b.q_convex[0]) - 1) <= 1e-9
    assert abs(np.cos(2 * np.pi * b.q_concave[0]) + 1) <= 1e-9
    assert green_form_at_witness(fam, b, 2.5, rng=0) == pytest.approx(-0.5)
    assert green_form_at_witness(fam, b, -2.5, rng=0) == pytest.approx(-0.5)
    assert green_form_at_witness(fam, b, 1.5, rng=0) > 0


def test_breakdown_bound_scales_with_potential():
    fam = standard_family(G=TrigPotential([[1]], [-3 / (2 * np.pi) ** 2]))
    assert breakdown_bound(fam).Lambda == pytest.approx(2 / 3, abs=1e-9)
    fam2 = standard_family(A=np.diag([1.0, 2.0]), G=TrigPotential([[0, 1]], [-1 / (2 * np.pi) ** 2]))
    b2 = breakdown_bound(fam2)
    assert b2.Lambda == pytest.approx(2.0, abs=1e-6)
    assert abs(b2.v_concave[1]) == pytest.approx(1.0)


def test_breakdown_needs_nonconstant_potential():
    with pytest.raises(ConstantPotential):
        breakdown_bound(PerturbedFamily(quadratic_map([[1.0]]), TrigPotential([[0]], [1.0]), 0.0))


def test_epsilon_sweep_threads_match_serial():
    fam = standard_family()
    eps = [0.0, 1e-3, 1e-2]
    a = epsilon_sweep(fam, RotationVector((0,), 1), eps, N=32)
    b = epsilon_sweep(fam, RotationVector((0,), 1), eps, N=32, workers=3)
    assert a.to_dict() == b.to_dict()
    assert a.persistence_set == [0.0]
    assert a.melnikov_law_ok
