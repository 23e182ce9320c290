from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twistlab.action import RotationVector
from twistlab.arithmetic import (
    ArithmeticSetQuery,
    arithmetic_set,
    is_killed,
    kill_witness,
    mode_bound,
    oracle_survives,
    rotations_from_query,
    verify_witness,
)
from twistlab.errors import DegenerateBasis


def test_is_killed():
    rot = RotationVector((1,), 2)
    assert is_killed(rot, (2,)) and is_killed(rot, (-4,))
    assert not is_killed(rot, (1,)) and not is_killed(rot, (0,))
    assert is_killed(RotationVector((1, 1), 2), (1, 1))
    assert not is_killed(RotationVector((1, 1), 2), (1, 0))


def test_mode_bound():
    assert mode_bound(1, 2) == 3
    assert mode_bound(Fraction(3, 2), 2) == 5
    assert mode_bound("1/3", "1/2") == 4


def test_query_validation():
    with pytest.raises(DegenerateBasis):
        ArithmeticSetQuery([[1, 2], [2, 4]], [[1, 2], [1, 2]])
    with pytest.raises(ValueError):
        ArithmeticSetQuery([[1]], [[2, 1]])
    q = ArithmeticSetQuery([["1/2"]], [["1", "3/2"]])
    assert q.to_dict() == {"basis": [["1/2"]], "intervals": [["1", "3/2"]]}


def test_known_sets():
    assert arithmetic_set(ArithmeticSetQuery([[1]], [[1, 2]])).modes == [(-1,), (1,)]
    r = arithmetic_set(ArithmeticSetQuery([[1, 0], [0, 1]], [[1, 2], [1, 2]]))
    assert r.modes == [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    assert r.M == [3, 3] and r.oracle_agrees


def test_narrow_interval_keeps_more_modes():
    # lambda in (1, 3/2): nu = 1 and nu = 2 survive (2 lambda never reaches an integer in (2, 3))
    r = arithmetic_set(ArithmeticSetQuery([[1]], [[1, "3/2"]]))
    assert r.modes == [(-2,), (-1,), (1,), (2,)]
    assert r.oracle_agrees


@settings(max_examples=25, deadline=None)
@given(
    a=st.fractions(min_value=Fraction(1, 4), max_value=3, max_denominator=6),
    w=st.fractions(min_value=Fraction(1, 6), max_value=2, max_denominator=6),
    q=st.integers(1, 3),
)
def test_exact_set_agrees_with_brute_force(a, w, q):
    query = ArithmeticSetQuery([[q]], [[a, a + w]])
    r = arithmetic_set(query)
    assert r.oracle_agrees
    for nu in range(-40, 41):
        if nu:
            assert ((nu,) in r.modes) == oracle_survives(query, (nu,), 64)


def test_witnesses_verify():
    query = ArithmeticSetQuery([[1, 1], [0, 1]], [["1/2", "3/4"], [1, 2]])
    for nu in [(3, 0), (2, 5), (-4, 1)]:
        w = kill_witness(query, nu)
        if w is not None:
            assert verify_witness(query, nu, w)


def test_rotations_from_query():
    rots = rotations_from_query(ArithmeticSetQuery([[1]], [[1, 2]]), max_denominator=3)
    assert {str(r) for r in rots} == {"(3,2)", "(4,3)", "(5,3)"}


def test_modes_outside_polytope_have_exact_witnesses():
    from twistlab.arithmetic import in_polytope, polytope_box

    query = ArithmeticSetQuery([[1, 0], ["1/2", 1]], [[1, 2], ["2/3", "3/2"]])
    _, bounds, _ = polytope_box(query)
    outside = 0
    for a in range(-8, 9):
        for b in range(-8, 9):
            nu = (a, b)
            if any(nu) and not in_polytope(query, bounds, nu):
                outside += 1
                w = kill_witness(query, nu)
                assert w is not None and verify_witness(query, nu, w)
    assert outside > 100
