
import numpy as np
import pytest

from twistlab.action import RotationVector
from twistlab.maps import quadratic_map, shear, standard_family
from twistlab.torus import (
    BreakupReport,
    TorusGrid,
    assemble_torus,
    charpoly,
    continue_radial_graph,
    grid_points,
    kernel_dimension,
    monodromy_report,
    radial_momentum,
    solve_periodic_orbit,
    tangent_space_angle,
    unipotent_charpoly,
    verify_torus,
)


def test_charpoly_matches_numpy():
    M = np.random.default_rng(0).normal(size=(4, 4))
    assert np.allclose(charpoly(M), np.poly(M))
    assert unipotent_charpoly(4).tolist() == [1, -4, 6, -4, 1]


def _graph(rot, N, f):
    pts = grid_points(N, rot.dim)
    return TorusGrid(rot, N, f(pts))


def test_lagrangian_residual_distinguishes_gradients():
    rot = RotationVector((1, 1), 2)
    # gradient of u = sin(2 pi q1) cos(2 pi q2) / (2 pi) is Lagrangian
    grad = _graph(rot, 16, lambda x: 0.3 + np.stack([
        np.cos(2 * np.pi * x[..., 0]) * np.cos(2 * np.pi * x[..., 1]),
        -np.sin(2 * np.pi * x[..., 0]) * np.sin(2 * np.pi * x[..., 1]),
    ], axis=-1))
    assert grad.lagrangian_residual <= 1e-14
    # (sin 2 pi q2, 0) has a non-vanishing loop integral of its curl
    curl = _graph(rot, 16, lambda x: np.stack([np.sin(2 * np.pi * x[..., 1]), 0 * x[..., 0]], axis=-1))
    assert curl.lagrangian_residual == pytest.approx(0.5, abs=1e-12)


def test_u_modes_reconstruct_gamma():
    rot = RotationVector((1,), 2)
    t = _graph(rot, 32, lambda x: 0.5 + np.cos(2 * np.pi * 3 * x))
    u = t.u_modes
    # u = sin(6 pi q) / (6 pi): coefficients -i/(12 pi) at nu = 3
    assert u[3] == pytest.approx(-1j / (12 * np.pi))
    assert u[-3] == pytest.approx(1j / (12 * np.pi))
    assert t.c == pytest.approx([0.5])


def test_derivative_and_interpolation_are_spectral():
    rot = RotationVector((1,), 1)
    t = _graph(rot, 16, lambda x: np.sin(2 * np.pi * 2 * x))
    x = np.array([[0.123], [0.77]])
    assert np.allclose(t.interpolate(x), np.sin(4 * np.pi * x), atol=1e-13)
    assert np.allclose(t.derivative()[..., 0, 0], 4 * np.pi * np.cos(4 * np.pi * t.points[..., 0]), atol=1e-11)


def test_torus_json_round_trip():
    spec = quadratic_map(np.diag([1.0, 2.0]))
    t = assemble_torus(spec, RotationVector((1, 1), 2), N=6)
    verify_torus(spec, t)
    back = TorusGrid.from_json(t.to_json())
    assert back.N == 6 and back.rot == t.rot
    assert np.array_equal(back.gamma, t.gamma)
    assert back.verification == t.verification
    assert back.to_json() == t.to_json()


def test_integrable_torus_verification_and_monodromy():
    spec = quadratic_map(np.diag([1.0, 2.0]))
    rot = RotationVector((1, 1), 2)
    t = assemble_torus(spec, rot, N=8)
    assert np.allclose(t.gamma, [0.5, 0.25])
    v = verify_torus(spec, t)
    assert v.passed
    assert v.action_value == pytest.approx(0.375)
    m = monodromy_report(spec, (t.points[0, 0], t.gamma[0, 0]), rot)
    assert np.allclose(m.DFn, np.block([[np.eye(2), 2 * spec.A], [np.zeros((2, 2)), np.eye(2)]]))
    assert m.local_twist_det == pytest.approx(8.0)
    assert m.lagrangian_criteria()
    assert tangent_space_angle(spec, t, (3, 5)) <= 1e-12
    assert kernel_dimension(spec, t, (3, 5)) == 2


def test_verify_rejects_a_shifted_graph():
    spec = shear(1)
    rot = RotationVector((1,), 2)
    t = assemble_torus(spec, rot, N=16)
    bad = TorusGrid(rot, 16, t.gamma + 1e-3 * np.cos(2 * np.pi * t.points))
    v = verify_torus(spec, bad)
    assert not v.checks["periodicity"]
    assert not v.passed


def test_breakup_at_fixed_points():
    eps = 0.05
    res = assemble_torus(standard_family(eps), RotationVector((0,), 1), 64)
    assert isinstance(res, BreakupReport)
    # W = eps G has oscillation 2 eps / (2 pi)^2
    assert res.oscillation == pytest.approx(2 * eps / (2 * np.pi) ** 2, rel=1e-12)
    assert res.defect_sup == pytest.approx(eps / (2 * np.pi), rel=1e-6)


def test_periodic_orbits_of_standard_family():
    spec = standard_family(0.1)
    fixed = solve_periodic_orbit(spec, RotationVector((0,), 1), [0.1], rng=0)
    assert abs(fixed.q[0, 0]) <= 1e-10 and fixed.minimizing
    assert fixed.min_eigenvalue == pytest.approx(0.1)
    assert fixed.uniqueness_spread <= 1e-10
    hyper = solve_periodic_orbit(spec, RotationVector((0,), 1), [0.4], rng=0)
    assert hyper.q[0, 0] == pytest.approx(0.5) and not hyper.minimizing
    m = monodromy_report(spec, hyper)
    # trace 2 + eps at q = 1/2: not unipotent, so the orbit is not on a Lagrangian graph
    assert m.charpoly_defect == pytest.approx(0.1)
    assert not m.lagrangian_criteria()


def test_orbit_from_inflection_seed():
    orb = solve_periodic_orbit(standard_family(0.1), RotationVector((0,), 1), [0.25], rng=0)
    assert abs(orb.q[0, 0]) <= 1e-10 and orb.minimizing


def test_shear_orbit_monodromy():
    orb = solve_periodic_orbit(shear(1), RotationVector((1,), 2), [0.0], rng=0)
    assert np.allclose(orb.q.ravel(), [0.0, 0.5]) and np.allclose(orb.p.ravel(), 0.5)
    assert np.allclose(monodromy_report(shear(1), orb).DFn, [[1, 2], [0, 1]])


def test_radial_momentum_solves_configuration_return():
    spec = standard_family(0.2)
    rot = RotationVector((1,), 3)
    p, pts, _ = radial_momentum(spec, rot, [0.3], [0.0])
    assert pts[-1].q[0] == pytest.approx(1.3, abs=1e-12)


def test_continuation_tracks_defect_growth():
    fam = standard_family()
    rot = RotationVector((1,), 2)
    t0 = assemble_torus(fam, rot, N=16)
    graphs = continue_radial_graph(fam, rot, t0, 0.01, steps=4)
    assert [g.epsilon for g in graphs] == pytest.approx([0, 0.0025, 0.005, 0.0075, 0.01])
    assert graphs[0].defect_sup <= 1e-12
    assert all(g.radial_residual <= 1e-10 for g in graphs)
    # at rot (1,2) the first-order term vanishes, so the defect grows like eps^2
    ratio = graphs[-1].defect_sup / graphs[2].defect_sup
    assert ratio == pytest.approx(4.0, rel=0.05)


def test_continuation_matches_closed_form_at_fixed_points():
    # radial points of rot (0,1) satisfy Q = q, so gamma = -eps G'(q) and the defect is eps G'(q)
    fam = standard_family()
    rot = RotationVector((0,), 1)
    t0 = assemble_torus(fam, rot, N=32)
    graphs = continue_radial_graph(fam, rot, t0, 0.1, steps=10)
    q = t0.points[..., 0]
    Gp = np.sin(2 * np.pi * q) / (2 * np.pi)
    for g in graphs:
        assert np.allclose(g.gamma[..., 0], -g.epsilon * Gp, atol=1e-10)
        assert np.allclose(g.defect[..., 0], g.epsilon * Gp, atol=1e-10)
    assert graphs[-1].defect_sup == pytest.approx(0.1 / (2 * np.pi), rel=1e-12)
