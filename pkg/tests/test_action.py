import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from twistlab.action import (
    ConfigurationPath,
    RotationVector,
    action,
    block_tridiagonal_solve,
    melnikov_potential,
    minimize_fixed_endpoints,
    subharmonic_potential,
    subharmonic_solve,
)
from twistlab.maps import TrigPotential, shear, standard_family


def test_rotation_vector_validation():
    r = RotationVector((1, 1), 2)
    assert r.to_list() == [1, 1, 2]
    assert str(RotationVector((1,), 2)) == "(1,2)"
    assert np.allclose(r.frequency, [0.5, 0.5])
    with pytest.raises(ValueError):
        RotationVector((2,), 4)


def test_shear_action_and_gradient():
    ev = action(shear(1), ConfigurationPath(np.array([[0.0], [0.3], [1.0]]), "fixed"))
    # 0.3^2/2 + 0.7^2/2 and d/dq1 = q1 - 0 - (1 - q1)
    assert ev.value == pytest.approx(0.29)
    assert ev.gradient.ravel() == pytest.approx([-0.4])


def test_action_hessian_matches_finite_differences():
    spec = standard_family(0.4, A=np.diag([1.0, 2.0]), G=TrigPotential([[1, 0], [1, 1]], [0.3, 0.1]))
    rng = np.random.default_rng(3)
    pts = np.cumsum(rng.uniform(0, 0.5, (6, 2)), axis=0)
    ev = action(spec, ConfigurationPath(pts, "fixed"))
    H = ev.dense_hessian()
    h = 1e-5
    x = pts[1:-1].ravel()
    fd = np.zeros_like(H)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        gp = action(spec, ConfigurationPath(np.vstack([pts[0], (x + e).reshape(-1, 2), pts[-1]]), "fixed")).gradient.ravel()
        gm = action(spec, ConfigurationPath(np.vstack([pts[0], (x - e).reshape(-1, 2), pts[-1]]), "fixed")).gradient.ravel()
        fd[:, i] = (gp - gm) / (2 * h)
    assert np.allclose(H, fd, atol=1e-6)


@settings(max_examples=30, deadline=None)
@given(k=st.integers(1, 6), d=st.integers(1, 3), seed=st.integers(0, 2**16))
def test_block_tridiagonal_solve_matches_dense(k, d, seed):
    rng = np.random.default_rng(seed)
    off = rng.normal(size=(k - 1, d, d)) * 0.3
    diag = np.array([np.eye(d) * 3 + 0.1 * (a + a.T) for a in rng.normal(size=(k, d, d))])
    H = np.zeros((k * d, k * d))
    for i in range(k):
        H[i * d:(i + 1) * d, i * d:(i + 1) * d] = diag[i]
    for i in range(k - 1):
        H[i * d:(i + 1) * d, (i + 1) * d:(i + 2) * d] = off[i]
        H[(i + 1) * d:(i + 2) * d, i * d:(i + 1) * d] = off[i].T
    rhs = rng.normal(size=(k, d))
    x = block_tridiagonal_solve(diag, off, rhs)
    assert np.allclose(x.ravel(), np.linalg.solve(H, rhs.ravel()))


def test_block_tridiagonal_rejects_indefinite():
    diag = np.array([[[1.0]], [[-1.0]]])
    off = np.array([[[0.0]]])
    assert block_tridiagonal_solve(diag, off, np.ones((2, 1))) is None


def test_minimizer_matches_scipy_oracle():
    spec = standard_family(0.8)
    q0, q1, N = np.array([0.1]), np.array([1.4]), 4
    path = minimize_fixed_endpoints(spec, q0, q1, N)

    def f(x):
        return action(spec, ConfigurationPath(np.concatenate([q0, x, q1])[:, None], "fixed")).value

    best = min(
        (minimize(f, np.linspace(0.1, 1.4, N + 1)[1:-1] + s, method="BFGS", options={"gtol": 1e-12}) for s in (-0.2, 0.0, 0.2)),
        key=lambda r: r.fun,
    )
    assert path.action == pytest.approx(best.fun, abs=1e-10)
    assert path.gradient_norm <= 1e-10
    assert path.min_eigenvalue > 0


def test_straight_path_for_shear_in_2d():
    path = minimize_fixed_endpoints(shear(2), np.zeros(2), np.ones(2), 2)
    assert np.allclose(path.points[1], [0.5, 0.5])


def test_subharmonic_integrable_is_constant():
    W, defect = subharmonic_potential(shear(1), RotationVector((1,), 2), np.array([0.37]))
    assert W == pytest.approx(0.25)
    assert abs(defect[0]) <= 1e-12


def test_subharmonic_fixed_point_case():
    eps = 0.05
    fam = standard_family(eps)
    q = np.array([0.2])
    sp = subharmonic_solve(fam, RotationVector((0,), 1), q)
    assert sp.W == pytest.approx(eps * float(fam.G(q)))
    assert sp.defect[0] == pytest.approx(eps * math.sin(2 * math.pi * 0.2) / (2 * math.pi))


def test_defect_is_gradient_of_W():
    fam = standard_family(0.3)
    rot = RotationVector((1,), 3)
    h = 1e-6
    for q in (0.1, 0.37, 0.8):
        Wp, _ = subharmonic_potential(fam, rot, np.array([q + h]))
        Wm, _ = subharmonic_potential(fam, rot, np.array([q - h]))
        _, D = subharmonic_potential(fam, rot, np.array([q]))
        assert D[0] == pytest.approx((Wp - Wm) / (2 * h), abs=1e-7)


def test_melnikov_potential_shapes_and_values():
    fam = standard_family()
    rot = RotationVector((1,), 3)
    q = np.linspace(0, 1, 10, endpoint=False)
    A1 = melnikov_potential(fam, rot, q)
    assert A1.shape == (10,)
    # sum of cos over three equally spaced points cancels
    assert np.max(np.abs(A1)) <= 1e-15
    fam2 = standard_family(G=TrigPotential([[1, 1]], [1.0]), A=np.eye(2))
    grid = np.random.default_rng(0).random((4, 5, 2))
    out = melnikov_potential(fam2, RotationVector((1, 1), 2), grid)
    assert out.shape == (4, 5)
    assert np.allclose(out, 2 * np.cos(2 * np.pi * grid.sum(-1)))


def test_multiplicity_counts_symmetric_minimizers():
    # at eps = 4 the straight path over the hill of G is a saddle; q1 -> 1 - q1 gives a twin minimizer
    path = minimize_fixed_endpoints(standard_family(4.0), np.array([0.0]), np.array([1.0]), 2)
    assert path.multiplicity == 2
    assert path.points[1, 0] < 0.5  # lexicographically smallest of the tie
    twin = action(standard_family(4.0), ConfigurationPath(np.array([[0.0], [1 - path.points[1, 0]], [1.0]]), "fixed"))
    assert twin.value == pytest.approx(path.action, abs=1e-12)
