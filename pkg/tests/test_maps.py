import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twistlab.errors import SingularTwistBlock
from twistlab.maps import (
    IntegrableSpec,
    MapSpec,
    TrigPotential,
    central_gradient,
    eval_inverse,
    eval_map,
    integrable_map,
    orbit,
    quadratic_map,
    shear,
    standard_family,
    symplecticity_residual,
    tangent_blocks,
    tangent_map,
    validate_spec,
)

floats = st.floats(-3, 3, allow_nan=False)


def test_standard_map_point():
    # closed form Q = q + p + eps G'(q), P = p + eps G'(q) with G' = sin(2 pi q) / (2 pi)
    spec = standard_family(0.1)
    Q, P = eval_map(spec, (0.25, 0.0))
    kick = 0.1 / (2 * math.pi)
    assert Q[0] == pytest.approx(0.25 + kick, abs=1e-14)
    assert P[0] == pytest.approx(kick, abs=1e-14)


def test_implicit_matches_closed_form():
    spec = standard_family(0.3, A=np.diag([1.0, 2.0]), G=TrigPotential([[1, 1], [0, 2]], [0.2, -0.1], [0.3, 0.0]))
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = (rng.random(2), rng.normal(size=2))
        a = eval_map(spec, x)
        b = eval_map(spec, x, method="implicit")
        assert np.allclose(a.q, b.q, atol=1e-12) and np.allclose(a.p, b.p, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(q=floats, p=floats, eps=st.floats(-1, 1))
def test_inverse_round_trip(q, p, eps):
    spec = standard_family(eps)
    back = eval_inverse(spec, eval_map(spec, (q, p)))
    assert back.q[0] == pytest.approx(q, abs=1e-10)
    assert back.p[0] == pytest.approx(p, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(q=floats, p=floats, eps=st.floats(-2, 2))
def test_tangent_map_symplectic_and_matches_fd(q, p, eps):
    spec = standard_family(eps)
    M = tangent_map(spec, (q, p))
    assert symplecticity_residual(M) <= 1e-10

    def F(x):
        Q, P = eval_map(spec, (x[:1], x[1:]))
        return np.concatenate([Q, P])

    fd = np.array([central_gradient(lambda x, i=i: F(x)[i], np.array([q, p])) for i in range(2)])
    assert np.allclose(M, fd, atol=1e-6)


def test_tangent_map_value():
    spec = standard_family(0.1)
    M = tangent_map(spec, (0.5, 0.0))
    assert np.allclose(M, [[0.9, 1.0], [-0.1, 1.0]], atol=1e-12)


def test_orbit_of_shear_is_translation():
    pts = orbit(shear(1), (0.0, 0.5), 4)
    assert np.allclose([x.q[0] for x in pts], [0, 0.5, 1.0, 1.5, 2.0])
    assert all(x.p[0] == 0.5 for x in pts)


def test_validate_quadratic_constants():
    rep = validate_spec(quadratic_map(np.diag([1.0, 2.0])), n_samples=500, rng=0)
    assert rep.passed
    assert rep.alpha == pytest.approx(0.5)
    assert rep.beta == pytest.approx(1.0)
    assert rep.rate_bound == pytest.approx(2.0)


def test_validate_reports_perturbed_rate():
    rep = validate_spec(standard_family(0.1), n_samples=500, rng=0)
    assert rep.rate_bound == pytest.approx(2.0)
    assert 2.0 < rep.perturbed_rate <= 2.1 + 1e-12


def test_validate_flags_bad_derivative():
    good = shear(1)
    bad = MapSpec(
        dim=1, S=good.S, dS_q=good.dS_q, dS_Q=lambda q, Q: 2 * good.dS_Q(q, Q),
        d2S_qq=good.d2S_qq, d2S_qQ=good.d2S_qQ, d2S_QQ=good.d2S_QQ,
        alpha=None, beta=None, rate_bound=None, integrable=None, name="bad",
    )
    rep = validate_spec(bad, n_samples=50, fd_samples=10, rng=0)
    assert not rep.passed
    assert rep.derivative_residual > 1e-3


def test_singular_twist_block():
    spec = shear(1)
    bad = MapSpec(
        dim=1, S=spec.S, dS_q=spec.dS_q, dS_Q=spec.dS_Q, d2S_qq=spec.d2S_qq,
        d2S_qQ=lambda q, Q: np.zeros((1, 1)), d2S_QQ=spec.d2S_QQ,
        alpha=None, beta=None, rate_bound=None, integrable=None, name="flat",
    )
    with pytest.raises(SingularTwistBlock):
        tangent_blocks(bad, np.zeros(1), np.ones(1))


def test_legendre_duality_quadratic_and_convex():
    quad = IntegrableSpec.quadratic(np.diag([1.0, 2.0]))
    s = np.array([0.3, -0.7])
    assert quad.h0(s) == pytest.approx(0.5 * (0.09 + 0.49 / 2))
    pts = np.random.default_rng(1).normal(size=(20, 1))
    conv = IntegrableSpec.from_convex(
        lambda p: np.cosh(p[0]), lambda p: np.array([np.sinh(p[0])]), lambda p: np.array([[np.cosh(p[0])]])
    )
    assert conv.duality_residual(pts) <= 1e-8
    spec = integrable_map(conv)
    # integrable maps preserve momentum and advance q by the frequency
    Q, P = eval_map(spec, (0.1, 0.4))
    assert P[0] == pytest.approx(0.4, abs=1e-10)
    assert Q[0] == pytest.approx(0.1 + math.sinh(0.4), abs=1e-9)


def test_trig_potential_modes_round_trip():
    G = TrigPotential([[1], [3]], [0.5, -0.2], [0.1, 0.0])
    H = TrigPotential.from_modes(G.modes)
    q = np.linspace(0, 1, 17)[:, None]
    assert np.allclose(G(q), H(q))
    assert not G.is_constant()
    assert TrigPotential([[0]], [1.0]).is_constant()
