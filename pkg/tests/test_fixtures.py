import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conederiv.fixtures import (
    DIFF,
    DIV,
    UnknownFixture,
    catalog,
    chain_pair,
    dense_ray_indicator,
    dense_rays,
    get_fixture,
    kernel_singular,
    lipschitz_homogeneous,
    polynomial_diffeo,
    shear_diffeo,
    smooth_control,
    transport,
    transport_back,
)
from conederiv.linalg import LinearMap


def test_kernel_singular_closed_form():
    fx = kernel_singular(3, alpha=0.5)
    x = np.array([0.3, -0.4, 1.2])
    assert fx.f(x)[0] == pytest.approx(1.2 / np.linalg.norm(x) ** 0.5, rel=1e-15)
    assert fx.f(np.zeros(3))[0] == 0.0
    assert fx.subspace.dim == 2
    np.testing.assert_allclose(fx.subspace.basis[2], 0.0)
    assert fx.expected == {**fx.expected, "tangential": DIV, "directional": DIFF}


def test_chain_pair_closed_forms():
    f_fx, g_fx, info = chain_pair(2, beta=3.0)
    x = np.array([0.6, -0.8])
    assert f_fx.f(x)[0] == pytest.approx(0.8**3, rel=1e-14)
    assert g_fx.f(np.array([8.0]))[0] == pytest.approx(2.0, rel=1e-14)
    assert g_fx.f(np.array([-8.0]))[0] == pytest.approx(2.0, rel=1e-14)
    assert f_fx.f(np.zeros(2))[0] == 0.0


def test_dense_rays_follow_the_golden_angle():
    rays = dense_rays(6)
    phi = (1 + math.sqrt(5)) / 2
    for n, r in enumerate(rays):
        ang = n * 2 * math.pi * (phi - 1) % (2 * math.pi)
        np.testing.assert_allclose(r, [math.cos(ang), math.sin(ang)], atol=1e-12)
    np.testing.assert_allclose(dense_rays(2, start=3), rays[3:5])


def test_dense_ray_indicator_values():
    fx = dense_ray_indicator()
    rays = dense_rays(6)
    for n, v in enumerate(rays):
        for t in (1e-6, 0.3, -2.0):
            assert fx.f(t * v)[0] == 0.0
        normal = np.array([-v[1], v[0]])
        # inside the n-th cone (half width) and well outside every cone
        assert fx.f(v + 0.5 * 2.0 ** -(n + 2) * normal)[0] == 0.0
    assert fx.f(np.zeros(2))[0] == 0.0
    outside = [fx.f(np.array([math.cos(t), math.sin(t)]))[0] for t in np.linspace(0, 2 * math.pi, 400)]
    assert 1.0 in outside


def test_lipschitz_homogeneous_values_and_bound():
    fx = lipschitz_homogeneous()
    assert fx.f(np.array([3.0, 4.0]))[0] == pytest.approx(12.0 / 5.0)
    assert fx.f(np.zeros(2))[0] == 0.0
    rng = np.random.default_rng(0)
    X, Y = rng.standard_normal((2, 500, 2))
    q = np.abs(fx.f.many(X) - fx.f.many(Y))[:, 0] / np.linalg.norm(X - Y, axis=1)
    assert q.max() <= fx.expected["lipschitz_bound"]


@pytest.mark.parametrize("expr_id", ["sin_quad", "poly", "expmix", "linear"])
def test_smooth_jacobians_against_central_differences(expr_id):
    fx = smooth_control(expr_id)
    a = fx.base_point
    J = np.atleast_2d(fx.jacobian(a))
    h = 1e-6
    fd = np.column_stack([(fx.f(a + h * e) - fx.f(a - h * e)) / (2 * h) for e in np.eye(fx.f.m)])
    np.testing.assert_allclose(J, fd, atol=1e-8)


@settings(max_examples=40, deadline=None)
@given(arrays(float, (5, 2), elements=st.floats(-0.3, 0.3)))
def test_diffeo_inverses(X):
    for psi in (shear_diffeo(), polynomial_diffeo(2, seed=0)):
        np.testing.assert_allclose(psi.inverse.many(psi.forward.many(X)), X, atol=1e-12)


@pytest.mark.parametrize("m", [2, 3])
def test_diffeo_jacobians_against_central_differences(m):
    x = np.linspace(0.05, 0.15, m)
    h = 1e-6
    for psi in (shear_diffeo(m), polynomial_diffeo(m, seed=1)):
        fd = np.column_stack([(psi.forward(x + h * e) - psi.forward(x - h * e)) / (2 * h) for e in np.eye(m)])
        np.testing.assert_allclose(psi.jacobian(x), fd, atol=1e-8)


def test_transport_moves_derivatives_consistently():
    fx = smooth_control("poly")
    psi = polynomial_diffeo(2, seed=0)
    g, b, W, T = transport(fx, psi)
    np.testing.assert_allclose(g(b), fx.f(fx.base_point), atol=1e-12)
    L = LinearMap.from_ambient(fx.subspace, fx.jacobian(fx.base_point))
    Lp = LinearMap(W, L.matrix @ T)
    np.testing.assert_allclose(transport_back(Lp, fx, psi), L.matrix, atol=1e-12)


def test_catalog_names_and_lookup():
    cat = catalog()
    assert len(cat) == 18
    assert get_fixture("dense_ray_6").name == "dense_ray_6"
    with pytest.raises(UnknownFixture):
        get_fixture("nope")
    with pytest.raises(UnknownFixture):
        smooth_control("nope")
    for name, fx in cat.items():
        assert fx.name == name
        assert fx.f.m == fx.subspace.ambient_dim == fx.base_point.shape[0]
        assert fx.description
