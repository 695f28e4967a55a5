import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geomkit import liegroup as lg
from geomkit.numkernel import gaussian_increments

vec3 = st.tuples(*(st.floats(-2, 2),) * 3).map(np.array)


def levi_civita():
    eps = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[i, j, k], eps[i, k, j] = 1.0, -1.0
    return eps


def test_hat_examples():
    assert np.array_equal(lg.hat([1.0, 0.0, 0.0]), [[0, 0, 0], [0, 0, -1], [0, 1, 0]])
    assert np.array_equal(lg.hat(np.zeros(3)), np.zeros((3, 3)))


@given(vec3, vec3)
def test_hat_is_cross_product_and_vee_inverts(v, w):
    assert np.allclose(lg.hat(v) @ w, np.cross(v, w), atol=1e-12)
    assert np.array_equal(lg.vee(lg.hat(v)), v)


def test_vee_rejects_symmetric():
    with pytest.raises(ValueError):
        lg.vee(np.eye(3))


def test_brackets():
    E = lg.basis()
    assert np.allclose(lg.bracket(E[0], E[1]), E[2])
    rng = np.random.default_rng(0)
    for _ in range(10):
        a, b, c = lg.hat(rng.normal(size=(3, 3)))
        assert np.allclose(lg.bracket(a, a), 0.0)
        jac = lg.bracket(a, lg.bracket(b, c)) + lg.bracket(b, lg.bracket(c, a)) + lg.bracket(c, lg.bracket(a, b))
        assert np.abs(jac).max() < 1e-12


def test_structure_constants_are_levi_civita():
    C = lg.structure_constants()
    assert C[2, 0, 1] == 1.0 and C[2, 1, 0] == -1.0
    assert np.allclose(C, levi_civita(), atol=1e-14)


def test_translations():
    rng = np.random.default_rng(1)
    a, b, g = (lg.rotation(rng.normal(size=3), rng.uniform(0, 3)) for _ in range(3))
    assert np.array_equal(lg.translate_left(np.eye(3), g), g)
    assert np.abs(lg.translate_left(a, lg.translate_left(b, g)) - lg.translate_left(a @ b, g)).max() < 1e-14
    v = np.array([0.3, -0.2, 0.5])
    assert np.allclose(g.T @ lg.dL(g, lg.hat(v)), lg.hat(v), atol=1e-14)


def test_invariant_metric():
    v, w = np.array([1.0, 2.0, -1.0]), np.array([0.5, 0.0, 3.0])
    assert lg.invariant_metric(np.eye(3), lg.hat(v), lg.hat(w), np.eye(3)) == pytest.approx(v @ w)
    A = np.diag([1.0, 2.0, 3.0])
    assert lg.invariant_metric(np.eye(3), lg.hat([1, 0, 0]), lg.hat([1, 0, 0]), A) == pytest.approx(1.0)
    rng = np.random.default_rng(2)
    g, a = lg.rotation(rng.normal(size=3), 0.7), lg.rotation(rng.normal(size=3), 1.9)
    tv, tw = g @ lg.hat(v), g @ lg.hat(w)
    assert lg.invariant_metric(a @ g, a @ tv, a @ tw, A) == pytest.approx(lg.invariant_metric(g, tv, tw, A), abs=1e-12)


@given(vec3, vec3, vec3)
def test_coadjoint_duality(xi, mu, eta):
    lhs = lg.coad(xi, mu) @ eta
    rhs = mu @ lg.vee(lg.ad(lg.hat(xi), lg.hat(eta)))
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs))
    assert np.allclose(lg.coad(xi, mu), np.cross(mu, xi), atol=1e-12)


def test_adjoint_at_identity():
    X = lg.hat([0.2, -0.4, 1.0])
    assert np.allclose(lg.Ad(np.eye(3), X), X)
    R = lg.rotation([0, 0, 1], 0.5)
    assert np.allclose(lg.vee(lg.Ad(R, X)), R @ lg.vee(X), atol=1e-14)


def test_euler_poincare_identity_inertia_constant():
    traj = lg.euler_poincare(np.array([0.3, -1.0, 0.2]), np.eye(3), 50, 5.0)
    assert np.allclose(traj.values, [0.3, -1.0, 0.2], atol=1e-14)


@given(vec3)
def test_euler_poincare_conservation(mu0):
    if np.linalg.norm(mu0) < 1e-2:
        return
    traj = lg.euler_poincare(mu0, np.diag([1.0, 2.0, 3.0]), 1000, 10.0)
    cas, en = traj.meta["casimir"], traj.meta["energy"]
    assert np.abs(cas / cas[0] - 1).max() < 1e-6
    assert np.abs(en / en[0] - 1).max() < 1e-5


def test_reconstruction_examples():
    A = np.diag([1.0, 2.0, 3.0])
    rest = lg.reconstruct(np.eye(3), lg.euler_poincare(np.zeros(3), A, 10, 1.0), A)
    assert np.allclose(rest.values, np.eye(3).reshape(9))
    omega, T = 1.3, 2.0
    g0 = lg.rotation([1.0, 1.0, 0.0], 0.4)
    ep = lg.euler_poincare(np.array([0.0, 0.0, 3 * omega]), A, 100, T)
    g = lg.reconstruct(g0, ep, A)
    assert np.abs(g.values[-1].reshape(3, 3) - g0 @ lg.rotation([0, 0, 1], omega * T)).max() < 1e-5
    assert lg.orthogonality_error(g.values[-1].reshape(3, 3)) < 1e-5


def test_brownian_motion():
    g0 = lg.rotation([0, 1, 0], 0.3)
    still = lg.brownian_group(g0, np.zeros((20, 3)))
    assert np.allclose(still.values, g0.reshape(9))
    dW = gaussian_increments(3, 1000, 1e-3, seed=3)
    a = lg.brownian_group(np.eye(3), dW, dt=1e-3)
    b = lg.brownian_group(np.eye(3), dW, dt=1e-3)
    assert np.array_equal(a.values, b.values)
    assert a.meta["orthogonality"].max() < 1e-2
    proj = lg.brownian_group(np.eye(3), dW, dt=1e-3, reproject=True)
    assert proj.meta["orthogonality"].max() < 1e-12


def test_brownian_rejects_bad_increments():
    with pytest.raises(ValueError):
        lg.brownian_group(np.eye(3), np.zeros((10, 2)))


def test_project_to_sphere():
    R = lg.rotation([0, 0, 1], np.pi / 2)
    assert np.allclose(lg.project_to_sphere(R[None], [1.0, 0.0, 0.0]), [[0.0, 1.0, 0.0]], atol=1e-15)
