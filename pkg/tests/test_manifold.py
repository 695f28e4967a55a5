import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geomkit import autodiff as ad
from geomkit.manifold import ChartError, Manifold, ellipsoid, euclidean, from_id, sphere_stereographic

chart = st.tuples(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5)).map(np.array)


def conformal(x):
    """Closed-form stereographic metric factor 4 / (1 + |x|^2)^2."""
    return 4.0 / (1.0 + np.sum(x * x, axis=-1)) ** 2


def metric_fd_christoffel(x, h=1e-5):
    """Christoffel symbols from finite differences of the closed-form metric."""
    def g(y):
        return conformal(y) * np.eye(2)
    dg = np.stack([(g(x + h * e) - g(x - h * e)) / (2 * h) for e in np.eye(2)], axis=-1)  # dg[i, j, l]
    ginv = np.linalg.inv(g(x))
    G = np.zeros((2, 2, 2))
    for k in range(2):
        for i in range(2):
            for j in range(2):
                G[k, i, j] = 0.5 * sum(ginv[k, l] * (dg[j, l, i] + dg[i, l, j] - dg[i, j, l]) for l in range(2))
    return G


def test_euclidean_metric_identity_and_flat():
    E = euclidean(3)
    x = np.array([0.3, -1.0, 2.0])
    assert np.array_equal(ad.value(E.metric(x)), np.eye(3))
    assert np.array_equal(ad.value(E.cometric(x)), np.eye(3))
    assert np.allclose(ad.value(E.christoffel(x)), 0.0)
    assert np.allclose(ad.value(E.riemann(x)), 0.0)
    assert float(ad.value(E.scalar_curvature(x))) == 0.0


def test_sphere_metric_at_origin():
    S = sphere_stereographic()
    assert np.allclose(ad.value(S.metric(np.zeros(2))), 4 * np.eye(2), atol=1e-15)
    assert np.allclose(ad.value(S.cometric(np.zeros(2))), 0.25 * np.eye(2), atol=1e-15)
    assert np.allclose(ad.value(S.christoffel(np.zeros(2))), 0.0, atol=1e-12)


@given(chart)
def test_sphere_metric_conformal_closed_form(x):
    S = sphere_stereographic()
    assert np.allclose(ad.value(S.metric(x)), conformal(x) * np.eye(2), rtol=1e-10, atol=1e-14)


def test_christoffel_against_metric_finite_differences():
    S = sphere_stereographic()
    x = np.array([0.3, -0.2])
    assert np.allclose(ad.value(S.christoffel(x)), metric_fd_christoffel(x), atol=1e-6)


@given(chart)
def test_christoffel_routes_agree(x):
    # embedding formula versus derivatives of the metric
    S = sphere_stereographic()
    a = ad.value(S.christoffel(x))
    b = ad.value(S.christoffel_from_metric(x))
    assert np.allclose(a, b, rtol=1e-10, atol=1e-12)


@given(chart)
def test_sphere_riemann_constant_curvature(x):
    S = sphere_stereographic()
    R = ad.value(S.riemann(x))
    g = ad.value(S.metric(x))
    # R_ijk^m = g_jk delta_i^m - g_ik delta_j^m
    I = np.eye(2)
    expected = np.einsum("jk,im->ijkm", g, I) - np.einsum("ik,jm->ijkm", g, I)
    assert np.allclose(R, expected, atol=1e-6 * max(1.0, np.abs(expected).max()))
    assert np.allclose(R, -R.transpose(1, 0, 2, 3), atol=1e-12)


@given(chart)
def test_sphere_scalar_and_sectional(x):
    S = sphere_stereographic()
    assert abs(float(ad.value(S.scalar_curvature(x))) - 2.0) <= 1e-6
    assert abs(S.sectional(x, [1.0, 0.3], [-0.2, 1.0]) - 1.0) <= 1e-6


def test_sectional_for_embedded_frame_vectors():
    S = sphere_stereographic()
    assert S.sectional(np.zeros(2), [0.5, 0.0], [0.0, 0.5]) == pytest.approx(1.0, abs=1e-10)
    e1, e2 = np.array([0.4, 0.1]), np.array([-0.3, 0.9])
    x = np.array([0.2, 0.5])
    assert S.sectional(x, e1, e2) == pytest.approx(S.sectional(x, 2 * e1, e2), abs=1e-10)
    assert euclidean(2).sectional(x, e1, e2) == 0.0


def test_sectional_rejects_parallel_vectors():
    with pytest.raises(ValueError):
        sphere_stereographic().sectional(np.zeros(2), [1.0, 0.0], [2.0, 0.0])


def test_unit_ellipsoid_equals_sphere():
    x = np.array([0.4, -0.7])
    S, E = sphere_stereographic(), ellipsoid(1.0, 1.0, 1.0)
    assert np.allclose(ad.value(E.riemann(x)), ad.value(S.riemann(x)), atol=1e-12)
    assert float(ad.value(E.scalar_curvature(x))) == pytest.approx(2.0, abs=1e-9)


def test_ellipsoid_gauss_curvature_at_pole():
    # at the pole (0, 0, -c) of x^2/a^2 + y^2/b^2 + z^2/c^2 = 1 the Gauss curvature is c^2 / (a^2 b^2)
    a, b, c = 1.0, 0.8, 1.2
    E = ellipsoid(a, b, c)
    assert float(ad.value(E.scalar_curvature(np.zeros(2)))) / 2 == pytest.approx(c ** 2 / (a * b) ** 2, rel=1e-9)


def test_flat_sharp():
    S = sphere_stereographic()
    assert np.allclose(ad.value(S.flat(np.zeros(2), np.array([1.0, -1.0]))), [4.0, -4.0])
    rng = np.random.default_rng(0)
    x, v = rng.uniform(-1, 1, 2), rng.normal(size=2)
    assert np.allclose(ad.value(S.sharp(x, S.flat(x, v))), v, atol=1e-12)


def test_metric_and_cometric_modes_agree():
    S = sphere_stereographic()
    byg = Manifold(2, metric_fn=lambda x: ad.value(S.metric(x)) if not ad.is_jet(x) else S.metric(x))
    byk = Manifold(2, cometric_fn=lambda x: S.cometric(x))
    x = np.array([0.3, 0.6])
    ref = ad.value(S.christoffel(x))
    assert np.allclose(ad.value(byg.christoffel(x)), ref, atol=1e-12)
    assert np.allclose(ad.value(byk.christoffel(x)), ref, atol=1e-12)
    assert byg.mode == "metric" and byk.mode == "cometric" and S.mode == "embedding"


def test_from_id():
    assert from_id("euclidean:3").dim == 3
    assert from_id("sphere-stereographic").name == "sphere-stereographic"
    assert from_id("ellipsoid:1,0.8,1.2").embed_dim == 3
    L = from_id("landmarks:2,0.1,1")
    assert L.dim == 4 and L.mode == "cometric"
    for bad in ("torus", "euclidean:0", "euclidean:1.5", "ellipsoid:1,2", "sphere-stereographic:2", "landmarks:x"):
        with pytest.raises(ValueError):
            from_id(bad)


def test_manifold_needs_exactly_one_description():
    with pytest.raises(ValueError):
        Manifold(2)
    with pytest.raises(ValueError):
        Manifold(2, embedding=lambda x: x, metric_fn=lambda x: x)


def test_check_rejects_bad_points():
    S = sphere_stereographic()
    with pytest.raises(ValueError):
        S.check(np.zeros(3))
    with pytest.raises(ChartError):
        S.check(np.array([np.inf, 0.0]))


def test_landmark_metric_mode_inverts_kernel():
    L = from_id("landmarks:2,0.5,1")
    x = np.array([0.0, 0.0, 0.3, 0.1])
    K = ad.value(L.cometric(x))
    assert np.allclose(ad.value(L.metric(x)) @ K, np.eye(4), atol=1e-10)
    assert np.all(np.isfinite(ad.value(L.christoffel(x))))
