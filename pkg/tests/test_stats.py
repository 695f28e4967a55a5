import json

import numpy as np
import pytest

from geomkit import framebundle as fb
from geomkit.geodesics import distance
from geomkit.manifold import euclidean, sphere_stereographic
from geomkit.numkernel import OptimizerConfig
from geomkit.stats import (density_grid, frame_from_covariance, frechet_mean, frechet_objective, read_samples,
                           sample_brownian, write_samples)

S = sphere_stereographic()


def test_frechet_single_sample():
    y = np.array([0.3, -0.1])
    res = frechet_mean(S, y[None], np.array([0.0, 0.1]))
    assert res.converged and np.abs(res.mean - y).max() < 1e-7
    assert res.value < 1e-12


def test_frechet_euclidean_is_arithmetic_mean():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(7, 2))
    res = frechet_mean(euclidean(2), pts, np.zeros(2))
    assert np.abs(res.mean - pts.mean(axis=0)).max() < 1e-8
    assert frechet_objective(euclidean(2), res.mean, pts) == pytest.approx(np.mean(np.sum((pts - pts.mean(0)) ** 2, 1)))


def test_frechet_two_point_midpoint():
    a = np.array([0.3, 0.2])
    res = frechet_mean(S, np.stack([a, -a]), np.array([0.05, -0.02]))
    assert np.abs(res.mean).max() < 1e-6
    d = distance(S, a, -a)
    assert res.value == pytest.approx(d ** 2 / 4, rel=1e-6)


def test_frechet_gradient_routes_agree():
    # first-variation gradient versus central differences of the objective, at a generic point
    rng = np.random.default_rng(1)
    samples = rng.normal(0.0, 0.2, size=(4, 2))
    x = np.array([0.2, 0.1])
    cfg = OptimizerConfig(grad_tol=1e3, max_iters=1)  # stops at the start point
    exact = frechet_mean(S, samples, x, cfg)
    fd = frechet_mean(S, samples, x, cfg, fd_gradient=True)
    assert exact.grad_norm > 0.1
    assert exact.grad_norm == pytest.approx(fd.grad_norm, rel=1e-6)
    g = -2.0 / len(samples) * np.asarray(S.flat(x, exact.tangents)).sum(axis=0)
    h = 1e-5
    g_fd = [(frechet_objective(S, x + e, samples) - frechet_objective(S, x - e, samples)) / (2 * h)
            for e in np.eye(2) * h]
    assert np.abs(g - g_fd).max() < 1e-6


def test_frechet_rejects_empty():
    with pytest.raises(ValueError):
        frechet_mean(S, np.zeros((0, 2)), np.zeros(2))


def test_frame_from_covariance():
    Sigma = np.array([[0.2, 0.1], [0.1, 0.1]])
    R = frame_from_covariance(Sigma)
    assert np.allclose(R @ R, Sigma, atol=1e-14) and np.allclose(R, R.T)
    assert np.array_equal(frame_from_covariance(Sigma, "columns"), Sigma)
    for bad in (np.array([[1.0, 2.0], [0.0, 1.0]]), -np.eye(2)):
        with pytest.raises(ValueError):
            frame_from_covariance(bad)
    with pytest.raises(ValueError):
        frame_from_covariance(Sigma, "cholesky")


def test_sample_brownian_small_time_limit():
    x0 = np.array([0.2, 0.1])
    ends = sample_brownian(S, fb.pack(x0, np.eye(2)), T=1e-6, n_steps=10, n_paths=50, seed=3)
    assert np.abs(ends - x0).max() < 1e-2


@pytest.mark.parametrize("Sigma", [np.eye(2) * 0.25, np.array([[0.2, 0.1], [0.1, 0.1]])])
def test_sample_brownian_short_time_covariance(Sigma):
    # at the chart origin, over a short time, chart covariance is T nu nu^T
    T = 0.01
    ends = sample_brownian(S, fb.pack(np.zeros(2), frame_from_covariance(Sigma)), T=T, n_steps=20,
                           n_paths=4000, seed=5)
    C = np.cov(ends.T)
    assert np.linalg.norm(C - T * Sigma) / np.linalg.norm(T * Sigma) < 0.1


def test_sample_brownian_streams_are_per_path():
    u = fb.pack(np.zeros(2), np.eye(2) * 0.5)
    many = sample_brownian(S, u, n_steps=20, n_paths=5, seed=2)
    few = sample_brownian(S, u, n_steps=20, n_paths=2, seed=2)
    assert np.array_equal(many[:2], few)
    assert not np.array_equal(many, sample_brownian(S, u, n_steps=20, n_paths=5, seed=3))


def test_density_grid_normalisation():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(300, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    grid = density_grid(pts, 0.2, 40, 80)
    assert grid.mass() == pytest.approx(1.0, abs=1e-12)
    assert grid.weights.sum() / (4 * np.pi) == pytest.approx(1.0, abs=0.02)
    assert np.all(grid.density >= 0)


def test_density_single_sample_peak():
    p = np.array([0.0, np.sqrt(0.5), np.sqrt(0.5)])
    grid = density_grid(p[None], 0.1, 90, 180)
    i, j = np.unravel_index(np.argmax(grid.density), grid.density.shape)
    assert np.linalg.norm(grid.points[i, j] - p) < 0.05


def test_density_rejects_bad_input():
    with pytest.raises(ValueError):
        density_grid(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        density_grid(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        density_grid(np.ones((1, 3)), bandwidth=0.0)


def test_anisotropic_frame_tilts_density():
    # frames as raw columns of the covariance: the off-diagonal entry tilts the density
    moments = {}
    for name, cov in (("iso", np.diag([0.15, 0.15])), ("aniso", np.array([[0.2, 0.1], [0.1, 0.1]]))):
        ends = sample_brownian(S, fb.pack(np.zeros(2), frame_from_covariance(cov, "columns")), n_paths=1000, seed=7)
        grid = density_grid(np.asarray(S.embed(ends)), 0.1, 40, 80)
        moments[name] = grid.moments()[1][0, 1]
    assert moments["aniso"] > 0.03
    assert abs(moments["iso"]) < 0.02


def test_sample_csv_roundtrip(tmp_path):
    pts = np.random.default_rng(1).normal(size=(5, 3))
    text = write_samples(tmp_path / "s.csv", pts)
    assert text.splitlines()[0] == "x0,x1,x2"
    assert np.array_equal(read_samples(tmp_path / "s.csv"), pts)
    (tmp_path / "empty.csv").write_text("x0\n")
    with pytest.raises(ValueError):
        read_samples(tmp_path / "empty.csv")


def test_density_grid_serialisation(tmp_path):
    grid = density_grid(np.array([[0.0, 0.0, 1.0]]), 0.3, 6, 12)
    grid.to_csv(tmp_path / "d.csv")
    back = np.loadtxt(tmp_path / "d.csv", delimiter=",")
    assert np.array_equal(back, grid.density)
    data = json.loads(grid.to_json(tmp_path / "d.json"))
    assert data["schema_version"] == 1 and data["n_lat"] == 6 and data["n_lon"] == 12
    assert data["mass"] == pytest.approx(1.0)
