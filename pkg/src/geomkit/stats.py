"""Sample statistics on manifolds: Frechet mean, Brownian samples, density grids."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import NumericalError
from .framebundle import pack, stochastic_development
from .geodesics import log
from .manifold import Manifold
from .numkernel import OptimizerConfig, gaussian_increments, minimize

__all__ = [
    "FrechetResult",
    "frechet_objective",
    "frechet_mean",
    "frame_from_covariance",
    "sample_brownian",
    "DensityGrid",
    "density_grid",
    "read_samples",
    "write_samples",
]


@dataclass
class FrechetResult:
    mean: np.ndarray
    value: float
    converged: bool
    iters: int
    grad_norm: float
    history: list = field(default_factory=list)
    tangents: np.ndarray | None = None

    def __iter__(self):
        return iter((self.mean, self.value, self.converged))


class _LogCache:
    """Batched logarithms from one base point to all samples, warm-started."""

    def __init__(self, M, samples, n_steps, tol):
        self.M, self.samples, self.n_steps, self.tol = M, samples, n_steps, tol
        self.v = None

    def __call__(self, x):
        v0 = self.samples - x if self.v is None else self.v
        res = log(self.M, x, self.samples, v_init=v0, method="newton", n_steps=self.n_steps)
        bad = np.flatnonzero(~np.asarray(res.converged) | (np.asarray(res.loss) > self.tol))
        if bad.size:
            # one more try from the chart difference before giving up
            retry = log(self.M, x, self.samples, v_init=self.samples - x, method="newton", n_steps=self.n_steps)
            if np.all(np.asarray(retry.loss) <= self.tol):
                res = retry
            else:
                i = int(bad[0])
                raise NumericalError(f"logarithm to sample {i} did not converge (loss {np.asarray(res.loss)[i]:.3g})")
        self.v = res.v
        return res.v


def frechet_objective(M: Manifold, x, samples, n_steps: int = 100) -> float:
    """``(1/n) sum_i |Log(x, y_i)|^2``."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    v = _LogCache(M, samples, n_steps, 1e-20)(np.asarray(x, dtype=float))
    return float(np.mean(ad.value(M.inner(x, v, v))))


def frechet_mean(M: Manifold, samples, x0, cfg: OptimizerConfig | None = None, fd_gradient: bool = False,
                 n_steps: int = 100, fd_step: float = 1e-6) -> FrechetResult:
    """Empirical Frechet mean by quasi-Newton descent on the chart.

    The gradient is the first variation ``-(2/n) sum_i g(x) Log(x, y_i)``,
    exact when the inner logarithms are solved; ``fd_gradient`` switches to
    central differences of the objective instead (slow, for checking).
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.size == 0:
        raise ValueError("no samples")
    x0 = np.asarray(x0, dtype=float)
    M.check(samples)
    M.check(x0)
    cfg = cfg or OptimizerConfig(grad_tol=1e-9, max_iters=200)
    logs = _LogCache(M, samples, n_steps, 1e-20)
    n = len(samples)

    def objective(x):
        v = logs(x)
        return float(np.mean(ad.value(M.inner(x, v, v)))), v

    def fg(x):
        try:
            M.check(x)
            f, v = objective(x)
        except (NumericalError, ValueError):
            return np.inf, np.zeros_like(x)
        if fd_gradient:
            g = np.empty_like(x)
            for k in range(len(x)):
                e = np.zeros_like(x)
                e[k] = fd_step
                g[k] = (frechet_objective(M, x + e, samples, n_steps)
                        - frechet_objective(M, x - e, samples, n_steps)) / (2 * fd_step)
            logs(x)  # restore the warm start for this point
        else:
            g = -2.0 / n * ad.value(M.flat(x, v)).sum(axis=0)
        return f, g

    res = minimize(fg, None, x0, cfg)
    v = logs(res.x)
    return FrechetResult(res.x, res.fun, res.converged, res.iters, res.grad_norm, res.history, v)


def frame_from_covariance(Sigma, mode: str = "sqrt"):
    """Frame whose development has covariance ``Sigma`` (``mode='sqrt'``) or whose columns are ``Sigma``."""
    Sigma = np.asarray(Sigma, dtype=float)
    if Sigma.ndim != 2 or Sigma.shape[0] != Sigma.shape[1] or not np.allclose(Sigma, Sigma.T):
        raise ValueError("covariance must be a symmetric square matrix")
    if mode == "columns":
        return Sigma.copy()
    if mode != "sqrt":
        raise ValueError(f"unknown mode {mode!r}; expected 'sqrt' or 'columns'")
    w, U = np.linalg.eigh(Sigma)
    if np.any(w <= 0):
        raise ValueError("covariance must be positive definite")
    return (U * np.sqrt(w)) @ U.T


def sample_brownian(M: Manifold, u0, T: float = 1.0, n_steps: int = 100, n_paths: int = 100, seed: int = 0,
                    drift=None, return_paths: bool = False):
    """Endpoints of ``n_paths`` stochastic developments started at frame point ``u0``.

    Path ``i`` is driven by the stream ``(seed, i)``, so any subset of paths
    can be regenerated on its own.
    """
    u0 = np.asarray(u0, dtype=float)
    d = M.dim
    r = (u0.shape[-1] - d) // d
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    dt = T / n_steps
    dW = np.stack([gaussian_increments(r, n_steps, dt, seed, index=i) for i in range(n_paths)], axis=1)
    traj = stochastic_development(M, u0, dW, drift, dt)
    ends = traj.values[-1, :, :d]
    return (ends, traj) if return_paths else ends


def _ellipsoid_grid(n_lat, n_lon, axes):
    lat = (np.arange(n_lat) + 0.5) * np.pi / n_lat - np.pi / 2
    lon = (np.arange(n_lon) + 0.5) * 2 * np.pi / n_lon - np.pi
    LA, LO = np.meshgrid(lat, lon, indexing="ij")
    a = np.asarray(axes, dtype=float)
    P = np.stack([np.cos(LA) * np.cos(LO), np.cos(LA) * np.sin(LO), np.sin(LA)], axis=-1) * a
    # area element |d_lat P x d_lon P|
    d_la = np.stack([-np.sin(LA) * np.cos(LO), -np.sin(LA) * np.sin(LO), np.cos(LA)], axis=-1) * a
    d_lo = np.stack([-np.cos(LA) * np.sin(LO), np.cos(LA) * np.cos(LO), np.zeros_like(LA)], axis=-1) * a
    area = np.linalg.norm(np.cross(d_la, d_lo), axis=-1) * (np.pi / n_lat) * (2 * np.pi / n_lon)
    return lat, lon, P, area


@dataclass
class DensityGrid:
    lat: np.ndarray
    lon: np.ndarray
    points: np.ndarray
    density: np.ndarray
    weights: np.ndarray
    bandwidth: float
    meta: dict = field(default_factory=dict)

    def mass(self) -> float:
        return float(np.sum(self.density * self.weights))

    def moments(self):
        """Density-weighted mean and second moment matrix of the ambient coordinates."""
        w = (self.density * self.weights)[..., None]
        mean = np.sum(w * self.points, axis=(0, 1))
        c = self.points - mean
        second = np.einsum("ija,ijb->ab", w[..., 0][..., None] * c, c)
        return mean, second

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for row in self.density:
            w.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_json(self, path=None) -> str:
        text = json.dumps({
            "schema_version": 1,
            "n_lat": len(self.lat),
            "n_lon": len(self.lon),
            "lat": self.lat.tolist(),
            "lon": self.lon.tolist(),
            "bandwidth": self.bandwidth,
            "mass": self.mass(),
            **self.meta,
        })
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def density_grid(points, bandwidth: float = 0.1, n_lat: int = 60, n_lon: int = 120, axes=(1.0, 1.0, 1.0)) -> DensityGrid:
    """Gaussian kernel density of embedded samples on a lat-long grid over an ellipsoid surface.

    ``points`` are ambient coordinates of shape ``(P, 3)``. The estimate is
    normalised so that ``sum(density * weights) == 1``, with ``weights`` the
    cell areas.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError("density_grid needs embedded points of shape (P, 3)")
    if len(points) == 0:
        raise ValueError("no samples")
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    lat, lon, P, area = _ellipsoid_grid(n_lat, n_lon, axes)
    dens = np.zeros(P.shape[:2])
    for chunk in np.array_split(points, max(1, len(points) // 512)):
        r2 = np.sum((P[:, :, None, :] - chunk[None, None]) ** 2, axis=-1)
        dens += np.exp(-0.5 * r2 / bandwidth ** 2).sum(axis=-1)
    total = np.sum(dens * area)
    if not total > 0:
        raise NumericalError("density vanishes on the grid; increase the bandwidth")
    return DensityGrid(lat, lon, P, dens / total, area, float(bandwidth),
                       {"n_samples": int(len(points)), "surface_area": float(area.sum()), "axes": list(map(float, axes))})


def write_samples(path, points) -> str:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{i}" for i in range(points.shape[1])])
    for row in points:
        w.writerow([repr(float(v)) for v in row])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def read_samples(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: no samples")
    return np.array([[float(v) for v in row] for row in rows[1:]])
