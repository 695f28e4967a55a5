"""Landmark shapes in the plane with a Gaussian kernel cometric.

A shape of ``n`` landmarks is the flat vector ``(x_1, y_1, ..., x_n, y_n)``.
The cometric is ``K(x_i, x_j) I_2`` per landmark pair, so geodesics are the
usual landmark Hamiltonian flow ``H = 1/2 sum_ij K(x_i, x_j) p_i . p_j``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import NumericalError, Perturbation
from .integrate import Trajectory, integrate_ode
from .manifold import Manifold
from .numkernel import levenberg_marquardt, solve

__all__ = [
    "LandmarkConfig",
    "kernel",
    "kernel_matrix",
    "landmark_cometric",
    "manifold",
    "hamiltonian",
    "landmark_field",
    "shoot",
    "MatchResult",
    "match",
    "t_shape",
    "o_shape",
    "read_shape",
    "write_shape",
]


@dataclass(frozen=True)
class LandmarkConfig:
    n: int
    sigma: float = 0.1
    alpha: float = 1.0
    dim: int = 2

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"landmark count must be a positive integer, got {self.n}")
        if not self.sigma > 0 or not self.alpha > 0:
            raise ValueError("sigma and alpha must be positive")
        if self.dim != 2:
            raise ValueError("only planar landmarks are supported")

    @property
    def size(self) -> int:
        return self.n * self.dim


def kernel(cfg: LandmarkConfig, xi, xj):
    """Gaussian kernel ``alpha * exp(-|xi - xj|^2 / (2 sigma^2))``."""
    diff = xi - xj
    r2 = (diff * diff).sum(axis=-1)
    arg = r2 * (-0.5 / cfg.sigma ** 2)
    return cfg.alpha * (ad.exp(arg) if ad.is_jet(arg) else np.exp(arg))


def _points(cfg, x):
    if np.shape(ad.value(x))[-1] != cfg.size:
        raise ValueError(f"shape vector must have length {cfg.size}, got {np.shape(ad.value(x))[-1]}")
    return x.reshape(*x.shape[:-1], cfg.n, cfg.dim)


def _pairs(X):
    D = X[..., :, None, :] - X[..., None, :, :]
    return D


def kernel_matrix(cfg: LandmarkConfig, x):
    """``(n, n)`` matrix of kernel values between the landmarks of ``x``."""
    X = _points(cfg, x if ad.is_jet(x) else np.asarray(x, dtype=float))
    return kernel(cfg, X[..., :, None, :], X[..., None, :, :])


def landmark_cometric(cfg: LandmarkConfig, x):
    """Full cometric ``kron(K, I_2)`` in the interleaved coordinate order."""
    K = kernel_matrix(cfg, x)
    I = np.eye(cfg.dim)
    if ad.is_jet(K):
        out = ad.einsum("...ij,ab->...iajb", K, I)
    else:
        out = np.einsum("...ij,ab->...iajb", K, I)
    return out.reshape(*out.shape[:-4], cfg.size, cfg.size)


def manifold(cfg: LandmarkConfig) -> Manifold:
    """Landmark configuration space as a cometric-mode :class:`Manifold`."""

    def valid(x):
        X = np.asarray(x).reshape(*np.shape(x)[:-1], cfg.n, cfg.dim)
        D = np.linalg.norm(X[..., :, None, :] - X[..., None, :, :], axis=-1)
        D = np.where(np.eye(cfg.n, dtype=bool), np.inf, D)
        return np.min(D.reshape(*D.shape[:-2], -1), axis=-1) > 1e-12 if cfg.n > 1 else np.ones(np.shape(x)[:-1], bool)

    M = Manifold(cfg.size, cometric_fn=lambda x: landmark_cometric(cfg, x), valid=valid,
                 name=f"landmarks:{cfg.n},{cfg.sigma:g},{cfg.alpha:g}")
    M.landmark_config = cfg
    return M


def hamiltonian(cfg: LandmarkConfig, x, p):
    K = kernel_matrix(cfg, x)
    P = _points(cfg, np.asarray(p, dtype=float))
    return 0.5 * np.einsum("...ij,...ia,...ja->...", K, P, P)


def landmark_field(cfg: LandmarkConfig):
    """Hamilton's equations written out for the Gaussian kernel (state ``(x, p)``)."""
    N = cfg.size
    s2 = cfg.sigma ** 2

    def f(t, s):
        x, p = s[..., :N], s[..., N:]
        X, P = _points(cfg, x), _points(cfg, p)
        D = _pairs(X)
        K = kernel(cfg, X[..., :, None, :], X[..., None, :, :])
        dX = ad.einsum("...ij,...ja->...ia", K, P)
        W = K * ad.einsum("...ia,...ja->...ij", P, P) * (1.0 / s2)
        dP = ad.einsum("...ij,...ija->...ia", W, D)
        lead = dX.shape[:-2]
        return ad.concatenate([dX.reshape(*lead, N), dP.reshape(*lead, N)], axis=-1)
    return f


def shoot(cfg: LandmarkConfig, x0, p0, n_steps: int = 100, T: float = 1.0, scheme: str = "rk4") -> Trajectory:
    """Landmark geodesic from shape ``x0`` with momentum ``p0``."""
    x0 = x0 if ad.is_jet(x0) else np.asarray(x0, dtype=float)
    s0 = ad.concatenate([x0, ad.zeros_like(x0) + p0], axis=-1)
    traj = integrate_ode(landmark_field(cfg), s0, n_steps, T, scheme)
    vals = traj.values
    N = cfg.size
    traj.meta["hamiltonian"] = hamiltonian(cfg, vals[..., :N], vals[..., N:])
    traj.meta["manifold"] = f"landmarks:{cfg.n},{cfg.sigma:g},{cfg.alpha:g}"
    return traj


@dataclass
class MatchResult:
    p0: np.ndarray
    traj: Trajectory
    loss: float
    converged: bool
    iters: int

    def __iter__(self):
        return iter((self.p0, self.traj, self))

    def to_json(self, path=None, trajectory_ref: str | None = None) -> str:
        text = json.dumps({
            "schema_version": 1,
            "p0": self.p0.tolist(),
            "loss": self.loss,
            "converged": self.converged,
            "iters": self.iters,
            "trajectory": trajectory_ref,
        })
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def match(cfg: LandmarkConfig, x1, x2, p_init=None, n_steps: int = 100, loss_tol: float = 1e-6,
          max_iters: int = 200, jac_steps: int = 25) -> MatchResult:
    """Initial momentum whose geodesic carries shape ``x1`` onto ``x2``.

    Levenberg-Marquardt on the endpoint residual, started at the flat map
    ``K(x1)^{-1} (x2 - x1)``. The residual uses ``n_steps`` RK4 steps; the
    Jacobian comes from jets pushed through a coarser ``jac_steps`` grid,
    several times cheaper and still a good enough model for damped steps.
    ``loss`` is ``|x(1) - x2|^2 / (n dim)`` and ``converged`` means
    ``loss <= loss_tol``.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != (cfg.size,) or x2.shape != (cfg.size,):
        raise ValueError(f"shapes must be vectors of length {cfg.size}")
    N = cfg.size
    f = landmark_field(cfg)

    def endpoint(p, steps):
        s0 = ad.concatenate([ad.zeros_like(p) + x1, p], axis=-1)
        return integrate_ode(f, s0, steps).final[:N]

    def jacobian(p):
        pert = Perturbation(p, 1)
        return pert.drop(pert.diff(endpoint(pert.point, min(jac_steps, n_steps))))

    if p_init is None:
        # flat map of the chart difference; equals (x2 - x1) / alpha for isolated landmarks
        p0 = solve(landmark_cometric(cfg, x1), x2 - x1)
    else:
        p0 = np.asarray(p_init, dtype=float)
    tol = np.sqrt(loss_tol * N)
    try:
        p, _, _, iters = levenberg_marquardt(lambda q: endpoint(q, n_steps) - x2, jacobian, p0,
                                             tol=tol, max_iters=max_iters)
    except NumericalError:
        p, iters = p0, 0
    traj = shoot(cfg, x1, p, n_steps)
    loss = float(np.sum((traj.values[-1, :N] - x2) ** 2) / N)
    return MatchResult(p, traj, loss, bool(loss <= loss_tol), iters)


# --------------------------------------------------------------------------
# shapes


def _resample(poly, n):
    """``n`` points at equal arc length along the closed polygon ``poly``."""
    pts = np.vstack([poly, poly[:1]])
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    s = np.arange(n) * cum[-1] / n
    k = np.searchsorted(cum, s, side="right") - 1
    w = (s - cum[k]) / seg[k]
    return pts[k] + w[:, None] * (pts[k + 1] - pts[k])


def t_shape(n: int = 50, width: float = 0.8, height: float = 0.8, bar: float = 0.2) -> np.ndarray:
    """Outline of a letter T centred at the origin, counter-clockwise from the top-left corner."""
    w, h, b = width / 2, height / 2, bar / 2
    poly = np.array([
        [-w, h], [-w, h - bar], [-b, h - bar], [-b, -h], [b, -h], [b, h - bar], [w, h - bar], [w, h],
    ])
    return _resample(poly, n).reshape(-1)


def o_shape(n: int = 50, a: float = 0.4, b: float = 0.3) -> np.ndarray:
    """Ellipse with semi-axes ``a``, ``b``, equal arc length, counter-clockwise from the top-left."""
    th = np.linspace(0.0, 2 * np.pi, 4097)[:-1] + 0.75 * np.pi
    return _resample(np.stack([a * np.cos(th), b * np.sin(th)], axis=1), n).reshape(-1)


def write_shape(path_or_none, x) -> str:
    X = np.asarray(x, dtype=float).reshape(-1, 2)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y"])
    for row in X:
        w.writerow([repr(float(row[0])), repr(float(row[1]))])
    text = buf.getvalue()
    if path_or_none is not None:
        with open(path_or_none, "w", newline="") as fh:
            fh.write(text)
    return text


def read_shape(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["x", "y"]:
        raise ValueError(f"{path}: expected a header 'x,y'")
    return np.array([[float(a), float(b)] for a, b in rows[1:]]).reshape(-1)
