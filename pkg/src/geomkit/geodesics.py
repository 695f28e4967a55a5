"""Geodesic flows, Exp/Log, geodesic distance and parallel transport.

Chart points and tangents carry a leading batch shape throughout; ``exp`` of
twenty tangents is one integration of a ``(20, 2d)`` state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import NumericalError, Perturbation
from .integrate import Trajectory, integrate_ode
from .manifold import ChartError, Manifold
from .numkernel import OptimizerConfig, SingularMatrixError, minimize, solve

__all__ = [
    "geodesic",
    "exp",
    "hamiltonian",
    "hamiltonian_field",
    "exp_hamiltonian",
    "LogResult",
    "log",
    "distance",
    "parallel_transport",
]


def _chart_check(M: Manifold, d: int):
    def check(k, s):
        if not np.all(M.is_valid(ad.value(s)[..., :d])):
            raise ChartError(f"flow left the chart of {M.name} at step {k}")
    return check


def geodesic_field(M: Manifold):
    d = M.dim

    def f(t, s):
        x, w = s[..., :d], s[..., d:]
        G = M.christoffel(x)
        Gw = ad.einsum("...kij,...j->...ki", G, w)
        dw = -ad.einsum("...ki,...i->...k", Gw, w)
        return ad.concatenate([w, dw], axis=-1)
    return f


def geodesic(M: Manifold, x0, v0, n_steps: int = 100, scheme: str = "rk4", T: float = 1.0) -> Trajectory:
    """Solve the second-order geodesic equation; the state is ``(x, w)`` stacked on the last axis."""
    s0 = ad.concatenate([ad.zeros_like(v0) + x0, ad.zeros_like(x0) + v0], axis=-1)
    M.check(x0)
    traj = integrate_ode(geodesic_field(M), s0, n_steps, T, scheme, check=_chart_check(M, M.dim))
    traj.meta["manifold"] = M.name
    traj.meta["form"] = "second-order"
    return traj


def exp(M: Manifold, x, v, n_steps: int = 100, scheme: str = "rk4"):
    """Endpoint of the geodesic through ``x`` with initial velocity ``v``."""
    return geodesic(M, x, v, n_steps, scheme).final[..., :M.dim]


def hamiltonian(M: Manifold, x, p):
    """``H(x, p) = p^T g^{-1}(x) p / 2``."""
    return 0.5 * ad.einsum("...i,...i->...", ad.einsum("...ij,...j->...i", M.cometric(x), p), p)


def hamiltonian_field(M: Manifold):
    """Hamilton's equations for :func:`hamiltonian`, partials from jets."""
    d = M.dim

    def f(t, s):
        x, p = s[..., :d], s[..., d:]
        pert = Perturbation(x, 1)
        K = M.cometric(pert.point)
        dK = pert.drop(pert.diff(K))
        K0 = pert.drop(K)
        dx = ad.einsum("...ij,...j->...i", K0, p)
        dKp = ad.einsum("...ijl,...j->...il", dK, p)
        dp = ad.einsum("...il,...i->...l", dKp, p) * -0.5
        return ad.concatenate([dx, dp], axis=-1)
    return f


def exp_hamiltonian(M: Manifold, x, p, n_steps: int = 100, scheme: str = "rk4", T: float = 1.0,
                    field=None) -> Trajectory:
    """Integrate Hamilton's equations from ``(x, p)``; state is ``(x, p)``.

    ``meta['hamiltonian']`` holds ``H`` at every grid point.
    """
    M.check(x)
    d = M.dim
    s0 = ad.concatenate([ad.zeros_like(p) + x, ad.zeros_like(x) + p], axis=-1)
    traj = integrate_ode(field or hamiltonian_field(M), s0, n_steps, T, scheme, check=_chart_check(M, d))
    vals = traj.values
    traj.meta["hamiltonian"] = hamiltonian(M, vals[..., :d], vals[..., d:])
    traj.meta["manifold"] = M.name
    traj.meta["form"] = "hamiltonian"
    return traj


# --------------------------------------------------------------------------
# logarithm


@dataclass
class LogResult:
    v: np.ndarray
    loss: float | np.ndarray
    converged: bool | np.ndarray
    iters: int

    def __iter__(self):
        return iter((self.v, self.converged))


def _shoot_residual(M, x1, x2, n_steps):
    d = M.dim

    def residual_and_jac(v):
        p = Perturbation(v, 1)
        end = exp(M, x1, p.point, n_steps)
        r = end - x2
        return p.drop(r), p.drop(p.diff(r))
    return residual_and_jac


def _newton_batch(res_jac, v0, tol, max_iters):
    """Damped Newton on ``r(v) = 0`` for a batch of independent square systems."""
    v = np.array(v0, dtype=float, copy=True)
    r, J = res_jac(v)
    rn = np.linalg.norm(r, axis=-1)
    it = 0
    while it < max_iters:
        pending = rn > tol
        if not np.any(pending):
            break
        it += 1
        try:
            step = solve(J, r)
        except SingularMatrixError:
            break
        t = np.ones(rn.shape)
        progressed = False
        for _ in range(30):
            vn = v - (t * pending)[..., None] * step
            try:
                rr, JJ = res_jac(vn)
                nn = np.linalg.norm(rr, axis=-1)
                nn = np.where(np.isfinite(nn), nn, np.inf)
                acc = pending & (nn < rn)
                v = np.where(acc[..., None], vn, v)
                r = np.where(acc[..., None], rr, r)
                J = np.where(acc[..., None, None], JJ, J)
                rn = np.where(acc, nn, rn)
                progressed = progressed or bool(np.any(acc))
                pending = pending & ~acc
            except (ChartError, NumericalError):
                pass
            if not np.any(pending):
                break
            t = np.where(pending, 0.5 * t, t)
        if not progressed:
            break
    return v, rn, it


def log(M: Manifold, x1, x2, v_init=None, cfg: OptimizerConfig | None = None, method: str = "lbfgs",
        n_steps: int = 100, restarts: int = 1, tol: float = 1e-8, seed: int = 0) -> LogResult:
    """Initial velocity of a geodesic from ``x1`` reaching ``x2`` at time 1 (shooting).

    ``method='lbfgs'`` minimises ``|Exp(x1, v) - x2|^2 / d`` with the gradient
    propagated through every integration step. ``method='newton'`` solves
    ``Exp(x1, v) = x2`` by Newton's method on the same sensitivities and
    accepts a batch of problems. Success means the normalised loss is at most
    ``tol``; with ``restarts > 1`` further random starts (scaled like the
    chart difference) are tried until one succeeds.
    """
    d = M.dim
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    M.check(x1)
    M.check(x2)
    if v_init is None:
        v_init = np.zeros(np.broadcast_shapes(x1.shape, x2.shape))
    v_init = np.asarray(v_init, dtype=float)
    if method == "newton":
        res_jac = _shoot_residual(M, x1, x2, n_steps)
        v, rn, it = _newton_batch(res_jac, v_init, 1e-13, 50)
        loss = rn ** 2 / d
        ok = loss <= tol
        if v.ndim == 1:
            return LogResult(v, float(loss), bool(ok), it)
        return LogResult(v, loss, ok, it)
    if method != "lbfgs":
        raise ValueError(f"unknown log method {method!r}")
    if v_init.ndim > 1 or x1.ndim > 1 or x2.ndim > 1:
        shape = v_init.shape
        flat_v = v_init.reshape(-1, d)
        b1 = np.broadcast_to(x1, shape).reshape(-1, d)
        b2 = np.broadcast_to(x2, shape).reshape(-1, d)
        outs = [log(M, a, b, w, cfg, method, n_steps, restarts, tol, seed) for a, b, w in zip(b1, b2, flat_v)]
        return LogResult(np.stack([o.v for o in outs]).reshape(shape),
                         np.array([o.loss for o in outs]).reshape(shape[:-1]),
                         np.array([o.converged for o in outs]).reshape(shape[:-1]),
                         max(o.iters for o in outs))
    cfg = cfg or OptimizerConfig(grad_tol=1e-12, max_iters=200, f_target=tol * 1e-6)

    def loss(v):
        end = exp(M, x1, v, n_steps)
        r = end - x2
        return ad.einsum("i,i->", r, r) * (1.0 / d)

    def fg(v):
        try:
            return ad.gradient_of_loss(loss, v)
        except (ChartError, NumericalError):
            return np.inf, np.full(d, np.nan)

    rng = np.random.default_rng(seed)
    best = None
    total = 0
    starts = [v_init] + [(x2 - x1) + rng.normal(size=d) * (np.linalg.norm(x2 - x1) + 0.1)
                         for _ in range(max(restarts, 1) - 1)]
    for start in starts:
        res = minimize(fg, None, start, cfg)
        total += res.iters
        if best is None or res.fun < best.fun:
            best = res
        if best.fun <= tol:
            break
    return LogResult(best.x, float(best.fun), bool(best.fun <= tol), total)


def distance(M: Manifold, x, y, **kw) -> float:
    """Geodesic distance ``|Log(x, y)|_g`` (local minimiser of the shooting problem)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape == y.shape and np.array_equal(x, y):
        return 0.0 if x.ndim == 1 else np.zeros(x.shape[:-1])
    res = log(M, x, y, **kw)
    if not np.all(res.converged):
        raise NumericalError("logarithm did not converge")
    return M.norm(x, res.v)


# --------------------------------------------------------------------------
# parallel transport


def _hermite(g0, g1, d0, d1, h, tau):
    t2, t3 = tau * tau, tau * tau * tau
    pos = (2 * t3 - 3 * t2 + 1) * g0 + (t3 - 2 * t2 + tau) * h * d0 + (-2 * t3 + 3 * t2) * g1 + (t3 - t2) * h * d1
    vel = ((6 * t2 - 6 * tau) * g0 + (3 * t2 - 4 * tau + 1) * h * d0 + (-6 * t2 + 6 * tau) * g1
           + (3 * t2 - 2 * tau) * h * d1) / h
    return pos, vel


def parallel_transport(M: Manifold, v, gamma, gamma_dot=None, scheme: str = "rk4") -> Trajectory:
    """Transport ``v`` along a discretised curve by ``dv^k = -G^k_ij gdot^i v^j dt``.

    ``gamma`` is a Trajectory (a geodesic trajectory supplies its own
    velocities) or an ``(n+1, d)`` array on ``[0, 1]``. Missing velocities are
    replaced by central differences. RK4 midpoints use cubic Hermite
    interpolation of the curve. ``v`` may hold several vectors, shape
    ``(k, d)``, transported together.
    """
    d = M.dim
    if isinstance(gamma, Trajectory):
        times = gamma.times
        vals = gamma.values
        pts = vals[:, :d]
        if gamma_dot is None and vals.shape[-1] == 2 * d:
            gamma_dot = vals[:, d:]
    else:
        pts = np.asarray(gamma, dtype=float)
        times = np.linspace(0.0, 1.0, len(pts))
    n = len(pts) - 1
    if n < 1:
        raise ValueError("curve needs at least two points")
    h = (times[-1] - times[0]) / n
    if gamma_dot is None:
        gamma_dot = np.gradient(pts, h, axis=0, edge_order=2)
    gamma_dot = np.asarray(gamma_dot, dtype=float)
    if gamma_dot.shape != pts.shape:
        raise ValueError(f"velocity grid {gamma_dot.shape} does not match curve grid {pts.shape}")

    mid_p, mid_v = _hermite(pts[:-1], pts[1:], gamma_dot[:-1], gamma_dot[1:], h, 0.5)
    allp = np.empty((2 * n + 1, d))
    allv = np.empty((2 * n + 1, d))
    allp[0::2], allp[1::2] = pts, mid_p
    allv[0::2], allv[1::2] = gamma_dot, mid_v
    G = ad.value(M.christoffel(allp))
    A = np.einsum("nkij,ni->nkj", G, allv)
    t0 = times[0]

    def f(t, w):
        j = int(round(2 * (t - t0) / h))
        return -np.einsum("kj,...j->...k", A[j], w)

    traj = integrate_ode(f, np.asarray(v, dtype=float), n, times[-1] - t0, scheme, t0=t0)
    traj.meta["curve"] = pts
    return traj
