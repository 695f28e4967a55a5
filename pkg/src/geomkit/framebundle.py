"""Frame bundle F M over a chart manifold.

A frame point ``u = (x, nu)`` is stored flat as ``(x^1..x^d, nu column-major)``
so ``u[d + a*d + i] = nu[i, a]``: the frame vectors follow one another.
Momenta on F M use the same layout. ``r`` (the number of frame vectors) is
read off the length of ``u``.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import NumericalError, Perturbation
from .integrate import Trajectory, integrate_ode, integrate_sde_stratonovich
from .manifold import ChartError, Manifold
from .numkernel import OptimizerConfig, invert, minimize

__all__ = [
    "pack",
    "unpack",
    "frame_rank",
    "gram_schmidt",
    "horizontal_basis",
    "sub_riemannian_cometric",
    "hamiltonian_fm",
    "hamiltonian_fm_field",
    "exp_fm",
    "curvature_form",
    "omega",
    "development",
    "stochastic_development",
    "MPPResult",
    "mpp",
    "onsager_machlup_integrand",
    "onsager_machlup",
    "orthonormality_error",
]


def pack(x, nu):
    """Flatten ``(x, nu)`` with ``nu`` of shape ``(..., d, r)``."""
    nu_t = ad.einsum("...ia->...ai", nu) if ad.is_jet(nu) else np.swapaxes(np.asarray(nu, dtype=float), -1, -2)
    shape = nu_t.shape
    flat = nu_t.reshape(*shape[:-2], shape[-2] * shape[-1])
    if not ad.is_jet(x) and not ad.is_jet(flat):
        return np.concatenate([np.asarray(x, dtype=float), flat], axis=-1)
    return ad.concatenate([x, flat], axis=-1)


def frame_rank(d: int, n: int) -> int:
    r, rem = divmod(n - d, d)
    if rem or r < 1:
        raise ValueError(f"frame point of length {n} does not fit dimension {d}")
    return r


def unpack(u, d: int):
    """Inverse of :func:`pack`: ``(x, nu)`` with ``nu`` of shape ``(..., d, r)``."""
    n = u.shape[-1]
    r = frame_rank(d, n)
    x = u[..., :d]
    nu_t = u[..., d:].reshape(*u.shape[:-1], r, d)
    nu = ad.einsum("...ai->...ia", nu_t) if ad.is_jet(nu_t) else np.swapaxes(nu_t, -1, -2)
    return x, nu


def gram_schmidt(M: Manifold, x, vectors):
    """g-orthonormalise the columns of ``vectors`` (shape ``(d, r)``) at ``x``."""
    g = ad.value(M.metric(np.asarray(x, dtype=float)))
    V = np.array(vectors, dtype=float, copy=True)
    for a in range(V.shape[1]):
        for b in range(a):
            V[:, a] -= (V[:, b] @ g @ V[:, a]) * V[:, b]
        nrm = np.sqrt(V[:, a] @ g @ V[:, a])
        if nrm < 1e-12:
            raise ValueError("frame vectors are linearly dependent")
        V[:, a] /= nrm
    return V


def _check_frame(M: Manifold, u):
    uv = ad.value(u)
    d = M.dim
    x, nu = unpack(uv, d)
    M.check(x)
    gram = np.einsum("...ia,...ib->...ab", nu, nu)
    if np.any(np.linalg.det(gram) <= 1e-12):
        raise ValueError("frame vectors are (nearly) linearly dependent")


def horizontal_basis(M: Manifold, u):
    """Horizontal fields ``H_a(u)`` as the columns of a ``(d + d r, r)`` matrix.

    ``H_a = nu_a^j d/dx^j - nu_a^j nu_m^l G^k_jl d/dnu_m^k``.
    """
    d = M.dim
    x, nu = unpack(u, d)
    r = nu.shape[-1]
    G = M.christoffel(x)
    Gnu = ad.einsum("...kjl,...lm->...kjm", G, nu)
    V = ad.einsum("...kjm,...ja->...mka", Gnu, nu) * -1.0
    V = V.reshape(*V.shape[:-3], r * d, r)
    if not ad.is_jet(V) and not ad.is_jet(nu):
        return np.concatenate([nu, V], axis=-2)
    return ad.concatenate([nu, V], axis=-2)


def sub_riemannian_cometric(M: Manifold, u):
    """Block cometric ``[[W^-1, -W^-1 G^T], [-G W^-1, G W^-1 G^T]]`` on F M.

    ``(W^-1)^ij = sum_a nu_a^i nu_a^j`` and ``G[(a, k), i] = G^k_ij nu_a^j``.
    """
    d = M.dim
    x, nu = unpack(u, d)
    r = nu.shape[-1]
    G = M.christoffel(x)
    Winv = ad.einsum("...ia,...ja->...ij", nu, nu)
    Gm = ad.einsum("...kij,...ja->...aki", G, nu)
    Gm = Gm.reshape(*Gm.shape[:-3], r * d, d)
    WG = ad.einsum("...ij,...bj->...ib", Winv, Gm)  # W^-1 G^T
    top = ad.concatenate([Winv, -WG], axis=-1)
    bottom = ad.concatenate([-ad.einsum("...ib->...bi", WG), ad.einsum("...ai,...ib->...ab", Gm, WG)], axis=-1)
    return ad.concatenate([top, bottom], axis=-2)


def hamiltonian_fm(M: Manifold, u, p):
    """``H(u, p) = |H(u)^T p|^2 / 2``, the quadratic form of the sub-Riemannian cometric."""
    h = ad.einsum("...na,...n->...a", horizontal_basis(M, u), p)
    return 0.5 * ad.einsum("...a,...a->...", h, h)


def hamiltonian_fm_field(M: Manifold, n: int):
    """Hamilton's equations on F M for a state ``(u, p)`` with ``len(u) == n``."""

    def f(t, s):
        u, p = s[..., :n], s[..., n:]
        pert = Perturbation(u, 1)
        Hb = horizontal_basis(M, pert.point)
        h = ad.einsum("...na,...n->...a", Hb, p)
        ham = 0.5 * ad.einsum("...a,...a->...", h, h)
        du = ad.einsum("...na,...a->...n", pert.drop(Hb), pert.drop(h))
        dp = pert.drop(pert.diff(ham)) * -1.0
        return ad.concatenate([du, dp], axis=-1)
    return f


def _fm_check(M, d):
    def check(k, s):
        if not np.all(M.is_valid(ad.value(s)[..., :d])):
            raise ChartError(f"frame-bundle flow left the chart of {M.name} at step {k}")
    return check


def exp_fm(M: Manifold, u, p, n_steps: int = 100, T: float = 1.0, scheme: str = "rk4") -> Trajectory:
    """Normal sub-Riemannian geodesic from ``(u, p)``; the state is ``(u, p)``.

    ``meta['hamiltonian']`` holds ``H`` along the flow.
    """
    _check_frame(M, u)
    n = np.shape(ad.value(u))[-1]
    if np.shape(ad.value(p))[-1] != n:
        raise ValueError(f"momentum must have length {n}, got {np.shape(ad.value(p))[-1]}")
    s0 = ad.concatenate([u, ad.zeros_like(u) + p], axis=-1)
    traj = integrate_ode(hamiltonian_fm_field(M, n), s0, n_steps, T, scheme, check=_fm_check(M, M.dim))
    vals = traj.values
    traj.meta["hamiltonian"] = hamiltonian_fm(M, vals[..., :n], vals[..., n:])
    traj.meta["frame_size"] = n
    traj.meta["manifold"] = M.name
    return traj


def curvature_form(M: Manifold, u):
    """``R_u[i, j, b, a] = (nu^-1)^b_m R_ijk^m nu^k_a``, the curvature as a gl(d)-valued 2-form."""
    d = M.dim
    x, nu = unpack(u, d)
    if nu.shape[-1] != d:
        raise ValueError("curvature form needs a full frame (r = d)")
    _check_frame(M, u)
    R = M.riemann(x)
    Rnu = ad.einsum("...ijkm,...ka->...ijma", R, nu)
    return ad.einsum("...bm,...ijma->...ijba", invert(nu), Rnu)


def omega(M: Manifold, u, v, w):
    """Curvature form evaluated on chart vectors ``v``, ``w``: a ``(d, d)`` matrix."""
    Ru = curvature_form(M, u)
    return ad.einsum("...i,...iba->...ba", v, ad.einsum("...ijba,...j->...iba", Ru, w))


def _dev_field(M, drift):
    def s(dw, t, u):
        Hb = horizontal_basis(M, u)
        return (np.einsum("...nr,r->...n", Hb, drift),
                np.einsum("...nr,...r->...n", Hb, dw))
    return s


def stochastic_development(M: Manifold, u0, dW, drift=None, dt: float | None = None) -> Trajectory:
    """Stratonovich development ``dU = H(U) drift dt + H(U) o dW`` (Euler-Heun).

    ``dW`` has shape ``(n, r)``, one column per frame vector, or ``(n, P, r)``
    for ``P`` paths developed together (``u0`` is then broadcast to ``(P, len(u0))``).
    ``dt`` defaults to ``1 / n``.
    """
    u0 = np.asarray(u0, dtype=float)
    d = M.dim
    r = frame_rank(d, u0.shape[-1])
    dW = np.asarray(dW, dtype=float)
    if dW.ndim not in (2, 3) or dW.shape[-1] != r:
        raise ValueError(f"increments must have {r} columns, got shape {dW.shape}")
    if dW.ndim == 3:
        u0 = np.broadcast_to(u0, (dW.shape[1], u0.shape[-1])).copy()
    _check_frame(M, u0)
    if dt is None:
        dt = 1.0 / dW.shape[0]
    drift = np.zeros(r) if drift is None else np.asarray(drift, dtype=float)
    if drift.shape != (r,):
        raise ValueError(f"drift must have length {r}")
    traj = integrate_sde_stratonovich(_dev_field(M, drift), u0, dW, dt, check=_fm_check(M, d))
    traj.meta["frame_size"] = u0.shape[-1]
    traj.meta["manifold"] = M.name
    if M.embedding is not None:
        traj.meta["embedded"] = M.embed(traj.values[..., :d])
    return traj


def development(M: Manifold, u0, increments, T: float = 1.0) -> Trajectory:
    """Development of a path in R^r given by its increments over ``[0, T]``."""
    increments = np.asarray(increments, dtype=float)
    if increments.ndim != 2:
        raise ValueError("increments must be an (n, r) matrix")
    return stochastic_development(M, u0, increments, None, T / increments.shape[0])


def orthonormality_error(M: Manifold, u):
    """``|nu^T g nu - I|`` (Frobenius) at each frame point."""
    d = M.dim
    x, nu = unpack(np.asarray(ad.value(u)), d)
    g = ad.value(M.metric(x))
    gram = np.einsum("...ia,...ij,...jb->...ab", nu, g, nu)
    return np.linalg.norm(gram - np.eye(nu.shape[-1]), axis=(-2, -1))


class MPPResult:
    def __init__(self, v, p, traj, loss, converged, iters):
        self.v, self.p, self.traj = v, p, traj
        self.loss, self.converged, self.iters = loss, converged, iters

    def __repr__(self):
        return f"MPPResult(v={self.v!r}, loss={self.loss:.3g}, converged={self.converged})"


def _horizontal_momentum(nu, v):
    """``p = ((nu nu^T)^-1 v, 0)``: the initial velocity of x is ``v``, vertical momentum zero."""
    px = ad.einsum("ij,...j->...i", invert(nu @ nu.T), v)
    pad = np.zeros(np.shape(ad.value(px))[:-1] + (nu.size,))
    return ad.concatenate([px, pad], axis=-1) if ad.is_jet(px) else np.concatenate([px, pad], axis=-1)


def mpp(M: Manifold, u0, y, cfg: OptimizerConfig | None = None, v_init=None, n_steps: int = 100) -> MPPResult:
    """Most probable path of the driving process from ``pi(u0)`` to ``y``.

    Minimises ``|pi(exp_fm(u0, p(v))) - y|^2 / d`` over the chart velocity
    ``v`` with ``p(v) = ((nu nu^T)^-1 v, 0)``.
    """
    u0 = np.asarray(u0, dtype=float)
    d = M.dim
    x0, nu = unpack(u0, d)
    if nu.shape[1] != d:
        raise ValueError("mpp needs a full frame (r = d)")
    _check_frame(M, u0)
    y = np.asarray(y, dtype=float)
    M.check(y)
    if cfg is None:
        cfg = OptimizerConfig(grad_tol=1e-12, max_iters=200, f_target=1e-14)

    def fg(v):
        def loss(vj):
            traj = exp_fm(M, u0, _horizontal_momentum(nu, vj), n_steps)
            r = traj.final[:d] - y
            return ad.einsum("i,i->", r, r) * (1.0 / d)
        try:
            return ad.gradient_of_loss(loss, v)
        except (ChartError, NumericalError):
            return np.inf, np.zeros(d)

    v0 = np.array(y - x0 if v_init is None else v_init, dtype=float)
    res = minimize(fg, None, v0, cfg)
    p = _horizontal_momentum(nu, res.x)
    traj = exp_fm(M, u0, p, n_steps)
    miss = float(np.linalg.norm(traj.values[-1, :d] - y))
    return MPPResult(res.x, p, traj, res.fun, bool(miss <= 1e-4), res.iters)


def onsager_machlup_integrand(M: Manifold, x, v):
    """``-|v|_g^2 / 2 + S(x) / 12``."""
    return -0.5 * ad.value(M.inner(x, v, v)) + ad.value(M.scalar_curvature(x)) / 12.0


def onsager_machlup(M: Manifold, traj: Trajectory) -> float:
    """Trapezoidal quadrature of the integrand along a ``(x, velocity)`` trajectory."""
    d = M.dim
    vals = traj.values
    L = onsager_machlup_integrand(M, vals[:, :d], vals[:, d:2 * d])
    h = np.diff(traj.times)
    return float(np.sum(0.5 * h * (L[1:] + L[:-1])))
