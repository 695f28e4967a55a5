"""Matrix Lie group tools, specialised to SO(3) and its algebra so(3).

Algebra vectors are coordinates in the basis ``E_i = hat(e_i)``; dual vectors
are plain 3-vectors paired with the Euclidean dot product. The inertia
operator ``A`` only enters through ``xi = A^{-1} mu``.
"""

from __future__ import annotations

import numpy as np

from .integrate import Trajectory, integrate_ode, integrate_sde_stratonovich
from .numkernel import invert

__all__ = [
    "hat",
    "vee",
    "basis",
    "bracket",
    "structure_constants",
    "translate_left",
    "translate_right",
    "dL",
    "dR",
    "invariant_metric",
    "Ad",
    "ad",
    "coad",
    "euler_poincare",
    "reconstruct",
    "brownian_group",
    "rotation",
    "orthogonality_error",
    "project_to_sphere",
]

N = 3


def hat(v):
    """so(3) matrix with ``hat(v) @ w == cross(v, w)``."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1], out[..., 0, 2] = -v[..., 2], v[..., 1]
    out[..., 1, 0], out[..., 1, 2] = v[..., 2], -v[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -v[..., 1], v[..., 0]
    return out


def vee(m, tol: float = 1e-10):
    m = np.asarray(m, dtype=float)
    if np.any(np.linalg.norm(m + np.swapaxes(m, -1, -2), axis=(-2, -1)) > tol):
        raise ValueError("matrix is not antisymmetric")
    return np.stack([m[..., 2, 1], m[..., 0, 2], m[..., 1, 0]], axis=-1)


def basis():
    return hat(np.eye(3))


def bracket(xi, eta):
    return xi @ eta - eta @ xi


def structure_constants():
    """``C[i, j, k]`` with ``[E_j, E_k] = C[i, j, k] E_i``."""
    E = basis()
    br = bracket(E[:, None], E[None, :])
    return np.moveaxis(vee(br), -1, 0)


def translate_left(a, g):
    return a @ g


def translate_right(a, g):
    return g @ a


def dL(g, v):
    """Differential of left translation by ``g``, applied to a matrix tangent."""
    return g @ v


def dR(g, v):
    return v @ g


def invariant_metric(g, v, w, A):
    """Left-invariant inner product of tangents ``v``, ``w`` at ``g``."""
    ginv = invert(g)
    a = vee(dL(ginv, v), tol=1e-8)
    b = vee(dL(ginv, w), tol=1e-8)
    return np.einsum("...i,ij,...j->...", a, np.asarray(A, dtype=float), b)


def Ad(a, xi):
    return a @ xi @ invert(a)


def ad(xi, eta):
    return bracket(xi, eta)


def coad(xi, mu):
    """Coadjoint action on dual coordinates, ``<coad(xi, mu), eta> = <mu, ad(xi, eta)>``.

    ``xi`` is an algebra vector, ``mu`` a dual vector. For so(3) this is
    ``cross(mu, xi)``.
    """
    C = structure_constants()
    return np.einsum("ijk,...j,...i->...k", C, np.asarray(xi, dtype=float), np.asarray(mu, dtype=float))


def _ep_field(A):
    Ainv = invert(np.asarray(A, dtype=float))

    def f(t, mu):
        return coad(mu @ Ainv.T, mu)
    return f


def euler_poincare(mu0, A, n_steps: int = 100, T: float = 1.0, scheme: str = "rk4") -> Trajectory:
    """Integrate ``dmu/dt = coad(A^{-1} mu, mu)``, the reduced geodesic flow of a left-invariant metric."""
    A = np.asarray(A, dtype=float)
    traj = integrate_ode(_ep_field(A), np.asarray(mu0, dtype=float), n_steps, T, scheme)
    Ainv = invert(A)
    mus = traj.values
    traj.meta["energy"] = 0.5 * np.einsum("ni,ij,nj->n", mus, Ainv, mus)
    traj.meta["casimir"] = np.linalg.norm(mus, axis=-1)
    return traj


def reconstruct(g0, mu_traj: Trajectory, A, scheme: str = "rk4") -> Trajectory:
    """Integrate ``dg/dt = g hat(xi_t)`` with ``xi_t = A^{-1} mu_t`` on the grid of ``mu_traj``.

    RK4 midpoints use cubic Hermite interpolation of ``mu`` with the
    Euler-Poincare velocity. States are flattened row-major (9 columns).
    """
    A = np.asarray(A, dtype=float)
    Ainv = invert(A)
    mus = mu_traj.values
    times = mu_traj.times
    n = len(times) - 1
    h = (times[-1] - times[0]) / n
    dmus = _ep_field(A)(0.0, mus)
    mid = 0.5 * (mus[:-1] + mus[1:]) + h * (dmus[:-1] - dmus[1:]) / 8.0
    allmu = np.empty((2 * n + 1, 3))
    allmu[0::2], allmu[1::2] = mus, mid
    xis = hat(allmu @ Ainv.T)
    t0 = times[0]

    def f(t, gflat):
        j = int(round(2 * (t - t0) / h))
        return (gflat.reshape(3, 3) @ xis[j]).reshape(9)

    g0 = np.asarray(g0, dtype=float)
    traj = integrate_ode(f, g0.reshape(9), n, times[-1] - t0, scheme, t0=t0)
    traj.meta["orthogonality"] = orthogonality_error(traj.values.reshape(-1, 3, 3))
    return traj


def _inv_sqrt(A):
    w, U = np.linalg.eigh(np.asarray(A, dtype=float))
    return (U / np.sqrt(w)) @ U.T


def brownian_group(g0, dW, A=None, dt: float | None = None, reproject: bool = False) -> Trajectory:
    """Brownian motion on SO(3) as a Stratonovich SDE along left-invariant fields.

    The fields are ``X_i(g) = g hat(sigma e_i)`` with ``sigma = A^{-1/2}``
    (an A-orthonormal basis); the drift ``-1/2 sum_ij C^j_ij X_i`` is kept
    although it vanishes for so(3). ``dt`` sets the time grid and scales the
    drift; it defaults to ``1 / len(dW)``. With ``reproject`` each state is
    mapped back to the group by polar decomposition after the step.
    """
    dW = np.asarray(dW, dtype=float)
    if dW.ndim != 2 or dW.shape[1] != 3:
        raise ValueError(f"dW must have 3 columns, got shape {dW.shape}")
    if dt is None:
        dt = 1.0 / dW.shape[0]
    sigma = np.eye(3) if A is None else _inv_sqrt(A)
    C = structure_constants()
    trace = np.einsum("jij->i", C)
    Xalg = hat(sigma.T)  # Xalg[i] = hat(sigma e_i)

    def s(dw, t, gflat):
        g = gflat.reshape(3, 3)
        X = g @ Xalg
        det = -0.5 * np.einsum("i,iab->ab", trace, X)
        sto = np.einsum("i,iab->ab", dw, X)
        return det.reshape(9), sto.reshape(9)

    g0 = np.asarray(g0, dtype=float)
    if not reproject:
        traj = integrate_sde_stratonovich(s, g0.reshape(9), dW, dt)
    else:
        states = [g0.reshape(9)]
        g = g0.reshape(9)
        for k in range(dW.shape[0]):
            step = integrate_sde_stratonovich(s, g, dW[k:k + 1], dt, t0=k * dt)
            g = _polar(step.values[-1].reshape(3, 3)).reshape(9)
            states.append(g)
        traj = Trajectory(np.arange(dW.shape[0] + 1) * dt, np.stack(states), {"scheme": "euler-heun"})
    traj.meta["reprojected"] = reproject
    traj.meta["orthogonality"] = orthogonality_error(traj.values.reshape(-1, 3, 3))
    return traj


def _polar(m):
    U, _, Vt = np.linalg.svd(m)
    return U @ Vt


def rotation(axis, angle):
    """Rodrigues rotation matrix."""
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    K = hat(k)
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K


def orthogonality_error(g):
    g = np.asarray(g, dtype=float)
    return np.linalg.norm(np.swapaxes(g, -1, -2) @ g - np.eye(3), axis=(-2, -1))


def project_to_sphere(gs, x=None):
    """Image ``g x`` of a point on S^2 under each group element (default: the columns of g)."""
    gs = np.asarray(gs, dtype=float).reshape(-1, 3, 3)
    if x is None:
        return gs
    return gs @ np.asarray(x, dtype=float)
