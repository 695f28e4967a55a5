"""Small dense linear algebra, a quasi-Newton minimiser and seeded normals.

Everything here accepts a leading batch of problems where that is cheap to
support (``invert``, ``solve``), because the geometry code evaluates metrics at
many chart points at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Jet, NumericalError

__all__ = [
    "SingularMatrixError",
    "invert",
    "solve",
    "contract",
    "OptimizerConfig",
    "OptimizeResult",
    "minimize",
    "newton_solve",
    "levenberg_marquardt",
    "NormalStream",
    "gaussian_increments",
]

PIVOT_RTOL = 1e-13


class SingularMatrixError(NumericalError):
    pass


# --------------------------------------------------------------------------
# LU with partial pivoting


def _lu(m: np.ndarray):
    """Batched LU factorisation ``P m = L U`` stored compactly in one array."""
    a = np.array(m, dtype=float)
    n = a.shape[-1]
    if a.ndim < 2 or a.shape[-2] != n:
        raise ValueError(f"expected square matrices, got shape {a.shape}")
    flat = a.reshape(-1, n, n)
    B = flat.shape[0]
    thresh = PIVOT_RTOL * np.abs(flat).max(axis=(1, 2))
    perm = np.tile(np.arange(n), (B, 1))
    rows = np.arange(B)
    for k in range(n):
        col = np.abs(flat[:, k:, k])
        piv = col.argmax(axis=1)
        if not (col[rows, piv] > thresh).all():
            raise SingularMatrixError("matrix is singular to working precision")
        if piv.any():
            r = rows[piv > 0]
            p = piv[piv > 0] + k
            flat[r, k], flat[r, p] = flat[r, p], flat[r, k].copy()
            perm[r, k], perm[r, p] = perm[r, p], perm[r, k].copy()
        if k + 1 < n:
            flat[:, k + 1:, k] /= flat[:, k:k + 1, k]
            flat[:, k + 1:, k + 1:] -= flat[:, k + 1:, k:k + 1] * flat[:, k:k + 1, k + 1:]
    return flat, perm


def _lu_solve(flat, perm, b):
    # b: (batch, n, m)
    n = flat.shape[-1]
    y = np.take_along_axis(b, perm[:, :, None], axis=1)
    for k in range(n - 1):
        y[:, k + 1:] -= flat[:, k + 1:, k:k + 1] * y[:, k:k + 1]
    for k in range(n - 1, -1, -1):
        y[:, k] /= flat[:, k, k:k + 1]
        if k:
            y[:, :k] -= flat[:, :k, k:k + 1] * y[:, k:k + 1]
    return y


def _invert_float(m):
    m = np.asarray(m, dtype=float)
    if not np.isfinite(m).all():
        raise NumericalError("matrix has non-finite entries")
    flat, perm = _lu(m)
    eye = np.zeros(flat.shape)
    eye[:, np.arange(m.shape[-1]), np.arange(m.shape[-1])] = 1.0
    return _lu_solve(flat, perm, eye).reshape(m.shape)


def invert(m):
    """Inverse of a square matrix (or a stack of them) by pivoted LU.

    Jet-valued matrices are inverted through the Neumann series of the
    nilpotent part, which terminates after ``order`` terms.
    """
    if not isinstance(m, Jet):
        return _invert_float(m)
    m0 = np.ascontiguousarray(m.value)
    a = _invert_float(m0)
    nil = m - m0
    term = ad.promote(a, m.space)
    out = term
    for _ in range(m.space.order):
        term = -ad.matmul(ad.matmul(term, nil), a)
        out = out + term
    out.coeffs[..., 0] = a
    return out


def solve(a, b):
    """Solve ``a x = b`` for float ``a`` with vector or matrix ``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    vec = b.ndim == 1 or b.ndim == a.ndim - 1
    bb = b[..., None] if vec else b
    flat, pflat = _lu(a)
    n = a.shape[-1]
    bshape = np.broadcast_shapes(bb.shape[:-2], a.shape[:-2]) + bb.shape[-2:]
    bflat = np.broadcast_to(bb, bshape).reshape(-1, n, bb.shape[-1]).copy()
    x = _lu_solve(flat, pflat, bflat).reshape(bshape)
    return x[..., 0] if vec else x


# --------------------------------------------------------------------------
# contraction

_LETTERS = "abcdefghijklmnopqrstuvwxy"


def contract(a, b, axes):
    """Tensordot-style contraction: pair ``axes[0][k]`` of ``a`` with ``axes[1][k]`` of ``b``.

    Free axes of ``a`` come first in the result, then free axes of ``b``.
    Works on jets as well as arrays.
    """
    axes_a, axes_b = axes
    if np.isscalar(axes_a):
        axes_a, axes_b = (axes_a,), (axes_b,)
    axes_a = [k % len(np.shape(a) if not isinstance(a, Jet) else a.shape) for k in axes_a]
    shape_a = a.shape if isinstance(a, Jet) else np.shape(a)
    shape_b = b.shape if isinstance(b, Jet) else np.shape(b)
    axes_b = [k % len(shape_b) for k in axes_b]
    if len(axes_a) != len(axes_b):
        raise ValueError("axes lists differ in length")
    for i, j in zip(axes_a, axes_b):
        if shape_a[i] != shape_b[j]:
            raise ValueError(f"axis length mismatch: a axis {i} has {shape_a[i]}, b axis {j} has {shape_b[j]}")
    if len(shape_a) + len(shape_b) > len(_LETTERS):
        raise ValueError("too many axes")
    sa = list(_LETTERS[:len(shape_a)])
    sb = list(_LETTERS[len(shape_a):len(shape_a) + len(shape_b)])
    for i, j in zip(axes_a, axes_b):
        sb[j] = sa[i]
    out = [c for k, c in enumerate(sa) if k not in axes_a] + [c for k, c in enumerate(sb) if k not in axes_b]
    return ad.einsum(f"{''.join(sa)},{''.join(sb)}->{''.join(out)}", a, b)


# --------------------------------------------------------------------------
# limited-memory BFGS


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 500
    grad_tol: float = 1e-8
    step_tol: float = 1e-14
    memory: int = 10
    f_target: float | None = None  # stop (converged) once the loss reaches this value

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not (self.grad_tol > 0 and self.step_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.memory < 1:
            raise ValueError("memory must be at least 1")


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    converged: bool
    iters: int
    grad_norm: float = math.nan
    message: str = ""
    history: list = field(default_factory=list)

    def __iter__(self):
        # allows ``x, f, ok, n = minimize(...)``
        return iter((self.x, self.fun, self.converged, self.iters))


def _two_loop(g, S, Y):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q -= a * y
        alphas.append((rho, a))
    if S:
        q *= (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
    for (s, y), (rho, a) in zip(zip(S, Y), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def minimize(loss, grad, x0, cfg: OptimizerConfig | None = None) -> OptimizeResult:
    """Minimise ``loss`` by L-BFGS with an Armijo backtracking line search.

    ``grad`` may be ``None``, in which case ``loss`` must return ``(f, g)``.
    Accepted steps never increase the loss. After an Armijo-acceptable step
    the line search takes secant steps on the directional derivative while
    they keep lowering the loss, which makes it exact on quadratics.
    """
    cfg = cfg or OptimizerConfig()
    if grad is None:
        fg = lambda z: loss(z)
    else:
        fg = lambda z: (loss(z), grad(z))

    x = np.array(x0, dtype=float, copy=True)
    f, g = fg(x)
    f = float(f)
    g = np.asarray(g, dtype=float)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise NumericalError("loss or gradient is not finite at the initial point")
    history = [f]
    S, Y = [], []
    gnorm = float(np.linalg.norm(g))
    if gnorm <= cfg.grad_tol or (cfg.f_target is not None and f <= cfg.f_target):
        return OptimizeResult(x, f, True, 0, gnorm, "tolerance met at start", history)

    def phi(alpha, d):
        xa = x + alpha * d
        try:
            fa, ga = fg(xa)
        except (NumericalError, FloatingPointError):
            return xa, math.inf, None
        fa = float(fa)
        ga = np.asarray(ga, dtype=float)
        if not (np.isfinite(fa) and np.all(np.isfinite(ga))):
            return xa, math.inf, None
        return xa, fa, ga

    for it in range(1, cfg.max_iters + 1):
        d = _two_loop(g, S, Y)
        slope = float(g @ d)
        if not slope < 0:
            S.clear()
            Y.clear()
            d = -g
            slope = -gnorm ** 2
        alpha = 1.0 if S else min(1.0, 1.0 / gnorm)

        # Armijo backtracking
        for _ in range(51):
            xa, fa, ga = phi(alpha, d)
            if fa <= f + 1e-4 * alpha * slope:
                break
            alpha *= 0.5
        else:
            return OptimizeResult(x, f, False, it - 1, gnorm, "line search failed after 50 halvings", history)

        # secant refinement along d
        a_prev, s_prev = 0.0, slope
        for _ in range(8):
            sa = float(ga @ d)
            if abs(sa) <= 1e-2 * abs(slope) or sa == s_prev:
                break
            a_new = alpha - sa * (alpha - a_prev) / (sa - s_prev)
            if not (np.isfinite(a_new) and a_new > 0):
                break
            xb, fb, gb = phi(a_new, d)
            if not fb <= fa:
                break
            a_prev, s_prev = alpha, sa
            alpha, xa, fa, ga = a_new, xb, fb, gb

        s = xa - x
        y = ga - g
        x, f, g = xa, fa, ga
        history.append(f)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= cfg.grad_tol:
            return OptimizeResult(x, f, True, it, gnorm, "gradient tolerance met", history)
        if cfg.f_target is not None and f <= cfg.f_target:
            return OptimizeResult(x, f, True, it, gnorm, "loss target reached", history)
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
            if len(S) > cfg.memory:
                S.pop(0)
                Y.pop(0)
        if np.linalg.norm(s) <= cfg.step_tol * (1.0 + np.linalg.norm(x)):
            return OptimizeResult(x, f, False, it, gnorm, "step below step_tol", history)
    return OptimizeResult(x, f, False, cfg.max_iters, gnorm, "max_iters reached", history)


def newton_solve(residual_and_jac, x0, tol: float = 1e-12, max_iters: int = 50, residual=None):
    """Newton iteration for a square system ``r(x) = 0``.

    ``residual_and_jac(x)`` returns ``(r, J)``. Steps are halved until the
    residual norm decreases; when the cheaper ``residual(x)`` is given it is
    used for the trial points and the Jacobian is only formed at accepted
    ones. Returns ``(x, |r|, converged, iters)``.
    """
    x = np.array(x0, dtype=float, copy=True)
    r, J = residual_and_jac(x)
    rn = float(np.linalg.norm(r))
    if not np.isfinite(rn):
        raise NumericalError("residual is not finite at the initial point")
    trial = residual if residual is not None else (lambda z: residual_and_jac(z)[0])
    for it in range(1, max_iters + 1):
        if rn <= tol:
            return x, rn, True, it - 1
        try:
            step = solve(J, r)
        except SingularMatrixError:
            return x, rn, False, it - 1
        t = 1.0
        for _ in range(30):
            xn = x - t * step
            try:
                rr = trial(xn)
                rn_new = float(np.linalg.norm(rr))
            except NumericalError:
                rn_new = math.inf
            if rn_new < rn:
                break
            t *= 0.5
        else:
            return x, rn, False, it
        x, rn = xn, rn_new
        if rn <= tol:
            return x, rn, True, it
        r, J = residual_and_jac(x)
    return x, rn, rn <= tol, max_iters


def levenberg_marquardt(residual, jacobian, x0, tol: float = 1e-12, max_iters: int = 100,
                        lam0: float = 1e-3, max_rejects: int = 40):
    """Damped Gauss-Newton for ``min |r(x)|^2`` with Marquardt's diagonal scaling.

    ``jacobian`` may be an approximation; only ``residual`` decides whether
    a step is accepted. Stops once ``|r| <= tol``. Returns
    ``(x, |r|, converged, iters)``.
    """
    x = np.array(x0, dtype=float, copy=True)
    r = np.asarray(residual(x), dtype=float)
    rn = float(np.linalg.norm(r))
    if not np.isfinite(rn):
        raise NumericalError("residual is not finite at the initial point")
    lam = lam0
    for it in range(1, max_iters + 1):
        if rn <= tol:
            return x, rn, True, it - 1
        J = np.asarray(jacobian(x), dtype=float)
        A = J.T @ J
        g = J.T @ r
        D = np.diag(np.maximum(np.diag(A), 1e-300))
        for _ in range(max_rejects):
            try:
                step = solve(A + lam * D, g)
                xn = x - step
                rr = np.asarray(residual(xn), dtype=float)
                rn_new = float(np.linalg.norm(rr))
            except NumericalError:
                rn_new = math.inf
            if rn_new < rn:
                break
            lam *= 4.0
        else:
            return x, rn, False, it
        x, r, rn = xn, rr, rn_new
        lam = max(lam / 4.0, 1e-12)
    return x, rn, rn <= tol, max_iters


# --------------------------------------------------------------------------
# random numbers


class NormalStream:
    """Standard normals from the Philox-4x64 counter generator via Box-Muller.

    ``index`` selects an independent stream for the same seed (it becomes the
    high word of the Philox key), so path ``k`` of a Monte Carlo run is
    reproducible on its own. A stream object is single-owner.
    """

    def __init__(self, seed: int, index: int = 0):
        if seed < 0 or index < 0:
            raise ValueError("seed and index must be non-negative")
        self.seed = int(seed)
        self.index = int(index)
        self._bits = np.random.Philox(key=(self.seed % (1 << 64)) + (self.index << 64))

    def uniform(self, n: int) -> np.ndarray:
        """``n`` doubles uniform on (0, 1], 53 random bits each."""
        raw = self._bits.random_raw(n)
        return ((raw >> np.uint64(11)).astype(float) + 1.0) * (1.0 / 9007199254740992.0)

    def normal(self, shape) -> np.ndarray:
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape))
        m = (n + 1) // 2
        u1 = self.uniform(m)
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log(u1))
        th = 2.0 * np.pi * u2
        z = np.empty(2 * m)
        z[0::2] = r * np.cos(th)
        z[1::2] = r * np.sin(th)
        return z[:n].reshape(shape)


def gaussian_increments(dim: int, n_steps: int, dt: float, seed: int, index: int = 0) -> np.ndarray:
    """Brownian increments, an ``(n_steps, dim)`` array of N(0, dt) entries."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if n_steps < 1 or dim < 1:
        raise ValueError("n_steps and dim must be at least 1")
    return math.sqrt(dt) * NormalStream(seed, index).normal((int(n_steps), int(dim)))
