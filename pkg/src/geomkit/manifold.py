"""Chart-based manifolds and the tensors derived from their metric.

A :class:`Manifold` is specified by exactly one of

* an embedding ``F`` of the chart into some R^D (metric ``dF^T dF``),
* a metric function ``x -> g(x)``,
* a cometric function ``x -> g^{-1}(x)``.

Every derived quantity (Christoffel symbols, curvature, ...) is obtained by
running the supplied function on jets, so it must be written with the
operations in :mod:`geomkit.autodiff` (plain numpy arithmetic on jets works;
numpy ufuncs such as ``np.exp`` do not). All methods accept a batch of chart
points ``x`` of shape ``(..., d)``; ``x`` may itself be a jet.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Jet, NumericalError, Perturbation
from .numkernel import invert

__all__ = [
    "ChartError",
    "Manifold",
    "euclidean",
    "sphere_stereographic",
    "ellipsoid",
    "from_id",
]


class ChartError(NumericalError, ValueError):
    """A point left the chart's domain of validity."""


class Manifold:
    def __init__(self, dim: int, *, embedding: Callable | None = None, metric_fn: Callable | None = None,
                 cometric_fn: Callable | None = None, valid: Callable | None = None, name: str = "",
                 embed_dim: int | None = None):
        given = [f is not None for f in (embedding, metric_fn, cometric_fn)]
        if sum(given) != 1:
            raise ValueError("specify exactly one of embedding, metric_fn, cometric_fn")
        self.dim = int(dim)
        self.embedding = embedding
        self.metric_fn = metric_fn
        self.cometric_fn = cometric_fn
        self._valid = valid
        self.name = name or "manifold"
        self.embed_dim = embed_dim

    def __repr__(self):
        return f"Manifold({self.name!r}, dim={self.dim})"

    @property
    def mode(self) -> str:
        if self.embedding is not None:
            return "embedding"
        return "metric" if self.metric_fn is not None else "cometric"

    # -- chart ------------------------------------------------------------
    def is_valid(self, x) -> np.ndarray:
        xv = ad.value(x)
        ok = np.all(np.isfinite(xv), axis=-1)
        if self._valid is not None:
            ok = ok & np.asarray(self._valid(xv), dtype=bool)
        return ok

    def check(self, x):
        if np.shape(ad.value(x))[-1:] != (self.dim,):
            raise ValueError(f"chart point must have last axis {self.dim}, got shape {np.shape(ad.value(x))}")
        if not np.all(self.is_valid(x)):
            raise ChartError(f"point outside the chart of {self.name}")

    def embed(self, x):
        """``F(x)`` for embedded manifolds (float output)."""
        if self.embedding is None:
            raise ValueError(f"{self.name} has no embedding")
        return ad.value(self.embedding(np.asarray(ad.value(x), dtype=float)))

    def dF(self, x):
        """Jacobian of the embedding, shape ``(..., D, d)``."""
        p = Perturbation(x, 1)
        return p.drop(p.diff(self.embedding(p.point)))

    def push(self, x, v):
        """Embedded image ``dF(x) v`` of a chart vector."""
        return ad.einsum("...ai,...i->...a", self.dF(x), v)

    # -- metric -----------------------------------------------------------
    def metric(self, x):
        if self.embedding is not None:
            J = self.dF(x)
            return ad.einsum("...ai,...aj->...ij", J, J)
        if self.metric_fn is not None:
            return self.metric_fn(x)
        return invert(self.cometric_fn(x))

    def cometric(self, x):
        if self.cometric_fn is not None:
            return self.cometric_fn(x)
        return invert(self.metric(x))

    def metric_and_derivative(self, x):
        """``(g, dg)`` with ``dg[..., i, j, l] = d g_ij / d x^l``."""
        p = Perturbation(x, 1)
        if self.cometric_fn is not None:
            cg = self.cometric_fn(p.point)
            dcg = p.diff(cg)
            g = invert(p.drop(cg))
            # d(K^{-1}) = -K^{-1} dK K^{-1}
            dg = -ad.einsum("...ijl,...jk->...ikl", ad.einsum("...ia,...ajl->...ijl", g, p.drop(dcg)), g)
            return g, dg
        g = self.metric(p.point)
        return p.drop(g), p.drop(p.diff(g))

    def christoffel(self, x):
        """Levi-Civita symbols ``G[..., k, i, j]`` (upper index first).

        For embedded manifolds this uses ``G^k_ij = g^kl <d_l F, d_i d_j F>``,
        which equals the metric-derivative formula and needs one jet pass.
        """
        if self.embedding is not None:
            p = Perturbation(x, 2)
            y = self.embedding(p.point)
            d1 = p.diff(y)
            J = p.drop(d1)
            H = p.drop(p.diff(d1))
            g = ad.einsum("...ai,...aj->...ij", J, J)
            return ad.einsum("...kl,...lij->...kij", invert(g), ad.einsum("...al,...aij->...lij", J, H))
        return self.christoffel_from_metric(x)

    def christoffel_from_metric(self, x):
        """Christoffel symbols from first derivatives of the metric."""
        g, dg = self.metric_and_derivative(x)
        ginv = invert(g)
        term = ad.einsum("...jli->...ijl", dg) + ad.einsum("...ilj->...ijl", dg) - dg
        out = ad.einsum("...kl,...ijl->...kij", ginv, term) * 0.5
        return out

    def christoffel_and_derivative(self, x):
        p = Perturbation(x, 1)
        G = self.christoffel(p.point)
        return p.drop(G), p.drop(p.diff(G))

    def riemann(self, x):
        """Curvature tensor ``R[..., i, j, k, m]``, i.e. ``R(d_i, d_j) d_k = R_ijk^m d_m``."""
        G, dG = self.christoffel_and_derivative(x)
        # dG[..., m, j, k, i] = d_i G^m_jk
        return (ad.einsum("...ljk,...mil->...ijkm", G, G)
                - ad.einsum("...lik,...mjl->...ijkm", G, G)
                + ad.einsum("...mjki->...ijkm", dG)
                - ad.einsum("...mikj->...ijkm", dG))

    def ricci(self, x):
        return ad.einsum("...kijk->...ij", self.riemann(x))

    def scalar_curvature(self, x):
        R = self.riemann(x)
        ric = ad.einsum("...kijk->...ij", R)
        return ad.einsum("...ij,...ij->...", self.cometric(x), ric)

    def sectional(self, x, e1, e2):
        """Sectional curvature of the plane spanned by chart vectors ``e1``, ``e2``."""
        g = ad.value(self.metric(x))
        R = ad.value(self.riemann(x))
        e1 = np.asarray(e1, dtype=float)
        e2 = np.asarray(e2, dtype=float)
        Rv = np.einsum("...ijkm,...i,...j,...k->...m", R, e1, e2, e2)
        num = np.einsum("...m,...ml,...l->...", Rv, g, e1)
        a = np.einsum("...i,...ij,...j->...", e1, g, e1)
        b = np.einsum("...i,...ij,...j->...", e2, g, e2)
        c = np.einsum("...i,...ij,...j->...", e1, g, e2)
        den = a * b - c * c
        if np.any(np.abs(den) < 1e-12):
            raise ValueError("tangent vectors are (nearly) parallel")
        return num / den

    def flat(self, x, v):
        return ad.einsum("...ij,...j->...i", self.metric(x), v)

    def sharp(self, x, p):
        return ad.einsum("...ij,...j->...i", self.cometric(x), p)

    def inner(self, x, v, w):
        return ad.einsum("...i,...i->...", ad.einsum("...ij,...j->...i", self.metric(x), v), w)

    def norm(self, x, v):
        return ad.sqrt(self.inner(x, v, v))


# --------------------------------------------------------------------------
# built-in manifolds


def euclidean(d: int) -> Manifold:
    return Manifold(d, embedding=lambda x: x, name=f"euclidean:{d}", embed_dim=d)


def _stereographic(x):
    u, v = x[..., 0], x[..., 1]
    s = u * u + v * v
    inv = 1.0 / (1.0 + s)
    return ad.stack([2.0 * u * inv, 2.0 * v * inv, (s - 1.0) * inv], axis=-1)


def sphere_stereographic() -> Manifold:
    """Unit sphere through the inverse stereographic projection from the north pole."""
    return Manifold(2, embedding=_stereographic, name="sphere-stereographic", embed_dim=3)


def ellipsoid(a: float, b: float, c: float) -> Manifold:
    """Ellipsoid with semi-axes ``(a, b, c)``: the stereographic sphere scaled per axis."""
    if min(a, b, c) <= 0:
        raise ValueError("semi-axes must be positive")
    axes = np.array([a, b, c], dtype=float)
    return Manifold(2, embedding=lambda x: _stereographic(x) * axes,
                    name=f"ellipsoid:{a:g},{b:g},{c:g}", embed_dim=3)


def from_id(ident: str) -> Manifold:
    """Build a named manifold, e.g. ``euclidean:3``, ``ellipsoid:1,0.8,1.2``."""
    name, _, args = ident.strip().partition(":")
    try:
        nums = [float(t) for t in args.split(",")] if args else []
    except ValueError:
        raise ValueError(f"bad manifold parameters in {ident!r}") from None
    if name == "euclidean":
        if len(nums) != 1 or nums[0] < 1 or not nums[0].is_integer():
            raise ValueError("euclidean needs one positive integer dimension, e.g. euclidean:2")
        return euclidean(int(nums[0]))
    if name == "sphere-stereographic":
        if nums:
            raise ValueError("sphere-stereographic takes no parameters")
        return sphere_stereographic()
    if name == "ellipsoid":
        if len(nums) != 3:
            raise ValueError("ellipsoid needs three semi-axes, e.g. ellipsoid:1,0.8,1.2")
        return ellipsoid(*nums)
    if name == "landmarks":
        if len(nums) != 3 or not nums[0].is_integer() or nums[0] < 1:
            raise ValueError("landmarks needs n,sigma,alpha, e.g. landmarks:2,0.1,1")
        from .landmarks import LandmarkConfig, manifold as landmark_manifold
        return landmark_manifold(LandmarkConfig(int(nums[0]), nums[1], nums[2]))
    raise ValueError(f"unknown manifold id {ident!r}")
