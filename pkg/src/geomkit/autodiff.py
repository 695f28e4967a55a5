"""Forward-mode differentiation with truncated multivariate Taylor jets.

A :class:`Jet` is a numpy-style array whose every entry carries a truncated
Taylor polynomial in a fixed set of seed variables. Coefficients are stored in
Taylor normalisation (``c_alpha = d^alpha f / alpha!``) along the last axis of
``Jet.coeffs``, so products are plain polynomial convolutions.

Seed variables come in *groups*. Each group has its own degree cap, and the
space has a total-degree cap. Nesting a fresh group on top of an existing jet
(see :class:`Perturbation`) is how derivatives of derivatives are taken: the
geometry code differentiates the metric with respect to the chart point while
that point is itself a jet in optimisation parameters.

Partials are exact up to roundoff. Checked against central differences, the
agreement expected for smooth maps is listed in :data:`FD_TOLERANCES`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "FD_TOLERANCES",
    "JetDomainError",
    "NumericalError",
    "JetSpace",
    "Jet",
    "SmoothMap",
    "Perturbation",
    "seed",
    "value",
    "is_jet",
    "exp",
    "log",
    "sin",
    "cos",
    "sqrt",
    "power",
    "einsum",
    "stack",
    "concatenate",
    "jacobian",
    "higher_derivative",
    "gradient_of_loss",
]

# derivative order -> (central-difference step, max relative error |jet - fd| / max(1, |fd|))
FD_TOLERANCES = {1: (1e-5, 1e-6), 2: (1e-4, 1e-4), 3: (1e-3, 1e-2)}


class NumericalError(ArithmeticError):
    """A computation produced a non-finite or otherwise unusable number."""


class JetDomainError(NumericalError, ValueError):
    """An elementary function was evaluated at a singular point of a jet."""


# --------------------------------------------------------------------------
# index spaces


class JetSpace:
    """Set of monomials a jet keeps, plus the tables needed to multiply them.

    Parameters
    ----------
    groups : tuple of (n_vars, cap)
        Seed-variable groups. Variables are numbered consecutively across
        groups. A monomial is kept when its degree within each group is at most
        that group's cap and its total degree is at most ``order``.
    order : int
        Total-degree truncation.
    """

    def __init__(self, groups: tuple[tuple[int, int], ...], order: int):
        self.groups = tuple((int(n), int(c)) for n, c in groups)
        self.order = int(order)
        self.n_vars = sum(n for n, _ in self.groups)
        self.monomials = self._enumerate()
        self.size = len(self.monomials)
        self.index = {m: i for i, m in enumerate(self.monomials)}
        self.degree = np.array([sum(p for _, p in m) for m in self.monomials])
        self.factorial = np.array(
            [math.prod(math.factorial(p) for _, p in m) for m in self.monomials],
            dtype=float,
        )
        self._mul = None
        self._group_diff = {}
        self._embed = {}

    def __repr__(self):
        return f"JetSpace(groups={self.groups}, order={self.order})"

    def _enumerate(self):
        per_group = []
        offset = 0
        for n, cap in self.groups:
            terms = []
            for deg in range(min(cap, self.order) + 1):
                for combo in itertools.combinations_with_replacement(range(offset, offset + n), deg):
                    counts = {}
                    for v in combo:
                        counts[v] = counts.get(v, 0) + 1
                    terms.append((deg, tuple(sorted(counts.items()))))
            per_group.append(terms)
            offset += n
        monos = []
        for parts in itertools.product(*per_group):
            deg = sum(p[0] for p in parts)
            if deg <= self.order:
                monos.append((deg, tuple(itertools.chain.from_iterable(p[1] for p in parts))))
        monos.sort(key=lambda t: (t[0], t[1]))
        return [m for _, m in monos]

    @property
    def mul_table(self):
        """Pairs ``(I, J)`` with ``mono[I] * mono[J] == mono[k]``, grouped by k.

        ``starts[k]`` is where the block for output k begins; the pair
        ``(0, k)`` is always present so every block is non-empty.
        """
        if self._mul is None:
            I, J, starts = [], [], []
            for k, mono in enumerate(self.monomials):
                starts.append(len(I))
                vars_ = [v for v, _ in mono]
                for pows in itertools.product(*(range(p + 1) for _, p in mono)):
                    left = tuple((v, q) for v, q in zip(vars_, pows) if q)
                    right = tuple((v, p - q) for (v, p), q in zip(mono, pows) if p - q)
                    I.append(self.index[left])
                    J.append(self.index[right])
            self._mul = (np.array(I), np.array(J), np.array(starts))
        return self._mul

    def group_offset(self, g: int) -> int:
        return sum(n for n, _ in self.groups[:g])

    def diff_table(self, g: int):
        """Arrays ``(var_local, src, dst, factor)`` for d/d(var) of group g."""
        if g not in self._group_diff:
            off = self.group_offset(g)
            n = self.groups[g][0]
            vl, src, dst, fac = [], [], [], []
            for k, mono in enumerate(self.monomials):
                for v, p in mono:
                    if off <= v < off + n:
                        lower = tuple((w, q - (w == v)) for w, q in mono if not (w == v and q == 1))
                        vl.append(v - off)
                        src.append(k)
                        dst.append(self.index[lower])
                        fac.append(float(p))
            self._group_diff[g] = tuple(np.array(a, dtype=t) for a, t in
                                        ((vl, int), (src, int), (dst, int), (fac, float)))
        return self._group_diff[g]

    def embedding(self, small: "JetSpace") -> np.ndarray:
        """Positions of ``small``'s monomials inside this space.

        Monomials of ``small`` whose degree exceeds this space's order are
        dropped; the returned pair is ``(src_in_small, dst_in_self)``.
        """
        key = (small.groups, small.order)
        if key not in self._embed:
            src, dst = [], []
            for i, m in enumerate(small.monomials):
                j = self.index.get(m)
                if j is not None:
                    src.append(i)
                    dst.append(j)
            self._embed[key] = (np.array(src, dtype=int), np.array(dst, dtype=int))
        return self._embed[key]

    def contains(self, other: "JetSpace") -> bool:
        k = len(other.groups)
        return self.groups[:k] == other.groups and self.order >= other.order

    def extend(self, n_vars: int, cap: int) -> "JetSpace":
        return get_space(self.groups + ((n_vars, cap),), self.order + cap)

    def base(self) -> "JetSpace":
        """The space this one was extended from (last group removed)."""
        return get_space(self.groups[:-1], self.order - self.groups[-1][1])


@lru_cache(maxsize=None)
def get_space(groups: tuple[tuple[int, int], ...], order: int) -> JetSpace:
    return JetSpace(groups, order)


SCALAR = get_space((), 0)


# --------------------------------------------------------------------------
# the jet array


def _as_array(x):
    return np.asarray(x, dtype=float)


class Jet:
    """Array of truncated Taylor polynomials sharing one :class:`JetSpace`.

    Behaves like a float ndarray of shape ``coeffs.shape[:-1]`` under
    arithmetic, indexing and the module-level functions (:func:`exp`,
    :func:`einsum`, ...). Instances are treated as immutable.
    """

    __array_ufunc__ = None  # make ndarray defer to our reflected operators

    def __init__(self, space: JetSpace, coeffs):
        self.space = space
        self.coeffs = coeffs

    # -- basic attributes -------------------------------------------------
    @property
    def shape(self):
        return self.coeffs.shape[:-1]

    @property
    def ndim(self):
        return self.coeffs.ndim - 1

    @property
    def value(self) -> np.ndarray:
        return self.coeffs[..., 0]

    def __len__(self):
        return self.shape[0]

    def __repr__(self):
        return f"Jet(shape={self.shape}, space={self.space})\nvalue={self.value!r}"

    def partials(self) -> np.ndarray:
        """Coefficients rescaled to partial derivatives ``d^alpha f``."""
        return self.coeffs * self.space.factorial

    def gradient(self) -> np.ndarray:
        """First partials with respect to every seed variable (last axis)."""
        out = np.zeros(self.shape + (self.space.n_vars,))
        for v in range(self.space.n_vars):
            k = self.space.index.get(((v, 1),))
            if k is not None:
                out[..., v] = self.coeffs[..., k]
        return out

    def truncate(self, order: int) -> "Jet":
        """Drop every monomial of total degree above ``order``."""
        space = get_space(self.space.groups, min(order, self.space.order))
        src, dst = space.embedding(self.space)
        coeffs = np.zeros(self.shape + (space.size,))
        coeffs[..., dst] = self.coeffs[..., src]
        return Jet(space, coeffs)

    # -- shape manipulation ------------------------------------------------
    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        if any(k is Ellipsis for k in key):
            return Jet(self.space, self.coeffs[key + (slice(None),)])
        return Jet(self.space, self.coeffs[key + (Ellipsis, slice(None))])

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Jet(self.space, self.coeffs.reshape(tuple(shape) + (self.space.size,)))

    def transpose(self, *axes):
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        axes = tuple(a % self.ndim for a in axes)
        return Jet(self.space, self.coeffs.transpose(axes + (self.ndim,)))

    @property
    def T(self):
        return self.transpose()

    def swapaxes(self, a, b):
        a, b = a % self.ndim, b % self.ndim
        return Jet(self.space, np.swapaxes(self.coeffs, a, b))

    def sum(self, axis=None):
        if axis is None:
            axis = tuple(range(self.ndim))
        axes = (axis,) if np.isscalar(axis) else tuple(axis)
        axes = tuple(a % self.ndim for a in axes)
        coeffs = self.coeffs.sum(axis=axes)
        coeffs[..., 0] = np.sum(np.ascontiguousarray(self.value), axis=axes)
        return Jet(self.space, coeffs)

    def broadcast_to(self, shape):
        return Jet(self.space, np.broadcast_to(self.coeffs, tuple(shape) + (self.space.size,)))

    # -- arithmetic -------------------------------------------------------
    def _widened(self, other: np.ndarray) -> np.ndarray:
        # fresh coefficient array broadcast against a float operand
        if other.ndim == 0 or other.shape == self.shape:
            return self.coeffs.copy()
        shape = np.broadcast_shapes(self.shape, other.shape) + (self.space.size,)
        return np.array(np.broadcast_to(self.coeffs, shape))

    def __neg__(self):
        return Jet(self.space, -self.coeffs)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Jet):
            a, b = _common(self, other)
            return Jet(a.space, a.coeffs + b.coeffs)
        other = _as_array(other)
        coeffs = self._widened(other)
        coeffs[..., 0] = self.value + other
        return Jet(self.space, coeffs)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet):
            a, b = _common(self, other)
            return Jet(a.space, a.coeffs - b.coeffs)
        other = _as_array(other)
        coeffs = self._widened(other)
        coeffs[..., 0] = self.value - other
        return Jet(self.space, coeffs)

    def __rsub__(self, other):
        other = _as_array(other)
        coeffs = -np.broadcast_to(self.coeffs, np.broadcast_shapes(self.shape, other.shape)
                                  + (self.space.size,))
        coeffs[..., 0] = other - self.value
        return Jet(self.space, coeffs)

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b = _common(self, other)
            return Jet(a.space, _mul_coeffs(a.space, a.coeffs, b.coeffs))
        other = _as_array(other)
        return Jet(self.space, self.coeffs * other[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            a, b = _common(self, other)
            out = a * reciprocal(b)
            out.coeffs[..., 0] = a.value / b.value
            return out
        other = _as_array(other)
        return Jet(self.space, self.coeffs / other[..., None])

    def __rtruediv__(self, other):
        other = _as_array(other)
        out = reciprocal(self) * other
        out.coeffs[..., 0] = other / self.value
        return out

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


def _common(a: Jet, b: Jet):
    if a.space is b.space:
        return a, b
    if a.space.contains(b.space):
        return a, promote(b, a.space)
    if b.space.contains(a.space):
        return promote(a, b.space), b
    raise ValueError(f"incompatible jet spaces {a.space} and {b.space}")


def promote(x, space: JetSpace) -> Jet:
    """Embed a float array or a jet from a sub-space into ``space``."""
    if isinstance(x, Jet):
        if x.space is space:
            return x
        if not space.contains(x.space):
            raise ValueError(f"cannot promote {x.space} into {space}")
        src, dst = space.embedding(x.space)
        coeffs = np.zeros(x.shape + (space.size,))
        coeffs[..., dst] = x.coeffs[..., src]
        return Jet(space, coeffs)
    x = _as_array(x)
    coeffs = np.zeros(x.shape + (space.size,))
    coeffs[..., 0] = x
    return Jet(space, coeffs)


def _mul_coeffs(space: JetSpace, a, b):
    if space.order == 0:
        return a * b
    if space.order == 1:
        out = a[..., :1] * b
        out[..., 1:] += b[..., :1] * a[..., 1:]
        return out
    I, J, starts = space.mul_table
    prod = a[..., I] * b[..., J]
    return np.add.reduceat(prod, starts, axis=-1)


def is_jet(x) -> bool:
    return isinstance(x, Jet)


def value(x) -> np.ndarray:
    """Order-zero part of a jet, or the float array itself."""
    return x.value if isinstance(x, Jet) else np.asarray(x, dtype=float)


def seed(x, cap: int = 1) -> Jet:
    """Seed every entry of the last axis of ``x`` as an independent variable."""
    return Perturbation(x, cap).point


# --------------------------------------------------------------------------
# elementary functions


def _compose(x: Jet, taylor: Sequence[np.ndarray]) -> Jet:
    """Evaluate ``sum_n taylor[n] * (x - x0)**n`` (Horner), ``taylor[0] = f(x0)``."""
    if len(taylor) == 2:
        coeffs = x.coeffs * np.asarray(taylor[1])[..., None]
        coeffs[..., 0] = taylor[0]
        return Jet(x.space, coeffs)
    h = Jet(x.space, x.coeffs.copy())
    h.coeffs[..., 0] = 0.0
    n = len(taylor) - 1
    out = promote(taylor[n], x.space)
    for k in range(n - 1, -1, -1):
        out = h * out + taylor[k]
    out.coeffs[..., 0] = taylor[0]
    return out


def _check_finite_domain(ok, name):
    if not np.all(ok):
        raise JetDomainError(f"{name} evaluated at a singular point of a jet")


def exp(x):
    if not isinstance(x, Jet):
        return np.exp(x)
    e = np.exp(x.value)
    return _compose(x, [e / math.factorial(k) for k in range(x.space.order + 1)])


def log(x):
    if not isinstance(x, Jet):
        return np.log(x)
    x0 = x.value
    _check_finite_domain(x0 > 0, "log")
    taylor = [np.log(x0)]
    for k in range(1, x.space.order + 1):
        taylor.append((-1.0) ** (k + 1) / (k * x0 ** k))
    return _compose(x, taylor)


def sin(x):
    if not isinstance(x, Jet):
        return np.sin(x)
    s, c = np.sin(x.value), np.cos(x.value)
    cycle = [s, c, -s, -c]
    return _compose(x, [cycle[k % 4] / math.factorial(k) for k in range(x.space.order + 1)])


def cos(x):
    if not isinstance(x, Jet):
        return np.cos(x)
    s, c = np.sin(x.value), np.cos(x.value)
    cycle = [c, -s, -c, s]
    return _compose(x, [cycle[k % 4] / math.factorial(k) for k in range(x.space.order + 1)])


def reciprocal(x):
    if not isinstance(x, Jet):
        return 1.0 / x
    x0 = x.value
    _check_finite_domain(x0 != 0, "division")
    inv = 1.0 / x0
    taylor = [inv]
    for k in range(1, x.space.order + 1):
        taylor.append(-taylor[-1] * inv)
    return _compose(x, taylor)


def power(x, p):
    """``x ** p`` for a real exponent ``p``; non-negative integers use repeated products."""
    if not isinstance(x, Jet):
        return np.power(x, p)
    if float(p).is_integer() and p >= 0:
        n = int(p)
        out = promote(np.ones(x.shape), x.space)
        base = x
        while n:
            if n & 1:
                out = out * base
            n >>= 1
            if n:
                base = base * base
        out.coeffs[..., 0] = x.value ** p
        return out
    x0 = x.value
    _check_finite_domain(x0 > 0, "power")
    taylor = [np.power(x0, p)]
    coef = 1.0
    for k in range(1, x.space.order + 1):
        coef *= (p - k + 1) / k
        taylor.append(coef * np.power(x0, p - k))
    return _compose(x, taylor)


def sqrt(x):
    if not isinstance(x, Jet):
        return np.sqrt(x)
    _check_finite_domain(x.value > 0, "sqrt")
    out = power(x, 0.5)
    out.coeffs[..., 0] = np.sqrt(x.value)
    return out


# --------------------------------------------------------------------------
# contractions and assembly


def _fresh_letter(*specs):
    used = set("".join(specs))
    for c in "zyxwvutsrqponmlkjihgfedcbaZYXWVUTSRQPONMLKJIHGFEDCBA":
        if c not in used:
            return c
    raise ValueError("einsum subscripts exhaust the alphabet")


@lru_cache(maxsize=None)
def _einsum_specs(subscripts: str):
    inputs, out = subscripts.replace(" ", "").split("->")
    z = _fresh_letter(inputs, out)
    if "," not in inputs:
        return (f"{inputs}{z}->{out}{z}",)
    sa, sb = inputs.split(",")
    return (f"{sa}{z},{sb}->{out}{z}", f"{sa},{sb}{z}->{out}{z}", f"{sa}{z},{sb}{z}->{out}{z}")


def einsum(subscripts: str, a, b=None):
    """Two-operand (or one-operand) ``np.einsum`` accepting jets.

    ``subscripts`` must name the output explicitly (``'ij,jk->ik'``);
    ``...`` is allowed for leading batch axes.
    """
    if b is None:
        if not isinstance(a, Jet):
            return np.einsum(subscripts, a)
        coeffs = np.einsum(_einsum_specs(subscripts)[0], a.coeffs)
        coeffs[..., 0] = np.einsum(subscripts, np.ascontiguousarray(a.value))
        return Jet(a.space, coeffs)
    ja, jb = isinstance(a, Jet), isinstance(b, Jet)
    if not ja and not jb:
        return np.einsum(subscripts, a, b)
    left, right, both = _einsum_specs(subscripts)
    if ja and not jb:
        coeffs = np.einsum(left, a.coeffs, b)
        coeffs[..., 0] = np.einsum(subscripts, np.ascontiguousarray(a.value), b)
        return Jet(a.space, coeffs)
    if jb and not ja:
        coeffs = np.einsum(right, a, b.coeffs)
        coeffs[..., 0] = np.einsum(subscripts, a, np.ascontiguousarray(b.value))
        return Jet(b.space, coeffs)
    a, b = _common(a, b)
    space = a.space
    a0 = np.ascontiguousarray(a.value)
    b0 = np.ascontiguousarray(b.value)
    if space.order == 1:
        coeffs = np.einsum(right, a0, b.coeffs)
        coeffs[..., 1:] += np.einsum(left, a.coeffs[..., 1:], b0)
    else:
        I, J, starts = space.mul_table
        prod = np.einsum(both, a.coeffs[..., I], b.coeffs[..., J])
        coeffs = np.add.reduceat(prod, starts, axis=-1)
    coeffs[..., 0] = np.einsum(subscripts, a0, b0)
    return Jet(space, coeffs)


def matmul(a, b):
    """Matrix product over the last two axes (vectors treated as in ``@``)."""
    if not isinstance(a, Jet) and not isinstance(b, Jet):
        return np.matmul(a, b)
    na, nb = np.ndim(a) if not isinstance(a, Jet) else a.ndim, np.ndim(b) if not isinstance(b, Jet) else b.ndim
    if na == 1 and nb == 1:
        return einsum("i,i->", a, b)
    if na == 1:
        return einsum("i,...ij->...j", a, b)
    if nb == 1:
        return einsum("...ij,j->...i", a, b)
    return einsum("...ij,...jk->...ik", a, b)


def _unify(items):
    spaces = [x.space for x in items if isinstance(x, Jet)]
    if not spaces:
        return None, [np.asarray(x, dtype=float) for x in items]
    space = spaces[0]
    for s in spaces[1:]:
        if s is space:
            continue
        if s.contains(space):
            space = s
        elif not space.contains(s):
            raise ValueError(f"incompatible jet spaces {space} and {s}")
    return space, [promote(x, space) for x in items]


def stack(items, axis=0):
    space, items = _unify(list(items))
    if space is None:
        return np.stack(items, axis=axis)
    ndim = items[0].ndim + 1
    axis = axis % ndim
    return Jet(space, np.stack([x.coeffs for x in items], axis=axis))


def concatenate(items, axis=0):
    space, items = _unify(list(items))
    if space is None:
        return np.concatenate(items, axis=axis)
    axis = axis % items[0].ndim
    return Jet(space, np.concatenate([x.coeffs for x in items], axis=axis))


def zeros_like(x):
    if isinstance(x, Jet):
        return Jet(x.space, np.zeros_like(x.coeffs))
    return np.zeros_like(np.asarray(x, dtype=float))


def all_finite(x) -> bool:
    data = x.coeffs if isinstance(x, Jet) else np.asarray(x)
    return bool(np.all(np.isfinite(data)))


# --------------------------------------------------------------------------
# nested perturbations


class Perturbation:
    """The point ``x + delta`` with ``delta`` a fresh group of seed variables.

    ``x`` has shape ``(..., d)``; one new variable is introduced per entry of
    its last axis, shared across the leading batch axes. ``x`` may itself be a
    jet, in which case the new variables sit on top of the existing ones.

    >>> p = Perturbation(np.array([1.0, 2.0]), cap=2)
    >>> f = p.point[0] * p.point[1] ** 2
    >>> p.drop(p.diff(p.diff(f)))
    array([[0., 4.],
           [4., 2.]])
    """

    def __init__(self, x, cap: int = 1):
        if isinstance(x, Jet):
            self.base = x.space
        else:
            self.base = SCALAR
            x = np.asarray(x, dtype=float)
        self.dim = x.shape[-1]
        self.cap = cap
        self.space = self.base.extend(self.dim, cap)
        self.group = len(self.space.groups) - 1
        point = promote(x, self.space)
        off = self.base.n_vars
        for i in range(self.dim):
            point.coeffs[..., i, self.space.index[((off + i, 1),)]] = 1.0
        self.point = point

    def diff(self, y):
        """Derivatives of ``y`` along the new variables, as a trailing axis."""
        if not isinstance(y, Jet) or y.space is not self.space:
            if isinstance(y, Jet) and not self.space.contains(y.space):
                raise ValueError("jet does not belong to this perturbation")
            shape = y.shape if isinstance(y, Jet) else np.shape(y)
            return Jet(self.space, np.zeros(tuple(shape) + (self.dim, self.space.size)))
        vl, src, dst, fac = self.space.diff_table(self.group)
        out = np.zeros(y.shape + (self.dim, self.space.size))
        out[..., vl, dst] = y.coeffs[..., src] * fac
        return Jet(self.space, out)

    def drop(self, y):
        """Set the new variables to zero, returning to the caller's space."""
        if not isinstance(y, Jet):
            return promote(y, self.base) if self.base is not SCALAR else np.asarray(y, dtype=float)
        if y.space is not self.space:
            y = promote(y, self.space)
        if self.base is SCALAR:
            return y.coeffs[..., 0].copy()
        src, dst = self.space.embedding(self.base)
        # embedding() maps base -> self; invert the roles here
        coeffs = np.empty(y.shape + (self.base.size,))
        coeffs[..., src] = y.coeffs[..., dst]
        return Jet(self.base, coeffs)


# --------------------------------------------------------------------------
# public derivative operations


@dataclass(frozen=True)
class SmoothMap:
    """A map R^domain_dim -> R^codomain_dim written with jet-aware operations."""

    domain_dim: int
    codomain_dim: int
    fn: Callable

    def __call__(self, x):
        return self.fn(x)


def _check_point(f, x):
    x = np.asarray(value(x) if isinstance(x, Jet) else x, dtype=float)
    dim = getattr(f, "domain_dim", None)
    if dim is not None and x.shape[-1:] != (dim,):
        raise ValueError(f"point has dimension {x.shape[-1:]} but map expects {dim}")


def jacobian(f, x):
    """Exact Jacobian ``J[..., i, j] = d f_i / d x_j`` of a (vector) map at ``x``.

    A scalar-valued ``f`` yields the gradient.
    """
    _check_point(f, x)
    p = Perturbation(x, 1)
    return p.drop(p.diff(f(p.point)))


def higher_derivative(f, x, order: int):
    """Tensor of all partials of the given order (2 or 3) of ``f`` at ``x``.

    Output axes are the output axes of ``f`` followed by ``order`` copies of
    the input axis.
    """
    if order not in (2, 3):
        raise ValueError(f"order must be 2 or 3, got {order}")
    _check_point(f, x)
    p = Perturbation(x, order)
    y = f(p.point)
    for _ in range(order):
        y = p.diff(y)
    return p.drop(y)


def gradient_of_loss(loss, params):
    """Value and gradient of a scalar ``loss`` by forward sensitivities.

    ``params`` is a flat parameter vector. One seed variable is attached per
    parameter and carried through every operation ``loss`` performs, including
    all steps of any integrator it calls.
    """
    params = np.asarray(params, dtype=float)
    out = loss(seed(params))
    if not isinstance(out, Jet):
        return float(out), np.zeros_like(params)
    if not all_finite(out):
        raise NumericalError("loss or its gradient is not finite")
    return float(out.value), out.gradient().reshape(params.shape)
