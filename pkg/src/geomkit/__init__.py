"""Numerical differential geometry on charts.

Derivatives come from truncated Taylor jets (:mod:`geomkit.autodiff`), so a
manifold is described by a single smooth map (an embedding, a metric or a
cometric) and everything else is computed from it.
"""

from . import autodiff, framebundle, geodesics, integrate, landmarks, liegroup, manifold, numkernel, stats
from .autodiff import NumericalError
from .geodesics import distance, exp, exp_hamiltonian, geodesic, log, parallel_transport
from .integrate import Trajectory
from .manifold import Manifold, ellipsoid, euclidean, from_id, sphere_stereographic

__version__ = "0.1.0"

__all__ = [
    "autodiff",
    "framebundle",
    "geodesics",
    "integrate",
    "landmarks",
    "liegroup",
    "manifold",
    "numkernel",
    "stats",
    "NumericalError",
    "Manifold",
    "Trajectory",
    "euclidean",
    "sphere_stereographic",
    "ellipsoid",
    "from_id",
    "geodesic",
    "exp",
    "exp_hamiltonian",
    "log",
    "distance",
    "parallel_transport",
]
