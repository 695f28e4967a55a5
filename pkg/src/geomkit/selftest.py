"""Invariant suite behind ``geomkit selftest`` and the acceptance tests.

Each check returns ``(passed, details)``; :func:`run` times them and reports
one line per check. Random inputs come from fixed seeds, so a run is
reproducible.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from . import framebundle as fb
from . import landmarks as lm
from . import liegroup as lg
from .geodesics import exp, exp_hamiltonian, geodesic, log, parallel_transport
from .integrate import integrate_sde_ito, integrate_sde_stratonovich
from .manifold import ellipsoid, euclidean, sphere_stereographic
from .numkernel import NormalStream, gaussian_increments
from .stats import frame_from_covariance, frechet_mean, sample_brownian

__all__ = ["CheckResult", "CHECKS", "SLOW_CHECKS", "run", "random_composite_map", "finite_difference_partials"]


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    seconds: float
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        info = ", ".join(f"{k}={_fmt(v)}" for k, v in self.details.items())
        return f"{status} criterion {self.number}: {self.name} ({self.seconds:.1f} s; {info})"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.3g}"
    return str(v)


def _random_tangent(M, x, rng, lo, hi):
    """Chart vectors at ``x`` with g-norms uniform in ``[lo, hi]``."""
    v = rng.normal(size=x.shape)
    n = ad.value(M.norm(x, v))
    return v * (rng.uniform(lo, hi, size=n.shape) / n)[..., None]


# --------------------------------------------------------------------------
# 1. curvature of the round sphere


def check_sphere_curvature(seed: int = 1):
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    M = sphere_stereographic()
    x = rng.uniform(-1, 1, size=(10, 2))
    S = ad.value(M.scalar_curvature(x))
    K = M.sectional(x, rng.normal(size=(10, 2)), rng.normal(size=(10, 2)))
    elapsed = time.perf_counter() - t0
    es, ek = float(np.max(np.abs(S - 2))), float(np.max(np.abs(K - 1)))
    return es <= 1e-6 and ek <= 1e-6 and elapsed < 1.0, {"scalar_err": es, "sectional_err": ek, "runtime": elapsed}


# --------------------------------------------------------------------------
# 2. second-order and Hamiltonian geodesics agree


def check_geodesic_forms(seed: int = 2):
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for M in (sphere_stereographic(), ellipsoid(1.0, 0.8, 1.2)):
        x = rng.uniform(-1, 1, size=(20, 2))
        v = _random_tangent(M, x, rng, 0.1, 1.0)
        a = geodesic(M, x, v, 100).values[-1, :, :2]
        b = exp_hamiltonian(M, x, ad.value(M.flat(x, v)), 100).values[-1, :, :2]
        worst = max(worst, float(np.max(np.linalg.norm(a - b, axis=-1))))
    elapsed = time.perf_counter() - t0
    return worst <= 1e-4 and elapsed < 5.0, {"max_chart_dist": worst, "runtime": elapsed}


# --------------------------------------------------------------------------
# 3. Hamiltonian conservation


def _rel_drift(H):
    H = np.asarray(H)
    return float(np.max(np.abs(H - H[0]) / np.abs(H[0])))


def check_hamiltonian_conservation(seed: int = 3):
    rng = np.random.default_rng(seed)
    M = sphere_stereographic()
    x = rng.uniform(-1, 1, size=(20, 2))
    p = ad.value(M.flat(x, _random_tangent(M, x, rng, 0.1, 1.0)))
    h1 = _rel_drift(exp_hamiltonian(M, x, p, 100).meta["hamiltonian"])
    xs = rng.uniform(-0.5, 0.5, size=(20, 2))
    nus = 0.5 * np.eye(2) + 0.1 * rng.normal(size=(20, 2, 2))
    u = fb.pack(xs, nus)
    q = np.concatenate([rng.uniform(-1, 1, size=(20, 2)), 0.3 * rng.uniform(-1, 1, size=(20, 4))], axis=-1)
    h2 = _rel_drift(fb.exp_fm(M, u, q, 100).meta["hamiltonian"])
    return h1 <= 1e-5 and h2 <= 1e-5, {"drift_exp_hamiltonian": h1, "drift_exp_fm": h2}


# --------------------------------------------------------------------------
# 4. Log inverts Exp


def check_exp_log(seed: int = 4):
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    M = sphere_stereographic()
    x = rng.uniform(-1, 1, size=(20, 2))
    v = _random_tangent(M, x, rng, 0.0, 0.5)
    y = exp(M, x, v)
    res = log(M, x, y, method="newton")
    err = float(np.max(np.linalg.norm(res.v - v, axis=-1)))
    elapsed = time.perf_counter() - t0
    return err <= 1e-3 and elapsed < 30.0, {"max_err": err, "runtime": elapsed}


# --------------------------------------------------------------------------
# 5. parallel transport is an isometry


def _transport_drift(M, pts, vel, vw):
    traj = parallel_transport(M, vw, pts, vel)
    vals = traj.values  # (n+1, 2, d)
    gram = np.einsum("nai,nij,nbj->nab", vals, ad.value(M.metric(pts)), vals)
    return float(np.max(np.abs(gram - gram[0])))


def check_parallel_transport(seed: int = 5):
    rng = np.random.default_rng(seed)
    M = sphere_stereographic()
    t = np.linspace(0.0, 1.0, 101)
    pts = np.stack([t ** 2, -np.sin(t)], axis=-1)
    vel = np.stack([2 * t, -np.cos(t)], axis=-1)
    worst = _transport_drift(M, pts, vel, np.array([[-0.5, -0.5], [0.3, 0.7]]))
    for _ in range(10):
        c = rng.uniform(-0.5, 0.5, size=(4, 2))
        pts = c[0] + np.outer(t, c[1]) + np.outer(t ** 2, c[2]) + np.outer(np.sin(3 * t), c[3])
        vel = c[1] + np.outer(2 * t, c[2]) + np.outer(3 * np.cos(3 * t), c[3])
        worst = max(worst, _transport_drift(M, pts, vel, rng.normal(size=(2, 2))))
    return worst <= 1e-4, {"max_inner_drift": worst}


# --------------------------------------------------------------------------
# 6. jets against finite differences

_UNARY = ("sin", "cos", "exp", "recip")


def random_composite_map(rng, n_vars: int = 3, depth: int = 3) -> Callable:
    """Random expression in ``+``, ``*``, ``exp``, ``sin``, ``cos`` and ``1/x`` (kept away from 0).

    The returned function works on floats and on jets alike.
    """
    if depth == 0 or rng.uniform() < 0.2:
        if rng.uniform() < 0.8:
            i = int(rng.integers(n_vars))
            c = float(rng.uniform(-1.5, 1.5))
            return lambda x: x[..., i] * c
        c = float(rng.uniform(-1, 1))
        return lambda x: x[..., 0] * 0.0 + c
    kind = rng.uniform()
    if kind < 0.45:
        op = _UNARY[int(rng.integers(len(_UNARY)))]
        f = random_composite_map(rng, n_vars, depth - 1)
        if op == "sin":
            return lambda x: ad.sin(f(x))
        if op == "cos":
            return lambda x: ad.cos(f(x))
        if op == "exp":
            # bounded argument keeps the derivatives of comparable size
            return lambda x: ad.exp(ad.sin(f(x)))
        return lambda x: 1.0 / (f(x) * f(x) + 1.0)
    f = random_composite_map(rng, n_vars, depth - 1)
    g = random_composite_map(rng, n_vars, depth - 1)
    if kind < 0.75:
        return lambda x: f(x) + g(x)
    return lambda x: f(x) * g(x)


def finite_difference_partials(f, x, idx, h):
    """Central difference of ``f`` along the coordinate directions ``idx`` (1 to 3 of them)."""
    x = np.asarray(x, dtype=float)
    k = len(idx)
    total = 0.0
    for signs in np.ndindex(*(2,) * k):
        s = np.where(np.array(signs) == 0, 1.0, -1.0)
        pt = x.copy()
        for i, si in zip(idx, s):
            pt[i] += si * h
        total += np.prod(s) * f(pt)
    return total / (2 * h) ** k


def check_autodiff(seed: int = 6, n_maps: int = 100):
    rng = np.random.default_rng(seed)
    tols = ad.FD_TOLERANCES
    worst = {1: 0.0, 2: 0.0, 3: 0.0}
    for _ in range(n_maps):
        f = random_composite_map(rng)
        x = rng.uniform(-1, 1, size=3)
        jac = ad.jacobian(f, x)
        hess = ad.higher_derivative(f, x, 2)
        third = ad.higher_derivative(f, x, 3)
        for idx in np.ndindex(3, 3, 3):
            for order, tensor in ((1, jac), (2, hess), (3, third)):
                sub = idx[:order]
                if order < 3 and any(idx[order:]):
                    continue
                h, _ = tols[order]
                fd = finite_difference_partials(f, x, sub, h)
                exact = tensor[sub]
                worst[order] = max(worst[order], abs(exact - fd) / max(1.0, abs(fd)))
    passed = all(worst[o] <= tols[o][1] for o in worst)
    return passed, {"rel_err_1": worst[1], "rel_err_2": worst[2], "rel_err_3": worst[3]}


# --------------------------------------------------------------------------
# 7. Lie group flows


def check_lie_group(seed: int = 7):
    A = np.diag([1.0, 2.0, 3.0])
    mu0 = np.random.default_rng(seed).normal(size=3)
    traj = lg.euler_poincare(mu0, A, n_steps=1000, T=10.0)
    cas = _rel_drift(traj.meta["casimir"])
    en = _rel_drift(traj.meta["energy"])
    # constant xi: momentum along a principal axis is a fixed point
    mu_axis = np.array([0.0, 0.0, 3.0])
    ep = lg.euler_poincare(mu_axis, A, n_steps=100, T=2.0)
    g = lg.reconstruct(np.eye(3), ep, A).values.reshape(-1, 3, 3)
    closed = np.stack([lg.rotation([0, 0, 1], t) for t in ep.times])
    rec = float(np.max(np.abs(g - closed)))
    orth = 0.0
    for s in range(20):
        dW = gaussian_increments(3, 1000, 1e-3, s)
        orth = max(orth, float(np.max(lg.brownian_group(np.eye(3), dW, dt=1e-3).meta["orthogonality"])))
    passed = cas <= 1e-6 and en <= 1e-5 and rec <= 1e-5 and orth <= 1e-2
    return passed, {"casimir_drift": cas, "energy_drift": en, "reconstruction_err": rec, "orthogonality": orth}


# --------------------------------------------------------------------------
# 8. SDE schemes


def _gbm_errors(stratonovich: bool, seed: int, n_paths: int = 400, fine_exp: int = 12, levels=range(3, 9)):
    n_fine = 2 ** fine_exp
    dt_fine = 1.0 / n_fine
    dW = np.sqrt(dt_fine) * NormalStream(seed).normal((n_fine, n_paths))
    exact = np.exp(dW.sum(axis=0) - 0.5)
    if stratonovich:
        # dU = U dW (Ito) written in Stratonovich form
        def s(dw, t, u):
            return -0.5 * u, u * dw
        integrator = integrate_sde_stratonovich
    else:
        def s(dw, t, u):
            return 0.0 * u, u * dw
        integrator = integrate_sde_ito
    dts, errs = [], []
    for k in levels:
        n = 2 ** k
        coarse = dW.reshape(n, n_fine // n, n_paths).sum(axis=1)
        end = integrator(s, np.ones(n_paths), coarse, 1.0 / n).values[-1]
        dts.append(1.0 / n)
        errs.append(float(np.mean(np.abs(end - exact))))
    slope = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    return slope, errs


def check_sde_schemes(seed: int = 8):
    slope_ito, _ = _gbm_errors(False, seed)
    slope_str, _ = _gbm_errors(True, seed)
    # additive noise: both schemes must coincide
    dW = gaussian_increments(1, 200, 0.005, seed)

    def s(dw, t, x):
        return -x, 0.3 * dw
    a = integrate_sde_ito(s, np.array([1.0]), dW, 0.005).values
    b = integrate_sde_stratonovich(s, np.array([1.0]), dW, 0.005).values
    agree = float(np.max(np.abs(a - b)))
    passed = abs(slope_ito - 0.5) <= 0.15 and abs(slope_str - 0.5) <= 0.15 and agree <= 1e-12
    return passed, {"slope_ito": slope_ito, "slope_stratonovich": slope_str, "additive_diff": agree}


# --------------------------------------------------------------------------
# 9. development on flat space


def check_flat_development(seed: int = 9):
    M = euclidean(2)
    x0 = np.array([0.3, -0.2])
    u0 = fb.pack(x0, np.eye(2))
    dW = gaussian_increments(2, 200, 0.005, seed)
    path = fb.stochastic_development(M, u0, dW, dt=0.005).values[:, :2]
    driving = np.vstack([x0, x0 + np.cumsum(dW, axis=0)])
    ident = float(np.max(np.abs(path - driving)))
    Sigma = np.array([[0.2, 0.1], [0.1, 0.1]])
    T = 1.0
    u1 = fb.pack(np.zeros(2), frame_from_covariance(Sigma, "sqrt"))
    ends = sample_brownian(M, u1, T=T, n_steps=50, n_paths=5000, seed=seed)
    C = np.cov(ends.T)
    cov_err = float(np.linalg.norm(C - T * Sigma) / np.linalg.norm(T * Sigma))
    return ident <= 1e-12 and cov_err <= 0.1, {"path_err": ident, "cov_rel_err": cov_err}


# --------------------------------------------------------------------------
# 10. landmark matching


def check_landmark_closed_forms():
    cfg1 = lm.LandmarkConfig(1, sigma=0.1, alpha=2.0)
    delta = np.array([0.3, -0.1])
    r1 = lm.match(cfg1, np.zeros(2), delta)
    e1 = float(np.max(np.abs(r1.p0 - delta / 2.0)))
    cfg2 = lm.LandmarkConfig(2, sigma=0.1, alpha=1.5)
    x1 = np.array([0.0, 0.0, 5.0, 0.0])
    x2 = x1 + np.array([0.1, 0.2, -0.2, 0.05])
    r2 = lm.match(cfg2, x1, x2)
    solo = np.concatenate([lm.match(cfg1.__class__(1, 0.1, 1.5), x1[2 * i:2 * i + 2], x2[2 * i:2 * i + 2]).p0
                           for i in range(2)])
    e2 = float(np.max(np.abs(r2.p0 - solo)))
    return e1 <= 1e-6 and e2 <= 1e-6, {"single_err": e1, "decoupled_err": e2}


def check_t_to_o(n: int = 50, sigma: float = 0.1):
    cfg = lm.LandmarkConfig(n, sigma=sigma)
    t0 = time.perf_counter()
    res = lm.match(cfg, lm.t_shape(n), lm.o_shape(n), loss_tol=1e-6)
    elapsed = time.perf_counter() - t0
    return res.loss <= 1e-6 and elapsed < 60.0, {"loss": res.loss, "iters": res.iters, "runtime": elapsed}


# --------------------------------------------------------------------------
# 11. Frechet mean


def check_frechet(seed: int = 11):
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    E = euclidean(3)
    pts = rng.normal(size=(10, 3))
    eu = float(np.max(np.abs(frechet_mean(E, pts, np.zeros(3)).mean - pts.mean(axis=0))))
    M = sphere_stereographic()
    samples = rng.normal(0.0, 0.2, size=(20, 2))
    res = frechet_mean(M, samples, np.array([0.4, -0.4]))
    a = np.array([0.3, 0.2])
    sym = frechet_mean(M, np.stack([a, -a]), np.array([0.05, -0.02]))
    sym_err = float(np.max(np.abs(sym.mean)))
    elapsed = time.perf_counter() - t0
    passed = eu <= 1e-8 and res.converged and res.grad_norm <= 1e-6 and sym_err <= 1e-4 and elapsed < 120
    return passed, {"euclidean_err": eu, "sphere_grad_norm": res.grad_norm, "sphere_converged": res.converged,
                    "two_point_err": sym_err, "runtime": elapsed}


# --------------------------------------------------------------------------
# 12. most probable path with an isotropic frame


def check_mpp_isotropic():
    M = sphere_stereographic()
    x0 = np.array([0.1, -0.2])
    y = np.array([0.5, 0.3])
    nu = fb.gram_schmidt(M, x0, np.eye(2))
    res = fb.mpp(M, fb.pack(x0, nu), y)
    path = res.traj.values[:, :2]
    v = log(M, x0, y, method="newton").v
    geo = geodesic(M, x0, v, len(path) - 1).values[:, :2]
    dist = float(np.max(np.linalg.norm(path - geo, axis=-1)))
    return bool(res.converged) and dist <= 1e-2, {"max_chart_dist": dist, "miss_converged": res.converged}


CHECKS = [
    (1, "sphere curvature", check_sphere_curvature),
    (2, "geodesic formulation equivalence", check_geodesic_forms),
    (3, "Hamiltonian conservation", check_hamiltonian_conservation),
    (4, "Exp/Log roundtrip", check_exp_log),
    (5, "parallel transport isometry", check_parallel_transport),
    (6, "jet derivatives vs finite differences", check_autodiff),
    (7, "Lie group flows", check_lie_group),
    (8, "SDE schemes", check_sde_schemes),
    (9, "flat-space development", check_flat_development),
    (10, "landmark closed forms", check_landmark_closed_forms),
    (11, "Frechet mean", check_frechet),
    (12, "MPP isotropic consistency", check_mpp_isotropic),
]

SLOW_CHECKS = [(10, "T to O landmark matching", check_t_to_o)]


def run_one(number, name, fn) -> CheckResult:
    t0 = time.perf_counter()
    try:
        passed, details = fn()
    except Exception as exc:  # a crash is a failed check, not an aborted suite
        passed, details = False, {"error": f"{type(exc).__name__}: {exc}"}
    return CheckResult(number, name, bool(passed), time.perf_counter() - t0, details)


def run(slow: bool = False, report: Callable[[str], None] | None = print) -> list[CheckResult]:
    """Run every check (plus the slow tier when ``slow``), then the suite runtime budget."""
    t0 = time.perf_counter()
    results = []
    for number, name, fn in CHECKS:
        results.append(run_one(number, name, fn))
        if report:
            report(results[-1].line())
    total = time.perf_counter() - t0
    results.append(CheckResult(13, "suite runtime", total < 300.0, total, {"budget_s": 300}))
    if report:
        report(results[-1].line())
    if slow:
        for number, name, fn in SLOW_CHECKS:
            results.append(run_one(number, name, fn))
            if report:
                report(results[-1].line())
    return results
