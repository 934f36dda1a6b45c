"""Barycenters of boundary measures and barycentric straightening of simplices."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product as iproduct

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import minimize

from .curvature import check_negative_kricci, curvature_form, tr_k
from .measures import (BoundaryMeasure, VisualFamily, mix, normalize, sphere_quadrature,
                       visual_measure)
from .models import HyperbolicSpace, ModelError, ModelSpace

GRAD_TOL = 1e-10
MAX_ITER = 100
DEGENERATE_COND = 1e12
# Newton falls back to gradient steps above this condition number
NEWTON_COND = 1e8


class DegenerateMeasureError(ArithmeticError):
    """The averaged Busemann Hessian is (numerically) singular."""


class BarycenterError(ArithmeticError):
    """The barycenter iteration did not reach the gradient tolerance."""


@dataclass(frozen=True)
class BarycenterResult:
    point: np.ndarray
    grad_norm: float
    iterations: int
    H: np.ndarray
    K: np.ndarray


def _objective(model, nodes, w, x):
    return float(w @ model.busemann(x, nodes))


def solve_barycenter(m: BoundaryMeasure, x0=None, tol: float = GRAD_TOL,
                     max_iter: int = MAX_ITER) -> BarycenterResult:
    """Damped Newton for the minimizer of x -> int B(x, theta) dm(theta)."""
    if not m.full_support:
        raise ModelError("barycenter needs a full-support measure")
    model = m.model
    mass = m.total_mass
    if not mass > 0:
        raise ModelError("barycenter of the zero measure")
    w = m.weights / mass
    nodes = m.nodes
    x = model.origin if x0 is None else model.check_point(x0).copy()
    val, g, h, k = model.busemann_moments(x, nodes, w)
    for it in range(max_iter + 1):
        gn = float(np.linalg.norm(g))
        if gn < tol:
            if np.linalg.cond(k) > DEGENERATE_COND:
                raise DegenerateMeasureError("averaged Hessian is singular at the barycenter")
            return BarycenterResult(x, gn, it, h, k)
        if it == max_iter:
            break
        cond = np.linalg.cond(k)
        if cond > DEGENERATE_COND:
            raise DegenerateMeasureError(f"averaged Hessian condition number {cond:.3e}")
        d = -np.linalg.solve(k, g) if cond < NEWTON_COND else -g
        slope = float(g @ d)
        t = 1.0
        # once the predicted decrease is below round-off, take the full step
        if -slope > 1e-13 * max(1.0, abs(val)):
            while t > 1e-12:
                vn = _objective(model, nodes, w, model.exp(x, model.from_frame(x, t * d)))
                if vn <= val + 1e-4 * t * slope:
                    break
                t *= 0.5
            else:
                t = 1.0
        x = model.exp(x, model.from_frame(x, t * d))
        val, g, h, k = model.busemann_moments(x, nodes, w)
    raise BarycenterError(f"no convergence after {max_iter} iterations, gradient {gn:.3e}")


def barycenter(m: BoundaryMeasure, x0=None) -> np.ndarray:
    return solve_barycenter(m, x0).point


def convexity_witness(m: BoundaryMeasure, x, rng: np.random.Generator, lines: int = 20,
                      step: float = 0.05) -> float:
    """Smallest second difference of int B dm along random geodesics through ``x``."""
    model = m.model
    w = m.weights / m.total_mass
    f0 = _objective(model, m.nodes, w, x)
    worst = np.inf
    for _ in range(lines):
        u = model.from_frame(x, rng.standard_normal(model.dim))
        fp = _objective(model, m.nodes, w, model.geodesic(x, u, step))
        fm = _objective(model, m.nodes, w, model.geodesic(x, u, -step))
        worst = min(worst, (fp - 2.0 * f0 + fm) / step ** 2)
    return float(worst)


# --------------------------------------------------------------------------
# straightening
# --------------------------------------------------------------------------

@lru_cache(maxsize=16)
def _reference(model: ModelSpace, resolution):
    return sphere_quadrature(model, resolution)


@dataclass(frozen=True, eq=False)
class SimplexSpec:
    """Ordered vertices of a geodesic simplex and the quadrature used for it."""

    model: ModelSpace
    vertices: np.ndarray
    resolution: int | None = None
    measures: tuple = field(init=False, repr=False)

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if len(v) > self.model.dim + 1:
            raise ModelError("at most n + 1 vertices")
        for p in v:
            self.model.check_point(p)
        object.__setattr__(self, "vertices", v)
        ref = _reference(self.model, self.resolution)
        fam = VisualFamily(self.model)
        object.__setattr__(self, "measures", tuple(normalize(visual_measure(fam, p, ref)) for p in v))

    @property
    def k(self) -> int:
        return len(self.vertices) - 1

    @property
    def model_id(self) -> str:
        return self.model.model_id

    def mixed(self, a) -> BoundaryMeasure:
        return mix(self.measures, check_spherical(a, self.k + 1))

    def start(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        return (a * a) @ self.vertices


def check_spherical(a, size: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != (size,):
        raise ValueError(f"spherical point must have {size} coordinates")
    if np.any(a < -1e-15) or abs(a @ a - 1.0) > 1e-9:
        raise ValueError("spherical point needs a_i >= 0 and sum a_i^2 = 1")
    return a


def random_spherical_point(rng: np.random.Generator, size: int) -> np.ndarray:
    return np.sqrt(rng.dirichlet(np.ones(size)))


def spherical_grid(size: int, m: int) -> np.ndarray:
    """sqrt of the lattice points of the standard simplex with denominator m."""
    pts = [c for c in iproduct(range(m + 1), repeat=size) if sum(c) == m]
    return np.sqrt(np.array(pts, dtype=float) / m)


def straighten_solve(spec: SimplexSpec, a) -> BarycenterResult:
    return solve_barycenter(spec.mixed(a), spec.start(a))


def straighten(spec: SimplexSpec, a) -> np.ndarray:
    return straighten_solve(spec, a).point


@dataclass(frozen=True)
class FormPair:
    H: np.ndarray
    K: np.ndarray
    at: np.ndarray


def forms(spec: SimplexSpec, a) -> FormPair:
    res = straighten_solve(spec, a)
    return FormPair(res.H, res.K, res.point)


def _vertex_gradients(spec: SimplexSpec, x) -> np.ndarray:
    """Columns b_i = int dB_x d nu_i in the frame at x."""
    model = spec.model
    return np.column_stack([model.busemann_moments(x, m.nodes, m.weights)[1] for m in spec.measures])


def d_straighten(spec: SimplexSpec, a, res: BarycenterResult | None = None) -> np.ndarray:
    """Matrix of D st at ``a``: u in R^{k+1} (tangent to the sphere) -> frame vector.

    Differentiating sum a_i^2 int dB_x d nu_i = 0 gives K D(u) = -2 sum a_i u_i b_i.
    """
    a = check_spherical(a, spec.k + 1)
    res = straighten_solve(spec, a) if res is None else res
    if np.linalg.cond(res.K) > DEGENERATE_COND:
        raise DegenerateMeasureError("K is singular")
    b = _vertex_gradients(spec, res.point)
    return -2.0 * np.linalg.solve(res.K, b * a[None, :])


def tangent_basis(a) -> np.ndarray:
    """Orthonormal basis of the tangent space of the unit sphere at ``a`` (columns)."""
    return null_space(np.asarray(a, dtype=float)[None, :])


def d_straighten_fd(spec: SimplexSpec, a, u, step: float = 1e-4) -> np.ndarray:
    """Central difference of st along the great circle through ``a`` with velocity ``u``."""
    model = spec.model
    a = check_spherical(a, spec.k + 1)
    u = np.asarray(u, dtype=float)
    u = u - (u @ a) * a
    nrm = np.linalg.norm(u)
    u = u / nrm
    x = straighten(spec, a)
    ends = []
    for s in (step, -step):
        b = np.cos(s) * a + np.sin(s) * u
        b = np.clip(b, 0.0, None)
        b /= np.linalg.norm(b)
        ends.append(model.to_frame(x, model.log(x, straighten(spec, b))))
    return nrm * (ends[0] - ends[1]) / (2.0 * step)


def jacobian_chain_check(spec: SimplexSpec, a, slack: float = 1e-8) -> dict:
    """|det K * Jac| <= 2^n det(H)^{1/2} at st(a) for a top-dimensional simplex."""
    n = spec.model.dim
    if spec.k != n:
        raise ValueError("the Jacobian chain needs a top-dimensional simplex")
    a = check_spherical(a, n + 1)
    res = straighten_solve(spec, a)
    d = d_straighten(spec, a, res)
    jac = abs(float(np.linalg.det(d @ tangent_basis(a))))
    det_k = float(np.linalg.det(res.K))
    det_h = float(max(np.linalg.det(res.H), 0.0))
    lhs = abs(det_k * jac)
    rhs = 2.0 ** n * np.sqrt(det_h)
    ratio = np.sqrt(det_h) / det_k
    return {"delta": a.tolist(), "st_point": res.point.tolist(), "jac": jac, "detH": det_h,
            "detK": det_k, "lhs": lhs, "rhs": rhs, "ratio": ratio,
            "holds": bool(lhs <= rhs + slack),
            "straightening_bound_holds": bool(jac <= 2.0 ** n * ratio * (1.0 + 1e-12) + slack)}


# --------------------------------------------------------------------------
# ratio det(H)^{1/2} / det(K)
# --------------------------------------------------------------------------

def envelope_value(mu) -> float:
    """prod mu_i^{1/2} / prod (1 - mu_i), the ratio on H^n where K = Id - H."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu >= 1.0):
        return 0.0
    return float(np.prod(np.sqrt(np.clip(mu, 0.0, None))) / np.prod(1.0 - mu))


def ratio_envelope(n: int, starts: int = 32, seed: int = 0) -> dict:
    """Maximum of the H^n ratio over the eigenvalue simplex (n >= 3).

    Multistart SLSQP on the log ratio; the symmetric point mu = 1/n is among
    the starts.
    """
    if n < 3:
        raise ValueError("the envelope is unbounded for n < 3")
    rng = np.random.default_rng(seed)

    def neg_log(mu):
        mu = np.clip(mu, 1e-300, 1.0 - 1e-15)
        return -(0.5 * np.sum(np.log(mu)) - np.sum(np.log1p(-mu)))

    cons = ({"type": "eq", "fun": lambda mu: np.sum(mu) - 1.0},)
    bounds = [(1e-12, 1.0 - 1e-9)] * n
    best_mu, best = np.full(n, 1.0 / n), envelope_value(np.full(n, 1.0 / n))
    for x0 in [np.full(n, 1.0 / n)] + [rng.dirichlet(np.ones(n)) for _ in range(starts)]:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            r = minimize(neg_log, x0, method="SLSQP", bounds=bounds, constraints=cons,
                         options={"ftol": 1e-15, "maxiter": 500})
        mu = np.clip(r.x, 0.0, 1.0)
        mu /= mu.sum()
        v = envelope_value(mu)
        if v > best:
            best_mu, best = mu, v
    return {"n": n, "max": float(best), "argmax": best_mu.tolist()}


def symmetric_envelope(n: int) -> float:
    return float(n ** (n / 2.0) / (n - 1.0) ** n)


def random_visual_mix(model: ModelSpace, reference: BoundaryMeasure, rng: np.random.Generator,
                      radius: float = 1.5, max_atoms: int | None = None) -> BoundaryMeasure:
    """sum a_i^2 nu_{x_i} for random points x_i and a random spherical point a."""
    count = int(rng.integers(1, (max_atoms or model.dim + 1) + 1))
    fam = VisualFamily(model)
    pts = [model.random_point(rng, radius) for _ in range(count)]
    ms = [normalize(visual_measure(fam, p, reference)) for p in pts]
    return mix(ms, random_spherical_point(rng, count))


def ratio_bound_constant(model: ModelSpace, k_ric: int | None = None, samples: int = 200,
                         seed: int = 0, resolution: int | None = None, radius: float = 1.5) -> dict:
    """Empirical sup of det(H)^{1/2}/det(K) over random full-support measures.

    Also checks, per sample, mu_i <= Tr_{n-k}(H) <= (n-k) C' lambda_1^{2/3} for
    i <= n-k with C' the pointwise constant of the measure, and
    lambda_{k+1} >= Tr_{k+1}(K)/(k+1) >= C0/(k+1) with C0 the smallest
    Tr_{k+1} of the integrand.  Here k = k_ric - 1.
    """
    n = model.dim
    k_ric = n // 4 + 1 if k_ric is None else k_ric
    ricci = check_negative_kricci(model, k_ric, seed=seed)
    if not ricci["holds"]:
        raise ModelError(f"{model.model_id} fails the negative Ric_{k_ric} condition")
    k = k_ric - 1
    rng = np.random.default_rng(seed)
    ref = _reference(model, resolution)
    sup_ratio, c0_used, c_prime_max = 0.0, np.inf, 0.0
    mu_ok = lam_ok = True
    for _ in range(samples):
        m = random_visual_mix(model, ref, rng, radius)
        res = solve_barycenter(m)
        x, hmat, kmat = res.point, res.H, res.K
        mu = np.linalg.eigvalsh(hmat)
        lam, vec = np.linalg.eigh(kmat)
        ratio = np.sqrt(max(np.prod(mu), 0.0)) / np.prod(lam)
        sup_ratio = max(sup_ratio, float(ratio))
        keep = m.weights > 0
        w = m.weights[keep] / m.total_mass
        grads = model.busemann_grad(x, m.nodes[keep])
        hess = model.busemann_hess(x, m.nodes[keep])
        v = vec[:, 0]
        # F_v: the n - k directions where R_v is largest
        rv = curvature_form(model, x, model.from_frame(x, v)).matrix
        fv = np.linalg.eigh(rv)[1][:, k:]
        kv = np.einsum("i,nij,j->n", v, hess, v)
        pg = np.sum((grads @ fv) ** 2, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            c_prime = float(np.max(np.where(pg > 0, pg / np.clip(kv, 1e-300, None) ** (2.0 / 3.0), 0.0)))
        c_prime_max = max(c_prime_max, c_prime)
        trace_h = float(np.trace(fv.T @ hmat @ fv))
        bound = (n - k) * c_prime * lam[0] ** (2.0 / 3.0)
        mu_ok &= bool(np.all(mu[: n - k] <= tr_k(hmat, n - k) + 1e-12) and tr_k(hmat, n - k) <= trace_h + 1e-12
                      and trace_h <= bound * (1 + 1e-9) + 1e-12)
        c0 = float(np.linalg.eigvalsh(hess[w > 1e-14 * w.max()])[:, : k + 1].sum(axis=1).min())
        c0_used = min(c0_used, c0)
        lam_ok &= bool(lam[k] >= tr_k(kmat, k + 1) / (k + 1) - 1e-12 and tr_k(kmat, k + 1) >= c0 - 1e-10)
    out = {"model": model.descriptor(), "k_ric": k_ric, "empirical_sup_ratio": sup_ratio,
           "C0_used": c0_used, "C_prime": c_prime_max, "mu_bound_holds": mu_ok,
           "lambda_floor_holds": lam_ok, "samples": samples, "seed": seed,
           "resolution": ref.resolution}
    if isinstance(model, HyperbolicSpace) and n >= 3:
        env = ratio_envelope(n)["max"]
        out["envelope"] = env
        out["within_envelope"] = bool(sup_ratio <= env * (1 + 1e-9))
    return out
