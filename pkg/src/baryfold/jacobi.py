"""Jacobi fields along geodesic rays and the Busemann Hessian they encode.

Fields are written in a frame E along the geodesic with connection matrix
omega(c); for the hyperbolic and product models E is parallel.  With y, p the
frame components of Y and Y' the Jacobi equation Y'' = -R(g', Y)g' becomes

    y' = p - omega(c) y,    p' = R_c y - omega(c) p,    c' = -omega(c) c,

where R_c is the curvature form along the unit velocity c.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .curvature import NULL_TOL
from .models import ModelError, ModelSpace, pair_curvature_form

DEFAULT_HORIZON = 20.0
DEFAULT_STEP = 1e-2
MAX_HORIZON = 2000.0


class JacobiError(ArithmeticError):
    """The two-point solve did not produce a usable field."""


@dataclass(frozen=True)
class JacobiSolution:
    ray: tuple
    times: np.ndarray
    Y: np.ndarray
    Yprime: np.ndarray
    boundary: str
    residual: float

    @property
    def hessian_value(self) -> float:
        return float(-self.Y[0] @ self.Yprime[0])


def _block(kappa, omega_fn, c):
    n = len(c)
    om = omega_fn(c)
    m = np.zeros((2 * n, 2 * n))
    m[:n, :n] = -om
    m[:n, n:] = np.eye(n)
    m[n:, :n] = pair_curvature_form(kappa, c)
    m[n:, n:] = -om
    return m


def _rk4_poly(hm):
    eye = np.eye(len(hm))
    return eye + hm @ (eye + hm @ (eye / 2 + hm @ (eye / 6 + hm / 24)))


def _velocities(omega_fn, c0, horizon: float, steps: int) -> np.ndarray:
    """Frame velocity on the half-step grid, or None when it is constant."""
    if not np.any(omega_fn(c0) @ c0):
        return None
    h = horizon / (2 * steps)
    cs = np.empty((2 * steps + 1, len(c0)))
    cs[0] = c = c0
    f = lambda v: -omega_fn(v) @ v
    for i in range(2 * steps):
        k1 = f(c)
        k2 = f(c + 0.5 * h * k1)
        k3 = f(c + 0.5 * h * k2)
        k4 = f(c + h * k3)
        c = c + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        cs[i + 1] = c
    return cs


def _boundary_subspace(kappa, c_T, boundary: str) -> np.ndarray:
    """Columns span the (y, p) states allowed at the far end."""
    n = len(c_T)
    if boundary == "dirichlet":
        return np.vstack([np.zeros((n, n)), np.eye(n)])
    if boundary == "stable":
        ev, vec = np.linalg.eigh(pair_curvature_form(kappa, c_T))
        nul, rng = vec[:, ev <= NULL_TOL], vec[:, ev > NULL_TOL]
        return np.block([[nul, np.zeros((n, rng.shape[1]))], [np.zeros((n, nul.shape[1])), rng]])
    raise ValueError(f"unknown boundary condition {boundary!r}")


def _sweep(kappa, omega_fn, c0, horizon: float, step: float, boundary: str, reorth: int = 25):
    """Carry the far-end subspace back to t = 0 with RK4, re-orthonormalizing.

    Returns the grid, the stored bases Z_k and the triangular factors of each
    re-orthonormalization (None where none happened).
    """
    steps = max(1, int(np.ceil(horizon / step - 1e-9)))
    h = horizon / steps
    cs = _velocities(omega_fn, c0, horizon, steps)
    c_end = c0 if cs is None else cs[-1]
    zs = np.empty((steps + 1, 2 * len(c0), len(c0)))
    rs = [None] * (steps + 1)
    z = _boundary_subspace(kappa, c_end, boundary)
    zs[steps] = z
    back = None if cs is not None else _rk4_poly(-h * _block(kappa, omega_fn, c0))
    for k in range(steps, 0, -1):
        if back is not None:
            z = back @ z
        else:
            m1 = _block(kappa, omega_fn, cs[2 * k])
            m2 = _block(kappa, omega_fn, cs[2 * k - 1])
            m3 = _block(kappa, omega_fn, cs[2 * k - 2])
            k1 = -m1 @ z
            k2 = -m2 @ (z + 0.5 * h * k1)
            k3 = -m2 @ (z + 0.5 * h * k2)
            k4 = -m3 @ (z + h * k3)
            z = z + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if (steps - k + 1) % reorth == 0 or k == 1:
            z, r = np.linalg.qr(z)
            rs[k - 1] = r
        zs[k - 1] = z
    return np.linspace(0.0, horizon, steps + 1), zs, rs


def _initial_slopes(z0: np.ndarray) -> np.ndarray:
    """S with p(0) = S y(0) on the propagated subspace."""
    n = z0.shape[1]
    zy, zp = z0[:n], z0[n:]
    if np.linalg.cond(zy) > 1e12:
        raise JacobiError("propagated subspace is degenerate at the base point")
    return np.linalg.solve(zy.T, zp.T).T


def decay_rates(kappa, c) -> np.ndarray:
    ev = np.linalg.eigvalsh(pair_curvature_form(kappa, c))
    return np.sqrt(np.clip(ev, 0.0, None))


def effective_horizon(kappa, c, horizon: float) -> float:
    """Lengthen the horizon for slowly decaying directions, within MAX_HORIZON."""
    rates = decay_rates(kappa, c)
    pos = rates[rates ** 2 > NULL_TOL]
    if pos.size == 0:
        return horizon
    return float(min(max(horizon, 10.0 / pos.min()), max(horizon, MAX_HORIZON)))


def _ray_frame(model: ModelSpace, x, direction):
    x = model.check_point(x)
    c0 = model.to_frame(x, direction)
    nrm = np.linalg.norm(c0)
    if nrm == 0.0:
        raise ModelError("zero ray direction")
    return x, c0 / nrm


def solve_jacobi_bvp(model: ModelSpace, x, direction, Y0, horizon: float = DEFAULT_HORIZON,
                     step: float = DEFAULT_STEP, boundary: str = "dirichlet") -> JacobiSolution:
    """Jacobi field with Y(0) = Y0 vanishing at the horizon (or stable there).

    ``direction`` and ``Y0`` are chart vectors at ``x``; the returned Y and Y'
    are frame components along the ray.  ``boundary="stable"`` asks only the
    curved part of Y(T) to vanish and the flat part of Y'(T) to vanish, which
    is exact for flat directions.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    x, c0 = _ray_frame(model, x, direction)
    y0 = model.to_frame(x, Y0)
    kappa, omega_fn = model.jacobi_coefficients(x, c0)
    times, zs, rs = _sweep(kappa, omega_fn, c0, horizon, step, boundary)
    n = model.dim
    a = np.linalg.solve(zs[0][:n], y0)
    states = np.empty((len(times), 2 * n))
    for k in range(len(times)):
        states[k] = zs[k] @ a
        if rs[k] is not None:
            a = np.linalg.solve(rs[k], a)
    resid = float(np.linalg.norm(states[0, :n] - y0))
    return JacobiSolution((x, c0, float(horizon)), times, states[:, :n], states[:, n:], boundary, resid)


def stable_hessian(model: ModelSpace, x, theta, horizon: float = DEFAULT_HORIZON,
                   step: float = DEFAULT_STEP, adaptive: bool = True) -> np.ndarray:
    """DdB(x, theta) in the frame at ``x`` from stable Jacobi fields toward ``theta``."""
    x = model.check_point(x)
    c0 = model.ray_direction(x, theta)
    kappa, omega_fn = model.jacobi_coefficients(x, c0)
    if adaptive:
        horizon = effective_horizon(kappa, c0, horizon)
    _, zs, _ = _sweep(kappa, omega_fn, c0, horizon, step, "stable")
    s = _initial_slopes(zs[0])
    return -0.5 * (s + s.T)


def hess_busemann_numeric(model: ModelSpace, x, theta, Y0, horizon: float = DEFAULT_HORIZON,
                          step: float = DEFAULT_STEP) -> float:
    """-<Y(0), Y'(0)> for the stable Jacobi field with Y(0) = Y0 (a chart vector)."""
    x = model.check_point(x)
    y0 = model.to_frame(x, Y0)
    return float(y0 @ stable_hessian(model, x, theta, horizon, step) @ y0)


def verify_key_estimate(model: ModelSpace, samples: int = 200, horizon: float = DEFAULT_HORIZON,
                        seed: int = 0, cutoff: float = 1e-12) -> dict:
    """Infimum of DdB(Y,Y) / R_{g'}(Y,Y)^{3/2} over sampled rays and Y perpendicular to them."""
    rng = np.random.default_rng(seed)
    rows, flat = [], []
    axis_rows = []
    for _ in range(samples):
        x = model.random_point(rng, 1.0)
        theta = model.random_ideal_points(rng, 1)[0]
        c = model.ray_direction(x, theta)
        y = rng.standard_normal(model.dim)
        y -= (y @ c) * c
        y /= np.linalg.norm(y)
        hess = stable_hessian(model, x, theta, horizon)
        kappa, _ = model.jacobi_coefficients(x, c)
        ddb = float(y @ hess @ y)
        curv = float(y @ pair_curvature_form(kappa, c) @ y)
        row = {"x": x.tolist(), "theta": np.atleast_1d(theta).tolist(), "Y0": y.tolist(),
               "DdB": ddb, "R": curv, "ratio": ddb / curv ** 1.5 if curv > cutoff else None}
        (rows if curv > cutoff else flat).append(row)
    if model.kind == "horospherical":
        x = model.origin
        theta = model.random_ideal_points(rng, 1)[0]
        c = model.ray_direction(x, theta)
        hess = stable_hessian(model, x, theta, horizon)
        kappa, _ = model.jacobi_coefficients(x, c)
        form = pair_curvature_form(kappa, c)
        for i in range(1, model.dim):
            ddb, curv = float(hess[i, i]), float(form[i, i])
            if curv > cutoff:
                axis_rows.append({"axis": i, "DdB": ddb, "R": curv, "ratio": ddb / curv ** 1.5})
    ratios = [r["ratio"] for r in rows]
    emp = float(min(ratios)) if ratios else float("nan")
    flat_ok = all(r["DdB"] >= -1e-8 for r in flat)
    return {
        "empirical_C": emp,
        "positive": bool(ratios) and emp > 0.0 and flat_ok,
        "n_samples": samples,
        "n_flat": len(flat),
        "flat_hessian_nonnegative": flat_ok,
        "T": horizon,
        "seed": seed,
        "witnesses": rows,
        "flat_witnesses": flat,
        "axis_witnesses": axis_rows,
    }


def calculus_lemma_check(values, times, L: float) -> dict:
    """Check int_0^inf F >= F(0)^{3/2} / (3 L') for sampled F >= 0 with F'' <= L.

    ``values`` samples F on the increasing grid ``times`` starting at 0; the
    trapezoid integral over the grid is a lower estimate since F >= 0.
    """
    f = np.asarray(values, dtype=float)
    t = np.asarray(times, dtype=float)
    if f.shape != t.shape or f.ndim != 1 or len(f) < 3:
        raise ValueError("values and times must be matching 1-d arrays of length >= 3")
    if t[0] != 0.0 or np.any(np.diff(t) <= 0):
        raise ValueError("times must start at 0 and increase")
    violations = []
    if f.min() < 0.0:
        violations.append(f"F negative (min {f.min():.3e})")
    h0, h1 = np.diff(t)[:-1], np.diff(t)[1:]
    second = 2.0 * ((f[2:] - f[1:-1]) / h1 - (f[1:-1] - f[:-2]) / h0) / (h0 + h1)
    if second.max() > L + 1e-8:
        violations.append(f"F'' exceeds L (max {second.max():.3e})")
    lprime = np.sqrt(L / 2.0) + 1e-6
    lhs = float(np.trapezoid(f, t))
    rhs = float(max(f[0], 0.0) ** 1.5 / (3.0 * lprime))
    return {"lhs": lhs, "rhs": rhs, "L_prime": float(lprime), "holds": lhs >= rhs - 1e-8,
            "precondition_ok": not violations, "violations": violations}


def equality_profile(c: float, L: float, times) -> np.ndarray:
    """(max(0, sqrt(c) - sqrt(L/2) t))^2, the extremal profile of the lemma."""
    return np.maximum(0.0, np.sqrt(c) - np.sqrt(L / 2.0) * np.asarray(times, dtype=float)) ** 2


def random_profile(rng: np.random.Generator, knots: int = 8, length: float = 6.0,
                   points: int = 4001) -> tuple[np.ndarray, np.ndarray, float]:
    """Random nonnegative shape-preserving cubic with trailing zeros.

    Returns (times, values, L) with L the largest second derivative on the
    sampled grid, so the profile extends by zero as a C^1 function with
    F'' <= L.
    """
    tk = np.r_[0.0, np.sort(rng.uniform(0.0, length, knots - 3)), length, length + 1.0]
    tk = np.unique(tk)
    fk = rng.exponential(1.0, len(tk)) * (rng.uniform(size=len(tk)) < 0.8)
    fk[-2:] = 0.0
    spline = PchipInterpolator(tk, fk)
    t = np.linspace(0.0, tk[-1], points)
    f = np.clip(spline(t), 0.0, None)
    d2 = spline(t, 2)
    # pchip second derivatives jump at knots; sample both sides
    d2k = np.r_[spline(tk[1:-1] - 1e-12, 2), spline(tk[1:-1] + 1e-12, 2)]
    L = float(max(d2.max(), d2k.max(), 1e-3)) * rng.uniform(1.0, 2.0)
    return t, f, L
