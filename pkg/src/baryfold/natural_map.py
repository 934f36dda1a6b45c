"""Natural maps F_s(y) = bar(sigma_y^s) between hyperbolic balls, and volume entropy."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.special import logsumexp, roots_legendre

from .measures import (BoundaryMeasure, VisualFamily, default_resolution, sphere_quadrature,
                       sphere_rule)
from .models import BallIsometry, HyperbolicSpace, ModelError, ModelSpace, ProductSpace, mobius_add
from .straightening import ratio_envelope, solve_barycenter

TAIL_TARGET = 1e-8
S_MARGIN = 0.05
FD_STEP = 1e-3
JAC_SLACK = 1e-2
ATOM_FACTOR = 2.0


# --------------------------------------------------------------------------
# maps
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SmoothMap:
    """Base class of the map catalog; maps act on the Poincare ball of ``model``."""

    model: HyperbolicSpace

    def __call__(self, z) -> np.ndarray:
        raise NotImplementedError

    def apply(self, zs) -> np.ndarray:
        return np.array([self(z) for z in np.atleast_2d(zs)])

    def descriptor(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Isometry(SmoothMap):
    iso: BallIsometry = None

    def __call__(self, z):
        return self.iso(np.asarray(z, dtype=float))

    def apply(self, zs):
        return self.iso(np.atleast_2d(zs))

    def descriptor(self):
        return {"kind": "isometry", "shift": self.iso.shift.tolist(), "rotation": self.iso.rotation.tolist()}


@dataclass(frozen=True)
class PerturbedIdentity(SmoothMap):
    """z -> exp_O(zeta + amplitude * exp(-|zeta|^2 / 2 width^2) * sin(frequency * zeta)).

    zeta are normal coordinates of z at O.  The Gaussian envelope makes the map
    the identity near the boundary, so it extends to the ideal boundary as the
    identity; boundary points are returned unchanged.
    """

    amplitude: float = 0.0
    frequency: float = 1.0
    width: float = 1.0

    def apply(self, zs):
        zs = np.atleast_2d(np.asarray(zs, dtype=float))
        if self.amplitude == 0.0:
            return zs.copy()
        nrm = np.linalg.norm(zs, axis=1, keepdims=True)
        inside = nrm < 1.0 - 1e-12
        rad = 2.0 * np.arctanh(np.where(inside, nrm, 0.0))
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(nrm > 0, zs / np.where(nrm > 0, nrm, 1.0), 0.0)
        zeta = unit * rad
        env = np.exp(-0.5 * (rad / self.width) ** 2)
        zeta = zeta + self.amplitude * env * np.sin(self.frequency * zeta)
        r = np.linalg.norm(zeta, axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(r > 0, np.tanh(r / 2.0) * zeta / np.where(r > 0, r, 1.0), 0.0)
        return np.where(inside & (env > 1e-300), out, zs)

    def __call__(self, z):
        return self.apply(z)[0]

    def descriptor(self):
        return {"kind": "perturbed_identity", "amplitude": self.amplitude, "frequency": self.frequency,
                "width": self.width}


@dataclass(frozen=True)
class Composition(SmoothMap):
    """maps[-1] o ... o maps[0]."""

    maps: tuple = ()

    def apply(self, zs):
        out = np.atleast_2d(np.asarray(zs, dtype=float))
        for m in self.maps:
            out = m.apply(out)
        return out

    def __call__(self, z):
        return self.apply(z)[0]

    def descriptor(self):
        return {"kind": "composition", "maps": [m.descriptor() for m in self.maps]}


def identity_map(model: HyperbolicSpace) -> PerturbedIdentity:
    return PerturbedIdentity(model, 0.0, 1.0)


def map_from_descriptor(model: HyperbolicSpace, desc: dict) -> SmoothMap:
    kind = desc.get("kind")
    if kind == "identity":
        return identity_map(model)
    if kind == "isometry":
        n = model.dim
        shift = np.asarray(desc.get("shift", np.zeros(n)), dtype=float)
        rot = np.asarray(desc.get("rotation", np.eye(n)), dtype=float)
        if shift.shape != (n,) or rot.shape != (n, n) or shift @ shift >= 1.0:
            raise ModelError("isometry needs a shift inside the ball and an n x n rotation")
        if np.abs(rot @ rot.T - np.eye(n)).max() > 1e-10:
            raise ModelError("rotation must be orthogonal")
        return Isometry(model, BallIsometry(shift, rot))
    if kind == "perturbed_identity":
        width = float(desc.get("width", 1.0))
        if not width > 0.0:
            raise ModelError("perturbation width must be positive")
        return PerturbedIdentity(model, float(desc.get("amplitude", 0.0)), float(desc.get("frequency", 1.0)),
                                 width)
    if kind == "composition":
        return Composition(model, tuple(map_from_descriptor(model, d) for d in desc.get("maps", [])))
    raise ModelError(f"unknown map kind {kind!r}")


# --------------------------------------------------------------------------
# source measure
# --------------------------------------------------------------------------

def _require_hyperbolic(model):
    if not isinstance(model, HyperbolicSpace):
        raise ModelError("natural maps are implemented between hyperbolic balls")


def truncation_radius(entropy: float, s: float, target: float = TAIL_TARGET) -> float:
    """Radius beyond which the weight e^{(h - s) r} falls below ``target``."""
    return float(np.log(1.0 / target) / (s - entropy))


def _radial_rule(radius: float, panel: float = 0.5, order: int = 8):
    t, w = roots_legendre(order)
    edges = np.linspace(0.0, radius, max(1, int(np.ceil(radius / panel))) + 1)
    a, b = edges[:-1, None], edges[1:, None]
    r = (0.5 * (b - a) * t[None, :] + 0.5 * (a + b)).ravel()
    wr = (0.5 * (b - a) * w[None, :]).ravel()
    return r, wr


def log_radial_density(n: int, s: float, r) -> np.ndarray:
    """log(e^{-s r} sinh^{n-1} r), stable for large r."""
    r = np.asarray(r, dtype=float)
    return -s * r + (n - 1) * (r + np.log1p(-np.exp(-2.0 * r)) - np.log(2.0))


@dataclass(frozen=True, eq=False)
class SourceMeasure:
    """Quadrature for e^{-s d(y, z)} dvol(z) / Z on the ball of radius R_trunc about y."""

    model: HyperbolicSpace
    center: np.ndarray
    s: float
    R_trunc: float
    radii: np.ndarray
    directions: np.ndarray
    radial_weights: np.ndarray
    angular_weights: np.ndarray
    radial_mass: float

    @property
    def nodes(self) -> np.ndarray:
        return self.points(self.radii)

    @property
    def weights(self) -> np.ndarray:
        return np.outer(self.radial_weights, self.angular_weights).ravel()

    def points(self, radii) -> np.ndarray:
        """Nodes at the given radii, ordered radius-major; z = y (+) tanh(r/2) u."""
        p = np.tanh(np.asarray(radii)[:, None, None] / 2.0) * self.directions[None, :, :]
        p = p.reshape(-1, self.model.dim)
        return mobius_add(self.center, p)

    def mean_distance(self) -> float:
        return float(self.radial_weights @ self.radii)


def source_measure(model: HyperbolicSpace, y, s: float, R_trunc: float | None = None,
                   resolution: int | None = None) -> SourceMeasure:
    """Radial Gauss-Legendre panels times a sphere rule, weights normalized to 1."""
    _require_hyperbolic(model)
    y = model.check_point(y)
    h = model.entropy
    if not s > h + S_MARGIN:
        raise ModelError(f"s = {s} must exceed the entropy {h} by at least {S_MARGIN}")
    R = truncation_radius(h, s) if R_trunc is None else float(R_trunc)
    r, wr = _radial_rule(R, panel=min(0.5, 2.0 / s))
    logw = np.log(wr) + log_radial_density(model.n, s, r)
    radial_mass = float(np.exp(logsumexp(logw)))
    wr = np.exp(logw - logsumexp(logw))
    res = _source_resolution(model) if resolution is None else resolution
    dirs, wa = sphere_rule(model.n, res)
    return SourceMeasure(model, y, float(s), R, r, dirs, wr, wa, radial_mass)


def _source_resolution(model: HyperbolicSpace) -> int:
    return {2: 256, 3: 16, 4: 10}.get(model.n, 8)


def _node_spacing(model: HyperbolicSpace, resolution: int) -> float:
    return 2.0 * np.pi / resolution if model.n == 2 else np.pi / resolution


def atom_radius(model: HyperbolicSpace, reference: BoundaryMeasure, s: float,
                source_resolution: int | None = None) -> float:
    """Radius at which the width 2 e^{-r} of nu_z drops to the coarser node spacing.

    Beyond it nu_z is replaced by the point mass at the endpoint of the ray
    through z; narrower kernels would be aliased by the boundary net or by the
    angular grid of the source, which breaks equivariance.
    """
    R = truncation_radius(model.entropy, s)
    spacing = _node_spacing(model, reference.resolution or default_resolution(model))
    if source_resolution is not None:
        spacing = max(spacing, _node_spacing(model, source_resolution))
    return float(min(R, np.log(ATOM_FACTOR / spacing)))


# --------------------------------------------------------------------------
# convolution and the natural map
# --------------------------------------------------------------------------

def _visual_rows(family: VisualFamily, points, reference: BoundaryMeasure, normalized: bool):
    """Row i holds the node weights of nu_{points[i]} (Poisson kernel to the power h)."""
    z = np.atleast_2d(points)
    z2 = np.sum(z * z, axis=1, keepdims=True)
    d2 = np.maximum(z2 - 2.0 * z @ reference.nodes.T + 1.0, 1e-300)
    rows = reference.weights[None, :] * ((1.0 - z2) / d2) ** family.entropy
    if normalized:
        rows /= rows.sum(axis=1, keepdims=True)
    return rows


def _chunked_product(weights: np.ndarray, points: np.ndarray, family: VisualFamily,
                     reference: BoundaryMeasure, normalized: bool) -> np.ndarray:
    """weights @ rows(points) without holding the full row matrix."""
    out = np.zeros((len(weights), len(reference.weights)))
    chunk = max(1, 2 ** 22 // len(reference.weights))
    for i in range(0, len(points), chunk):
        out += weights[:, i:i + chunk] @ _visual_rows(family, points[i:i + chunk], reference, normalized)
    return out


def convolve(src: SourceMeasure, phi: SmoothMap, family: VisualFamily, reference: BoundaryMeasure,
             normalized: bool = True) -> BoundaryMeasure:
    """sigma = sum_z w_z nu_{phi(z)} on the nodes of ``reference``, every source node explicit."""
    if phi.model != family.model or src.model != family.model:
        raise ModelError("map, source and family must share the model")
    pts = phi.apply(src.points(src.radii))
    dens = _chunked_product(src.weights[None, :], pts, family, reference, normalized)[0]
    return reference.reweighted(dens)


@dataclass(frozen=True, eq=False)
class AnchoredSource:
    """Source nodes fixed about ``anchor``; only their weights move with y.

    Near nodes z_jk = anchor (+) tanh(r_j/2) u_k carry e^{-s d(y, z_jk)} times
    their volume.  Shells past ``atom_radius`` collapse, per direction, to the
    ideal point anchor (+) u_k with weight e^{-s B(y', u_k)} times the shell
    mass, y' being y seen from the anchor.  Each node keeps its own probability
    measure, so the pointwise Jacobian estimate holds for the discrete map.
    """

    model: HyperbolicSpace
    anchor: np.ndarray
    s: float
    radii: np.ndarray
    log_volume: np.ndarray
    directions: np.ndarray
    log_angular: np.ndarray
    far_log_mass: float
    atom_radius: float

    @classmethod
    def build(cls, model: HyperbolicSpace, anchor, s: float, reference: BoundaryMeasure, resolution: int):
        h = model.entropy
        if not s > h + S_MARGIN:
            raise ModelError(f"s = {s} must exceed the entropy {h} by at least {S_MARGIN}")
        panel = min(0.5, 2.0 / s)
        R = truncation_radius(h, s)
        Ra = atom_radius(model, reference, s, resolution)
        r, wr = _radial_rule(Ra, panel)
        log_vol = np.log(wr) + (model.n - 1) * (r + np.log(-np.expm1(-2.0 * r)) - np.log(2.0))
        far = -np.inf
        if R > Ra:
            rf, wf = _radial_rule(R - Ra, panel)
            far = float(logsumexp(np.log(wf) + log_radial_density(model.n, s, rf + Ra)))
        dirs, wa = sphere_rule(model.n, resolution)
        return cls(model, model.check_point(anchor), float(s), r, log_vol, dirs, np.log(wa), far, Ra)

    def near_points(self) -> np.ndarray:
        p = np.tanh(self.radii[:, None, None] / 2.0) * self.directions[None, :, :]
        return mobius_add(self.anchor, p.reshape(-1, self.model.dim))

    def far_points(self) -> np.ndarray:
        return mobius_add(self.anchor, self.directions)

    def log_weights(self, y) -> tuple[np.ndarray, np.ndarray]:
        """Normalized log weights of the near nodes (radius-major) and of the far atoms."""
        yp = mobius_add(-self.anchor, np.asarray(y, dtype=float)[None, :])[0]
        a = 1.0 - yp @ yp
        rho = np.tanh(self.radii / 2.0)
        diff2 = (yp @ yp) - 2.0 * rho[:, None] * (self.directions @ yp)[None, :] + rho[:, None] ** 2
        dist = 2.0 * np.arcsinh(np.sqrt(np.maximum(diff2, 0.0)) * np.cosh(self.radii / 2.0)[:, None] / np.sqrt(a))
        near = (self.log_volume[:, None] + self.log_angular[None, :] - self.s * dist).ravel()
        bus = np.log(np.sum((yp[None, :] - self.directions) ** 2, axis=1)) - np.log(a)
        far = self.far_log_mass + self.log_angular - self.s * bus
        z = logsumexp(np.concatenate([near, far])) if np.isfinite(self.far_log_mass) else logsumexp(near)
        return near - z, far - z


@dataclass(frozen=True)
class NaturalMapSetup:
    """Everything except the point needed to evaluate F_s."""

    phi: SmoothMap
    family: VisualFamily
    s: float
    reference: BoundaryMeasure
    source_resolution: int
    normalized: bool = True

    @classmethod
    def build(cls, phi: SmoothMap, s: float, resolution: int | None = None,
              source_resolution: int | None = None, normalized: bool = True):
        model = phi.model
        _require_hyperbolic(model)
        ref = sphere_quadrature(model, _natural_resolution(model) if resolution is None else resolution)
        src_res = _source_resolution(model) if source_resolution is None else source_resolution
        return cls(phi, VisualFamily(model), float(s), ref, src_res, normalized)

    def source(self, anchor) -> AnchoredSource:
        return AnchoredSource.build(self.phi.model, anchor, self.s, self.reference, self.source_resolution)

    def sigmas(self, anchor, ys) -> list[BoundaryMeasure]:
        """sigma_y for every y in ``ys`` on one source grid anchored at ``anchor``."""
        src = self.source(anchor)
        ys = np.atleast_2d(ys)
        logs = [src.log_weights(y) for y in ys]
        near_w = np.exp(np.array([a for a, _ in logs]))
        dens = _chunked_product(near_w, self.phi.apply(src.near_points()), self.family, self.reference,
                                self.normalized)
        model = self.phi.model
        if not np.isfinite(src.far_log_mass):
            return [BoundaryMeasure(model, self.reference.nodes, d, True, self.reference.resolution)
                    for d in dens]
        atoms = self.phi.apply(src.far_points())
        atoms /= np.linalg.norm(atoms, axis=1, keepdims=True)
        nodes = np.vstack([self.reference.nodes, atoms])
        return [BoundaryMeasure(model, nodes, np.concatenate([d, np.exp(f)]), True, self.reference.resolution)
                for d, (_, f) in zip(dens, logs)]

    def sigma(self, y) -> BoundaryMeasure:
        return self.sigmas(y, [y])[0]

    def evaluate(self, y):
        y = np.asarray(y, dtype=float)
        return solve_barycenter(self.sigma(y), self.phi(y))


@lru_cache(maxsize=8)
def _envelope(n: int) -> float:
    return ratio_envelope(n)["max"]


def _natural_resolution(model: HyperbolicSpace) -> int:
    return {2: 2048, 3: 32, 4: 16}.get(model.n, default_resolution(model))


def natural_map(phi: SmoothMap, family: VisualFamily, y, s: float, resolution: int | None = None,
                normalized: bool = True) -> np.ndarray:
    if family.model != phi.model:
        raise ModelError("family and map live on different models")
    return NaturalMapSetup.build(phi, s, resolution, normalized=normalized).evaluate(y).point


def natural_map_jacobian(setup: NaturalMapSetup, y, step: float = FD_STEP):
    """Central differences of F_s along exp_y(+-step e_i), in orthonormal frames.

    All evaluations share the source grid anchored at y.
    """
    model = setup.phi.model
    n = model.dim
    y = model.check_point(y)
    ys = [y]
    for i in range(n):
        for sign in (1.0, -1.0):
            e = np.zeros(n)
            e[i] = sign * step
            ys.append(model.exp(y, model.from_frame(y, e)))
    sig = setup.sigmas(y, np.array(ys))
    base = solve_barycenter(sig[0], setup.phi(y))
    fy = base.point
    cols = []
    for i in range(n):
        ends = [model.to_frame(fy, model.log(fy, solve_barycenter(sig[1 + 2 * i + j], fy).point))
                for j in (0, 1)]
        cols.append((ends[0] - ends[1]) / (2.0 * step))
    return np.column_stack(cols), base


def jacobian_natural_map(phi: SmoothMap, family: VisualFamily, y, s: float, C: float | None = None,
                         resolution: int | None = None, step: float = FD_STEP,
                         setup: NaturalMapSetup | None = None) -> dict:
    """|Jac F_s(y)| against C (s / sqrt(n))^n.

    C defaults to the maximum of det(H)^{1/2}/det(K) over the eigenvalue
    simplex (n >= 3); ``bound_local`` uses the ratio of sigma_y itself.
    """
    model = phi.model
    n = model.dim
    setup = NaturalMapSetup.build(phi, s, resolution) if setup is None else setup
    d, base = natural_map_jacobian(setup, y, step)
    jac = float(np.linalg.det(d))
    scale = (s / np.sqrt(n)) ** n
    if C is None and n >= 3:
        C = _envelope(n)
    local = float(np.sqrt(max(np.linalg.det(base.H), 0.0)) / np.linalg.det(base.K))
    bound = C * scale if C is not None else local * scale
    return {"y": np.asarray(y, dtype=float).tolist(), "s": float(s), "F": base.point.tolist(),
            "jac": jac, "C": C, "bound": float(bound), "bound_local": local * scale,
            "holds": bool(abs(jac) <= bound * (1.0 + JAC_SLACK)),
            "holds_local": bool(abs(jac) <= local * scale * (1.0 + JAC_SLACK))}


# --------------------------------------------------------------------------
# volume entropy
# --------------------------------------------------------------------------

def _log_ball_volume_hyperbolic(n: int, r: float) -> float:
    """log of int_0^r sinh^{n-1} t dt (the sphere area constant dropped)."""
    # sinh^{n-1} t = e^{(n-1) r} 2^{1-n} e^{-(n-1)(r-t)} (1 - e^{-2t})^{n-1}
    f = lambda t: np.exp(-(n - 1) * (r - t)) * (-np.expm1(-2.0 * t)) ** (n - 1)
    val, _ = quad(f, 0.0, r, limit=200, epsabs=0.0, epsrel=1e-12)
    return (n - 1) * r - (n - 1) * np.log(2.0) + np.log(val)


def _log_ball_volume_product(n1: int, n2: int, r: float, nodes: int = 400) -> float:
    """log of int over rho1^2 + rho2^2 <= r^2 of sinh^{n1-1} rho1 sinh^{n2-1} rho2."""
    t, w = roots_legendre(nodes)
    rho = 0.5 * r * (t + 1.0)
    wr = 0.5 * r * w
    psi = 0.25 * np.pi * (t + 1.0)
    wp = 0.25 * np.pi * w
    R, P = np.meshgrid(rho, psi, indexing="ij")
    a, b = R * np.cos(P), R * np.sin(P)

    def log_sinh(x):
        return x + np.log(-np.expm1(-2.0 * x)) - np.log(2.0)

    with np.errstate(divide="ignore"):
        lg = (n1 - 1) * log_sinh(a) + (n2 - 1) * log_sinh(b) + np.log(R)
    lg = lg + np.log(wr)[:, None] + np.log(wp)[None, :]
    return float(logsumexp(lg))


def log_ball_volume(model: ModelSpace, r: float) -> float:
    if isinstance(model, HyperbolicSpace):
        return _log_ball_volume_hyperbolic(model.n, r)
    if isinstance(model, ProductSpace):
        return _log_ball_volume_product(model.n1, model.n2, r)
    raise ModelError(f"no volume formula for {model.model_id}")


def entropy_estimate(model: ModelSpace | None = None, radii=None, volumes=None,
                     window: tuple[float, float] = (10.0, 30.0), points: int = 41) -> dict:
    """Least-squares slope of log vol B(y, r) against r over ``window``.

    Pass a model for exact ball volumes, or sampled ``radii`` and ``volumes``.
    """
    r0, r1 = window
    if r1 - r0 < 1.0:
        raise ValueError("radius window must span at least 1")
    if model is not None:
        r = np.linspace(r0, r1, points)
        lv = np.array([log_ball_volume(model, x) for x in r])
        target = model.entropy
    else:
        r = np.asarray(radii, dtype=float)
        v = np.asarray(volumes, dtype=float)
        sel = (r >= r0) & (r <= r1) & (v > 0)
        if sel.sum() < 2:
            raise ValueError("fewer than two samples inside the radius window")
        r, lv = r[sel], np.log(v[sel])
        target = None
    slope = float(np.polyfit(r, lv, 1)[0])
    out = {"entropy": slope, "window": [r0, r1], "points": int(len(r))}
    if target is not None:
        out["closed_form"] = target
        out["relative_error"] = abs(slope - target) / target
    return out
