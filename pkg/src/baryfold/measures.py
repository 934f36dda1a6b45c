"""Discrete measures on the ideal boundary and the visual measure family."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .models import HyperbolicSpace, ModelError, ModelSpace, ProductSpace

# smallest resolution accepted per sphere dimension S^{d-1}, keyed by d
MIN_RESOLUTION = {2: 8, 3: 4, 4: 4, 5: 3, 6: 3}

DEFAULT_RESOLUTION = {
    ("hyperbolic", 2): 512,
    ("hyperbolic", 3): 40,
    ("hyperbolic", 4): 32,
    ("hyperbolic", 5): 12,
    ("hyperbolic", 6): 8,
    ("product", 4): 24,
    ("product", 5): 14,
    ("product", 6): 10,
}


class MeasureError(ValueError):
    pass


def default_resolution(model: ModelSpace) -> int:
    try:
        return DEFAULT_RESOLUTION[(model.kind, model.dim)]
    except KeyError:
        raise MeasureError(f"no boundary quadrature for {model.model_id}") from None


@dataclass(frozen=True, eq=False)
class BoundaryMeasure:
    """Weighted nodes on the ideal boundary of ``model``."""

    model: ModelSpace
    nodes: np.ndarray
    weights: np.ndarray
    full_support: bool = False
    resolution: int = 0
    exactness_degree: int = -1

    def __post_init__(self):
        if self.nodes.ndim != 2 or len(self.nodes) != len(self.weights):
            raise MeasureError("nodes and weights disagree in length")
        if np.any(self.weights < 0):
            raise MeasureError("weights must be nonnegative")
        if self.full_support and np.any(self.weights <= 0):
            object.__setattr__(self, "full_support", False)

    @property
    def model_id(self) -> str:
        return self.model.model_id

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def reweighted(self, weights) -> "BoundaryMeasure":
        return replace(self, weights=np.asarray(weights, dtype=float))

    def integrate(self, values) -> float:
        return float(self.weights @ np.asarray(values, dtype=float))

    def shares_nodes(self, other: "BoundaryMeasure") -> bool:
        return self.nodes is other.nodes or (
            self.nodes.shape == other.nodes.shape and np.array_equal(self.nodes, other.nodes))

    def to_csv(self, path) -> None:
        d = self.nodes.shape[1]
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow([f"node_{j}" for j in range(d)] + ["weight"])
            for row, w in zip(self.nodes, self.weights):
                wr.writerow([repr(float(v)) for v in row] + [repr(float(w))])

    @classmethod
    def from_csv(cls, model: ModelSpace, path) -> "BoundaryMeasure":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(model, data[:, :-1], data[:, -1])


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _sphere_rule(d: int, res: int) -> tuple[np.ndarray, np.ndarray]:
    """Product rule on S^{d-1} in R^d with weights summing to one."""
    if d == 2:
        ang = 2.0 * np.pi * np.arange(res) / res
        nodes = np.column_stack([np.cos(ang), np.sin(ang)])
        return nodes, np.full(res, 1.0 / res)
    # polar angles phi_1..phi_{d-2} carry weight sin^{d-1-k}; t = cos(phi)
    ts, ws = [], []
    for k in range(1, d - 1):
        a = (d - 2 - k) / 2.0
        t, w = roots_legendre(res) if a == 0.0 else roots_jacobi(res, a, a)
        ts.append(t)
        ws.append(w / w.sum())
    m = 2 * res
    az = 2.0 * np.pi * np.arange(m) / m
    grids = np.meshgrid(*ts, az, indexing="ij")
    wgrid = np.prod(np.meshgrid(*ws, np.full(m, 1.0 / m), indexing="ij"), axis=0).ravel()
    cols = []
    sin_prod = np.ones(grids[0].size)
    for t in grids[:-1]:
        t = t.ravel()
        cols.append(sin_prod * t)
        sin_prod = sin_prod * np.sqrt(np.clip(1.0 - t * t, 0.0, None))
    phi = grids[-1].ravel()
    cols.append(sin_prod * np.cos(phi))
    cols.append(sin_prod * np.sin(phi))
    nodes = np.column_stack(cols)
    nodes /= np.linalg.norm(nodes, axis=1, keepdims=True)
    return nodes, wgrid


def sphere_rule(d: int, res: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights (summing to 1) of the uniform measure on S^{d-1}."""
    if res < MIN_RESOLUTION.get(d, 3):
        raise MeasureError(f"resolution {res} below minimum {MIN_RESOLUTION.get(d, 3)} for S^{d - 1}")
    nodes, w = _sphere_rule(d, res)
    return nodes.copy(), w.copy()


def sphere_quadrature(model: ModelSpace, resolution: int | None = None) -> BoundaryMeasure:
    """Uniform reference measure nu_O on the boundary as a quadrature rule.

    Circles use ``resolution`` equally spaced nodes (exact for trigonometric
    polynomials of degree < resolution); higher spheres use Gauss-Jacobi rules
    in the polar angles times an equispaced azimuth (exact to degree
    2*resolution - 1).  Products take a tensor grid over (theta1, theta2,
    slope) with the slope uniform on [0, pi/2].
    """
    res = default_resolution(model) if resolution is None else int(resolution)
    if isinstance(model, HyperbolicSpace):
        nodes, w = sphere_rule(model.n, res)
        degree = res - 1 if model.n == 2 else 2 * res - 1
        return BoundaryMeasure(model, nodes, w, True, res, degree)
    if isinstance(model, ProductSpace):
        r1 = res if model.n1 == 2 else max(MIN_RESOLUTION[model.n1], res // 4)
        r2 = res if model.n2 == 2 else max(MIN_RESOLUTION[model.n2], res // 4)
        n1, w1 = sphere_rule(model.n1, r1)
        n2, w2 = sphere_rule(model.n2, r2)
        ra = max(4, res // 2)
        t, wa = roots_legendre(ra)
        slope = (t + 1.0) * np.pi / 4.0
        wa = wa / wa.sum()
        i, j, k = np.meshgrid(np.arange(len(w1)), np.arange(len(w2)), np.arange(ra), indexing="ij")
        i, j, k = i.ravel(), j.ravel(), k.ravel()
        nodes = np.hstack([n1[i], n2[j], slope[k][:, None]])
        return BoundaryMeasure(model, nodes, w1[i] * w2[j] * wa[k], True, res, 2 * ra - 1)
    raise MeasureError(f"no boundary quadrature for {model.model_id}")


# --------------------------------------------------------------------------
# measure families
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class VisualFamily:
    """x -> mu_x with d mu_x / d nu_O = exp(-h B(x, theta)).

    For H^n this is the Poisson kernel raised to n-1; on products it is a
    stand-in for the Patterson-Sullivan family with h the product entropy.
    """

    model: ModelSpace

    @property
    def entropy(self) -> float:
        return self.model.entropy

    @property
    def basepoint(self) -> np.ndarray:
        return self.model.origin

    @property
    def label(self) -> str:
        return "visual family"

    def density(self, x, nodes) -> np.ndarray:
        return np.exp(-self.entropy * self.model.busemann(x, nodes))


def visual_measure(family: VisualFamily, x, reference: BoundaryMeasure) -> BoundaryMeasure:
    """Unnormalized mu_x, discretized on the nodes of ``reference``."""
    return reference.reweighted(reference.weights * family.density(x, reference.nodes))


def normalize(m: BoundaryMeasure) -> BoundaryMeasure:
    mass = m.total_mass
    if not mass > 0.0:
        raise MeasureError("cannot normalize a measure of zero mass")
    return m.reweighted(m.weights / mass)


def mix(measures, coefficients) -> BoundaryMeasure:
    """sum_i a_i^2 m_i for normalized measures on a common node set."""
    a = np.asarray(coefficients, dtype=float)
    if len(a) != len(measures):
        raise MeasureError("one coefficient per measure")
    if np.any(a < -1e-15) or abs(a @ a - 1.0) > 1e-9:
        raise MeasureError("coefficients must be a point of the spherical simplex")
    base = measures[0]
    for m in measures[1:]:
        if not base.shares_nodes(m):
            raise MeasureError("measures live on different node sets")
    w = sum((ai * ai) * m.weights for ai, m in zip(a, measures))
    return base.reweighted(w)


def atom_measure(reference: BoundaryMeasure, atoms, masses=None, concentration: float = 200.0,
                 floor: float = 1e-6) -> BoundaryMeasure:
    """Atoms on a hyperbolic boundary thickened to the quadrature net.

    Each atom becomes a von Mises-Fisher bump of the given concentration; a
    small uniform floor keeps the support full.
    """
    if not isinstance(reference.model, HyperbolicSpace):
        raise ModelError("atom thickening is defined for hyperbolic boundaries")
    atoms = reference.model.check_ideal(atoms)
    masses = np.ones(len(atoms)) if masses is None else np.asarray(masses, dtype=float)
    dens = np.full(len(reference.weights), floor)
    for th, m in zip(atoms, masses):
        bump = np.exp(concentration * (reference.nodes @ th - 1.0))
        dens += m * bump / (reference.weights @ bump)
    return reference.reweighted(reference.weights * dens)
