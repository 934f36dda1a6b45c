"""Simply connected nonpositively curved model spaces.

Three families are provided:

* ``HyperbolicSpace(n)``: the Poincare ball, curvature -1.
* ``ProductSpace(n1, n2)``: a Riemannian product of two Poincare balls.
* ``HorosphericalSpace(alphas)``: R^n with metric dr^2 + sum_i exp(2 a_i r) dx_i^2.

Points and tangent vectors are plain float arrays in the model chart.  Frame
quantities (Busemann gradients, Hessians, curvature forms) are expressed in
the orthonormal frame returned by :meth:`ModelSpace.frame`.

Curvature follows the sign convention R(X,Y)Z = nabla_Y nabla_X Z -
nabla_X nabla_Y Z + nabla_[X,Y] Z, so <R(u,v)u,v> is the sectional curvature
of span(u,v) times |u^v|^2 and the Jacobi equation reads Y'' = -R(g',Y)g'.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_bvp, solve_ivp

MAX_DIM = 6


class ModelError(ValueError):
    """Invalid model descriptor, point or vector."""


class UnsupportedBoundaryError(ModelError):
    """The ideal point is not one the model exposes."""


# --------------------------------------------------------------------------
# curvature tensors that are diagonal on coordinate 2-planes
# --------------------------------------------------------------------------

def pair_curvature_form(kappa: np.ndarray, c: np.ndarray) -> np.ndarray:
    """R_c(e_i, e_j) = -<R(c, e_i)c, e_j> for a pair-diagonal curvature tensor.

    ``kappa[a, b]`` is the sectional curvature of the frame plane (e_a, e_b);
    the diagonal is ignored.
    """
    kap = np.array(kappa, dtype=float)
    np.fill_diagonal(kap, 0.0)
    form = kap * np.outer(c, c)
    np.fill_diagonal(form, -kap @ (c * c))
    return form


def pair_curvature_tensor(kappa: np.ndarray, u, v, w) -> np.ndarray:
    kap = np.array(kappa, dtype=float)
    np.fill_diagonal(kap, 0.0)
    wedge = np.outer(u, v) - np.outer(v, u)
    return (kap * wedge).T @ np.asarray(w, dtype=float)


# --------------------------------------------------------------------------
# Poincare ball helpers
# --------------------------------------------------------------------------

def mobius_add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Mobius addition a (+) b on the unit ball; ``b`` may be a stack of rows."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b @ a
    a2 = a @ a
    b2 = np.sum(b * b, axis=-1)
    num = (1.0 + 2.0 * ab + b2)[..., None] * a + (1.0 - a2) * b
    den = 1.0 + 2.0 * ab + a2 * b2
    return num / den[..., None]


def _ball_distance(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    diff = np.linalg.norm(x - y, axis=-1)
    den = np.sqrt((1.0 - np.sum(x * x, axis=-1)) * (1.0 - np.sum(y * y, axis=-1)))
    return 2.0 * np.arcsinh(diff / den)


def _ball_exp(x, c):
    """Exponential map at ``x`` of the frame vector ``c`` (metric components)."""
    speed = np.linalg.norm(c)
    if speed == 0.0:
        return np.array(x, dtype=float)
    return mobius_add(x, np.tanh(speed / 2.0) * c / speed)


def _ball_log(x, y):
    """Inverse of :func:`_ball_exp`: frame components at ``x``."""
    w = mobius_add(-np.asarray(x, dtype=float), y)
    nw = np.linalg.norm(w)
    if nw == 0.0:
        return np.zeros_like(w)
    return 2.0 * np.arctanh(nw) * w / nw


def _ball_busemann(x, thetas):
    x = np.asarray(x, dtype=float)
    d2 = np.sum((x - thetas) ** 2, axis=-1)
    return np.log(d2) - np.log1p(-(x @ x))


def _ball_busemann_grad(x, thetas):
    x = np.asarray(x, dtype=float)
    diff = x - thetas
    d2 = np.sum(diff * diff, axis=-1)
    return (1.0 - x @ x) * diff / d2[:, None] + x


@dataclass(frozen=True)
class BallIsometry:
    """Isometry x -> R (a (+) x) of the Poincare ball.

    Acts on points and, by the same formula, on unit vectors of the ideal
    boundary.
    """

    shift: np.ndarray
    rotation: np.ndarray

    def __call__(self, x):
        return mobius_add(self.shift, x) @ self.rotation.T

    def inverse(self) -> "BallIsometry":
        # x = (-a) (+) R^T y = R^T ((-R a) (+) y); rotations commute with (+)
        return BallIsometry(shift=-(self.rotation @ self.shift), rotation=self.rotation.T)

    def then(self, other: "BallIsometry") -> "BallIsometry":
        """The isometry ``other o self``."""
        n = len(self.shift)
        c = other(self(np.zeros(n)))
        # x -> (-c) (+) g(x) is orthogonal; read its columns off the boundary
        q = mobius_add(-c, other(self(np.eye(n)))).T
        return BallIsometry(shift=q.T @ c, rotation=q)

    @classmethod
    def random(cls, n: int, rng: np.random.Generator, radius: float = 0.5) -> "BallIsometry":
        shift = random_ball_point(n, rng, radius)
        q, r = np.linalg.qr(rng.standard_normal((n, n)))
        q = q * np.sign(np.diag(r))
        return cls(shift=shift, rotation=q)


def random_ball_point(n: int, rng: np.random.Generator, radius: float) -> np.ndarray:
    """Uniform direction, ball norm uniform in [0, radius)."""
    u = rng.standard_normal(n)
    u /= np.linalg.norm(u)
    return rng.uniform(0.0, radius) * u


def random_unit(n: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.standard_normal(n)
    return u / np.linalg.norm(u)


# --------------------------------------------------------------------------
# model spaces
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpace:
    """Base class; concrete models override the geometric primitives."""

    kind: str = field(init=False, default="")

    # -- bookkeeping ------------------------------------------------------
    @property
    def dim(self) -> int:
        raise NotImplementedError

    @property
    def entropy(self) -> float:
        raise NotImplementedError

    @property
    def ideal_dim(self) -> int:
        raise NotImplementedError

    @property
    def origin(self) -> np.ndarray:
        return np.zeros(self.dim)

    def descriptor(self) -> dict:
        raise NotImplementedError

    @property
    def model_id(self) -> str:
        return json.dumps(self.descriptor(), sort_keys=True, separators=(",", ":"))

    def check_point(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape != (self.dim,):
            raise ModelError(f"point must have shape ({self.dim},), got {p.shape}")
        return p

    def check_vector(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise ModelError(f"tangent vector must have shape ({self.dim},), got {v.shape}")
        return v

    # -- metric -----------------------------------------------------------
    def frame(self, p) -> np.ndarray:
        """Orthonormal frame at ``p``; column j is the chart vector of e_j."""
        raise NotImplementedError

    def orthonormal_frame(self, p) -> list[np.ndarray]:
        f = self.frame(p)
        return [f[:, j].copy() for j in range(self.dim)]

    def metric_matrix(self, p) -> np.ndarray:
        f_inv = np.linalg.inv(self.frame(p))
        return f_inv.T @ f_inv

    def to_frame(self, p, u) -> np.ndarray:
        return np.linalg.solve(self.frame(p), self.check_vector(u))

    def from_frame(self, p, c) -> np.ndarray:
        return self.frame(p) @ np.asarray(c, dtype=float)

    def metric(self, p, u, v) -> float:
        p = self.check_point(p)
        return float(self.to_frame(p, u) @ self.to_frame(p, v))

    def norm(self, p, u) -> float:
        return float(np.sqrt(self.metric(p, u, u)))

    # -- geodesics --------------------------------------------------------
    def distance(self, p, q) -> float:
        raise NotImplementedError

    def exp(self, p, u) -> np.ndarray:
        """Exponential map of the chart tangent vector ``u`` at ``p``."""
        raise NotImplementedError

    def geodesic(self, p, direction, t: float) -> np.ndarray:
        """Point at arclength ``t`` along the geodesic leaving ``p`` toward ``direction``.

        The direction is normalized under the metric first.
        """
        p = self.check_point(p)
        nrm = self.norm(p, direction)
        if nrm == 0.0:
            raise ModelError("zero direction")
        return self.exp(p, np.asarray(direction, dtype=float) * (t / nrm))

    # -- curvature --------------------------------------------------------
    def sectional_matrix(self, p=None) -> np.ndarray:
        """Sectional curvatures of the frame planes (pair-diagonal models)."""
        raise NotImplementedError

    def curvature_tensor(self, p, u, v, w) -> np.ndarray:
        p = self.check_point(p)
        cu, cv, cw = (self.to_frame(p, a) for a in (u, v, w))
        return self.from_frame(p, pair_curvature_tensor(self.sectional_matrix(p), cu, cv, cw))

    def sectional_curvature(self, p, u, v) -> float:
        p = self.check_point(p)
        num = self.metric(p, self.curvature_tensor(p, u, v, u), v)
        den = self.metric(p, u, u) * self.metric(p, v, v) - self.metric(p, u, v) ** 2
        return num / den

    def jacobi_coefficients(self, p, c):
        """Frame data for the Jacobi equation along the geodesic from ``p``.

        Returns ``(kappa, omega)``: the sectional matrix, constant in the frame
        used, and ``omega(c)`` giving the connection matrix of that frame along
        a geodesic with frame velocity ``c``.
        """
        n = self.dim
        return self.sectional_matrix(p), lambda c: np.zeros((n, n))

    # -- boundary ---------------------------------------------------------
    def check_ideal(self, thetas) -> np.ndarray:
        raise NotImplementedError

    def busemann(self, x, thetas):
        """Basepoint-normalized Busemann function B(O, x, theta); vectorized."""
        raise NotImplementedError

    def busemann_grad(self, x, thetas) -> np.ndarray:
        """Gradients in the frame at ``x``; shape (N, n)."""
        raise NotImplementedError

    def busemann_hess(self, x, thetas) -> np.ndarray:
        """Hessians in the frame at ``x``; shape (N, n, n)."""
        raise NotImplementedError

    def busemann_moments(self, x, thetas, weights):
        """Weighted sums of B, dB, dB (x) dB and DdB over the nodes."""
        thetas = self.check_ideal(thetas)
        w = np.asarray(weights, dtype=float)
        val = w @ self.busemann(x, thetas)
        g = self.busemann_grad(x, thetas)
        grad = w @ g
        h = (g * w[:, None]).T @ g
        k = np.einsum("i,ijk->jk", w, self.busemann_hess(x, thetas))
        return val, grad, h, k

    def grad_busemann(self, x, theta) -> np.ndarray:
        """Chart gradient vector of B(., theta) at ``x``."""
        x = self.check_point(x)
        return self.from_frame(x, self.busemann_grad(x, np.atleast_2d(theta))[0])

    def hess_busemann(self, x, theta) -> np.ndarray:
        """Hessian of B(., theta) at ``x`` in the orthonormal frame."""
        x = self.check_point(x)
        return self.busemann_hess(x, np.atleast_2d(theta))[0]

    def ray_direction(self, x, theta) -> np.ndarray:
        """Frame components of the unit vector at ``x`` pointing toward ``theta``."""
        return -self.busemann_grad(self.check_point(x), np.atleast_2d(theta))[0]

    # -- sampling ---------------------------------------------------------
    def random_point(self, rng: np.random.Generator, radius: float = 1.0) -> np.ndarray:
        raise NotImplementedError

    def random_ideal_points(self, rng: np.random.Generator, m: int) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class HyperbolicSpace(ModelSpace):
    n: int = 2
    kind: str = field(init=False, default="hyperbolic")

    def __post_init__(self):
        if not 2 <= self.n <= MAX_DIM:
            raise ModelError(f"hyperbolic dimension must be in [2, {MAX_DIM}]")

    @property
    def dim(self):
        return self.n

    @property
    def entropy(self):
        return float(self.n - 1)

    @property
    def ideal_dim(self):
        return self.n

    def descriptor(self):
        return {"kind": "hyperbolic", "n": self.n}

    def check_point(self, p):
        p = super().check_point(p)
        if p @ p >= 1.0:
            raise ModelError("point outside the unit ball")
        return p

    def conformal_factor(self, p) -> float:
        p = np.asarray(p, dtype=float)
        return 2.0 / (1.0 - p @ p)

    def frame(self, p):
        return np.eye(self.n) / self.conformal_factor(self.check_point(p))

    def to_frame(self, p, u):
        return self.conformal_factor(p) * self.check_vector(u)

    def from_frame(self, p, c):
        return np.asarray(c, dtype=float) / self.conformal_factor(p)

    def distance(self, p, q):
        return float(_ball_distance(self.check_point(p), self.check_point(q)))

    def exp(self, p, u):
        p = self.check_point(p)
        return _ball_exp(p, self.to_frame(p, u))

    def log(self, p, q) -> np.ndarray:
        """Chart tangent vector at ``p`` whose exponential is ``q``."""
        p = self.check_point(p)
        return self.from_frame(p, _ball_log(p, self.check_point(q)))

    def sectional_matrix(self, p=None):
        return -(np.ones((self.n, self.n)) - np.eye(self.n))

    def check_ideal(self, thetas):
        t = np.atleast_2d(np.asarray(thetas, dtype=float))
        if t.shape[1] != self.n:
            raise UnsupportedBoundaryError(f"ideal points of H^{self.n} are unit vectors in R^{self.n}")
        if np.any(np.abs(np.linalg.norm(t, axis=1) - 1.0) > 1e-9):
            raise UnsupportedBoundaryError("ideal points must be unit vectors")
        return t

    def busemann(self, x, thetas):
        return _ball_busemann(self.check_point(x), self.check_ideal(thetas))

    def busemann_grad(self, x, thetas):
        return _ball_busemann_grad(self.check_point(x), self.check_ideal(thetas))

    def busemann_hess(self, x, thetas):
        g = self.busemann_grad(x, thetas)
        return np.eye(self.n)[None] - g[:, :, None] * g[:, None, :]

    def busemann_moments(self, x, thetas, weights):
        x = self.check_point(x)
        w = np.asarray(weights, dtype=float)
        val = w @ _ball_busemann(x, thetas)
        g = _ball_busemann_grad(x, thetas)
        h = (g * w[:, None]).T @ g
        return val, w @ g, h, w.sum() * np.eye(self.n) - h

    def random_point(self, rng, radius=1.0):
        """Random point at hyperbolic distance < ``radius`` from the origin."""
        return random_ball_point(self.n, rng, np.tanh(radius / 2.0))

    def random_ideal_points(self, rng, m):
        u = rng.standard_normal((m, self.n))
        return u / np.linalg.norm(u, axis=1, keepdims=True)


@dataclass(frozen=True)
class ProductSpace(ModelSpace):
    n1: int = 2
    n2: int = 2
    kind: str = field(init=False, default="product")

    def __post_init__(self):
        if self.n1 < 2 or self.n2 < 2 or self.n1 + self.n2 > MAX_DIM:
            raise ModelError(f"product factors must have dimension >= 2 and total <= {MAX_DIM}")

    @property
    def dim(self):
        return self.n1 + self.n2

    @property
    def entropy(self):
        return float(np.hypot(self.n1 - 1, self.n2 - 1))

    @property
    def ideal_dim(self):
        return self.n1 + self.n2 + 1

    @property
    def factors(self) -> tuple[HyperbolicSpace, HyperbolicSpace]:
        return HyperbolicSpace(self.n1), HyperbolicSpace(self.n2)

    def descriptor(self):
        return {"kind": "product", "n1": self.n1, "n2": self.n2}

    def split(self, p):
        p = np.asarray(p, dtype=float)
        return p[..., : self.n1], p[..., self.n1:]

    def split_ideal(self, thetas):
        t = np.atleast_2d(thetas)
        return t[:, : self.n1], t[:, self.n1: self.dim], t[:, self.dim]

    def check_point(self, p):
        p = super().check_point(p)
        a, b = self.split(p)
        if a @ a >= 1.0 or b @ b >= 1.0:
            raise ModelError("factor point outside the unit ball")
        return p

    def _factors(self, p):
        a, b = self.split(p)
        return 2.0 / (1.0 - a @ a), 2.0 / (1.0 - b @ b)

    def frame(self, p):
        l1, l2 = self._factors(self.check_point(p))
        return np.diag(np.r_[np.full(self.n1, 1.0 / l1), np.full(self.n2, 1.0 / l2)])

    def to_frame(self, p, u):
        l1, l2 = self._factors(p)
        u = self.check_vector(u)
        return np.r_[l1 * u[: self.n1], l2 * u[self.n1:]]

    def from_frame(self, p, c):
        l1, l2 = self._factors(p)
        c = np.asarray(c, dtype=float)
        return np.r_[c[: self.n1] / l1, c[self.n1:] / l2]

    def distance(self, p, q):
        (a1, b1), (a2, b2) = self.split(self.check_point(p)), self.split(self.check_point(q))
        return float(np.hypot(_ball_distance(a1, a2), _ball_distance(b1, b2)))

    def exp(self, p, u):
        p = self.check_point(p)
        c = self.to_frame(p, u)
        a, b = self.split(p)
        return np.r_[_ball_exp(a, c[: self.n1]), _ball_exp(b, c[self.n1:])]

    def log(self, p, q):
        p = self.check_point(p)
        (a1, b1), (a2, b2) = self.split(p), self.split(self.check_point(q))
        return self.from_frame(p, np.r_[_ball_log(a1, a2), _ball_log(b1, b2)])

    def sectional_matrix(self, p=None):
        n = self.dim
        kap = np.zeros((n, n))
        kap[: self.n1, : self.n1] = -1.0
        kap[self.n1:, self.n1:] = -1.0
        np.fill_diagonal(kap, 0.0)
        return kap

    def check_ideal(self, thetas):
        t = np.atleast_2d(np.asarray(thetas, dtype=float))
        if t.shape[1] != self.ideal_dim:
            raise UnsupportedBoundaryError(
                f"ideal points of the product are (theta1, theta2, slope) rows of length {self.ideal_dim}")
        t1, t2, slope = self.split_ideal(t)
        if np.any((slope < -1e-12) | (slope > np.pi / 2 + 1e-12)):
            raise UnsupportedBoundaryError("slope must lie in [0, pi/2]")
        bad1 = (np.abs(np.linalg.norm(t1, axis=1) - 1.0) > 1e-9) & (np.cos(slope) > 1e-15)
        bad2 = (np.abs(np.linalg.norm(t2, axis=1) - 1.0) > 1e-9) & (np.sin(slope) > 1e-15)
        if np.any(bad1 | bad2):
            raise UnsupportedBoundaryError("factor ideal points must be unit vectors")
        return t

    def _safe_parts(self, thetas):
        t1, t2, slope = self.split_ideal(self.check_ideal(thetas))
        # ignored coordinates at the slope endpoints are replaced by a valid dummy
        e1 = np.zeros(self.n1); e1[0] = 1.0
        e2 = np.zeros(self.n2); e2[0] = 1.0
        t1 = np.where((np.cos(slope) <= 1e-15)[:, None], e1, t1)
        t2 = np.where((np.sin(slope) <= 1e-15)[:, None], e2, t2)
        return t1, t2, np.cos(slope), np.sin(slope)

    def busemann(self, x, thetas):
        a, b = self.split(self.check_point(x))
        t1, t2, c, s = self._safe_parts(thetas)
        return c * _ball_busemann(a, t1) + s * _ball_busemann(b, t2)

    def busemann_grad(self, x, thetas):
        a, b = self.split(self.check_point(x))
        t1, t2, c, s = self._safe_parts(thetas)
        return np.hstack([c[:, None] * _ball_busemann_grad(a, t1), s[:, None] * _ball_busemann_grad(b, t2)])

    def busemann_hess(self, x, thetas):
        a, b = self.split(self.check_point(x))
        t1, t2, c, s = self._safe_parts(thetas)
        g1, g2 = _ball_busemann_grad(a, t1), _ball_busemann_grad(b, t2)
        out = np.zeros((len(c), self.dim, self.dim))
        out[:, : self.n1, : self.n1] = c[:, None, None] * (np.eye(self.n1) - g1[:, :, None] * g1[:, None, :])
        out[:, self.n1:, self.n1:] = s[:, None, None] * (np.eye(self.n2) - g2[:, :, None] * g2[:, None, :])
        return out

    def random_point(self, rng, radius=1.0):
        r = rng.uniform(0.0, radius)
        ang = rng.uniform(0.0, np.pi / 2)
        return np.r_[random_unit(self.n1, rng) * np.tanh(r * np.cos(ang) / 2),
                     random_unit(self.n2, rng) * np.tanh(r * np.sin(ang) / 2)]

    def random_ideal_points(self, rng, m):
        t1 = rng.standard_normal((m, self.n1))
        t2 = rng.standard_normal((m, self.n2))
        t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
        t2 /= np.linalg.norm(t2, axis=1, keepdims=True)
        return np.hstack([t1, t2, rng.uniform(0.0, np.pi / 2, size=(m, 1))])


@dataclass(frozen=True)
class HorosphericalSpace(ModelSpace):
    """R^n with metric dr^2 + sum_i exp(2 alpha_i r) dx_i^2.

    The r-lines converge as r -> -inf; that common end is the only exposed
    ideal point (``END``), with Busemann function B = r.
    """

    alphas: tuple = (1.0,)
    kind: str = field(init=False, default="horospherical")

    END = np.array([-1.0])

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if len(self.alphas) < 1 or len(self.alphas) + 1 > MAX_DIM:
            raise ModelError(f"need 1 to {MAX_DIM - 1} alphas")
        if any(a < 0 for a in self.alphas):
            raise ModelError("alphas must be nonnegative")

    @property
    def alpha(self) -> np.ndarray:
        return np.array(self.alphas)

    @property
    def dim(self):
        return len(self.alphas) + 1

    @property
    def entropy(self):
        return float(sum(self.alphas))

    @property
    def ideal_dim(self):
        return 1

    def descriptor(self):
        return {"kind": "horospherical", "alphas": list(self.alphas)}

    def _scales(self, p):
        return np.exp(self.alpha * np.asarray(p, dtype=float)[0])

    def frame(self, p):
        return np.diag(np.r_[1.0, 1.0 / self._scales(self.check_point(p))])

    def to_frame(self, p, u):
        u = self.check_vector(u)
        return np.r_[u[0], self._scales(p) * u[1:]]

    def from_frame(self, p, c):
        c = np.asarray(c, dtype=float)
        return np.r_[c[0], c[1:] / self._scales(p)]

    def omega(self, c) -> np.ndarray:
        """Connection matrix <nabla_c E_b, E_a> of the frame E."""
        n = self.dim
        om = np.zeros((n, n))
        om[1:, 0] = self.alpha * c[1:]
        om[0, 1:] = -self.alpha * c[1:]
        return om

    def _flow(self, t, state):
        n = self.dim
        r, c = state[0], state[n:]
        dx = np.r_[c[0], np.exp(-self.alpha * r) * c[1:]]
        return np.r_[dx, -self.omega(c) @ c]

    def exp(self, p, u):
        p = self.check_point(p)
        c = self.to_frame(p, u)
        speed = np.linalg.norm(c)
        if speed == 0.0:
            return p.copy()
        if np.all(c[1:] == 0.0):
            return np.r_[p[0] + c[0], p[1:]]
        sol = solve_ivp(self._flow, (0.0, speed), np.r_[p, c / speed], method="DOP853",
                        rtol=1e-12, atol=1e-12)
        return sol.y[: self.dim, -1]

    def distance(self, p, q):
        p, q = self.check_point(p), self.check_point(q)
        if np.allclose(p[1:], q[1:], rtol=0.0, atol=0.0):
            return float(abs(p[0] - q[0]))
        n = self.dim
        a = self.alpha

        def rhs(tau, y):
            r, dr, dx = y[0], y[n], y[n + 1:]
            e = np.exp(2.0 * a[:, None] * r[None, :])
            ddr = np.sum(a[:, None] * e * dx * dx, axis=0)
            ddx = -2.0 * a[:, None] * dr[None, :] * dx
            return np.vstack([y[n:], ddr, ddx])

        def bc(ya, yb):
            return np.r_[ya[:n] - p, yb[:n] - q]

        tau = np.linspace(0.0, 1.0, 41)
        guess = np.vstack([p[:, None] + np.outer(q - p, tau), np.repeat((q - p)[:, None], tau.size, 1)])
        sol = solve_bvp(rhs, bc, tau, guess, tol=1e-10, max_nodes=200000)
        if not sol.success:
            raise ModelError(f"geodesic boundary solve failed: {sol.message}")
        y0 = sol.sol(0.0)
        return self.norm(p, y0[n:])

    def sectional_matrix(self, p=None):
        a = np.r_[0.0, self.alpha]
        kap = -np.outer(a, a)
        kap[0, 1:] = kap[1:, 0] = -self.alpha ** 2
        np.fill_diagonal(kap, 0.0)
        return kap

    def jacobi_coefficients(self, p, c):
        return self.sectional_matrix(p), self.omega

    def check_ideal(self, thetas):
        t = np.atleast_2d(np.asarray(thetas, dtype=float))
        if t.shape[1] != 1 or np.any(t != self.END):
            raise UnsupportedBoundaryError("the horospherical model only exposes its distinguished end")
        return t

    def busemann(self, x, thetas):
        t = self.check_ideal(thetas)
        return np.full(len(t), self.check_point(x)[0])

    def busemann_grad(self, x, thetas):
        t = self.check_ideal(thetas)
        self.check_point(x)
        g = np.zeros((len(t), self.dim))
        g[:, 0] = 1.0
        return g

    def busemann_hess(self, x, thetas):
        t = self.check_ideal(thetas)
        self.check_point(x)
        return np.repeat(np.diag(np.r_[0.0, self.alpha])[None], len(t), axis=0)

    def random_point(self, rng, radius=1.0):
        return rng.uniform(-radius, radius, size=self.dim)

    def random_ideal_points(self, rng, m):
        return np.repeat(self.END[None], m, axis=0)


def model_from_descriptor(desc) -> ModelSpace:
    """Build a model from ``{"kind": ...}`` JSON (dict or string)."""
    if isinstance(desc, str):
        try:
            desc = json.loads(desc)
        except json.JSONDecodeError as exc:
            raise ModelError(f"model descriptor is not valid JSON: {exc}") from None
    if not isinstance(desc, dict):
        raise ModelError("model descriptor must be a JSON object")
    kind = desc.get("kind")
    try:
        if kind == "hyperbolic":
            return HyperbolicSpace(int(desc["n"]))
        if kind == "product":
            return ProductSpace(int(desc["n1"]), int(desc["n2"]))
        if kind == "horospherical":
            return HorosphericalSpace(tuple(desc["alphas"]))
    except KeyError as exc:
        raise ModelError(f"model descriptor missing field {exc}") from None
    raise ModelError(f"unknown model kind {kind!r}")
