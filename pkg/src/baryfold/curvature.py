"""Curvature forms R_v, partial traces Tr_k and the negative k-Ricci condition."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, qmc

from .models import ModelError, ModelSpace, pair_curvature_form

NULL_TOL = 1e-8
PSD_TOL = 1e-10


@dataclass(frozen=True)
class SpectralSummary:
    eigenvalues: np.ndarray
    null_dim: int
    tr_k_table: np.ndarray

    def tr_k(self, k: int) -> float:
        return float(self.tr_k_table[k - 1])


def spectral_summary(matrix, null_tol: float = NULL_TOL) -> SpectralSummary:
    ev = np.linalg.eigvalsh(_symmetric(matrix))
    return SpectralSummary(ev, int(np.sum(ev < null_tol)), np.cumsum(ev))


@dataclass(frozen=True)
class CurvatureForm:
    """R_v(e_i, e_j) = -<R(v, e_i)v, e_j> in the orthonormal frame at ``base``."""

    base: np.ndarray
    direction: np.ndarray
    matrix: np.ndarray

    @property
    def spectrum(self) -> SpectralSummary:
        return spectral_summary(self.matrix)


def _symmetric(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    return 0.5 * (a + a.T)


def curvature_form(model: ModelSpace, p, v) -> CurvatureForm:
    """Curvature form along the chart vector ``v`` at ``p`` (normalized first)."""
    p = model.check_point(p)
    c = model.to_frame(p, v)
    nrm = np.linalg.norm(c)
    if nrm == 0.0:
        raise ModelError("zero direction")
    c = c / nrm
    return CurvatureForm(p, c, pair_curvature_form(model.sectional_matrix(p), c))


def tr_k(a, k: int) -> float:
    """Sum of the ``k`` smallest eigenvalues of the symmetric matrix ``a``."""
    a = _symmetric(a)
    if not 1 <= k <= a.shape[0]:
        raise ValueError(f"k must lie in 1..{a.shape[0]}")
    return float(np.sum(np.linalg.eigvalsh(a)[:k]))


def ric_k(model: ModelSpace, p, v, k: int) -> float:
    return -tr_k(curvature_form(model, p, v).matrix, k)


def _forms(kappa: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    kap = np.array(kappa, dtype=float)
    np.fill_diagonal(kap, 0.0)
    forms = kap[None] * dirs[:, :, None] * dirs[:, None, :]
    idx = np.arange(kap.shape[0])
    forms[:, idx, idx] = -(dirs * dirs) @ kap
    return forms


def sphere_directions(n: int, samples: int, seed: int) -> np.ndarray:
    """Scrambled Sobol points pushed to S^{n-1} through the Gaussian quantile."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        u = qmc.Sobol(n, scramble=True, seed=seed).random(samples)
    z = norm.ppf(np.clip(u, 1e-12, 1.0 - 1e-12))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _axis_directions(n: int) -> np.ndarray:
    eye = np.eye(n)
    pairs = [(eye[i] + s * eye[j]) / np.sqrt(2.0) for i in range(n) for j in range(i + 1, n) for s in (1, -1)]
    return np.vstack([eye] + pairs) if pairs else eye


def check_negative_kricci(model: ModelSpace, k: int, samples: int = 4096, seed: int = 0,
                          points: int = 4) -> dict:
    """Sample unit directions and test Ric_k < 0 together with its equivalents.

    The conditions cross-checked are: null space of R_v of dimension < k,
    k-th eigenvalue bounded below by C0 > 0, and Tr_k bounded below by
    delta > 0.  All models here are homogeneous, so a few sampled base
    points act only as a consistency check.
    """
    n = model.dim
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in 1..{n}")
    rng = np.random.default_rng(seed)
    dirs = np.vstack([sphere_directions(n, samples, seed), _axis_directions(n)])
    worst_tr, worst_dir, c0, max_null = np.inf, None, np.inf, 0
    for _ in range(points):
        p = model.random_point(rng, 1.0)
        ev = np.linalg.eigvalsh(_forms(model.sectional_matrix(p), dirs))
        if ev[:, 0].min() < -PSD_TOL:
            raise ArithmeticError("curvature form is not positive semi-definite")
        trk = ev[:, :k].sum(axis=1)
        i = int(np.argmin(trk))
        if trk[i] < worst_tr:
            worst_tr, worst_dir = float(trk[i]), dirs[i]
        c0 = min(c0, float(ev[:, k - 1].min()))
        max_null = max(max_null, int((ev < NULL_TOL).sum(axis=1).max()))
    cond_ricci = worst_tr > PSD_TOL
    cond_null = max_null <= k - 1
    cond_floor = c0 > NULL_TOL
    return {
        "model": model.descriptor(),
        "k": k,
        "holds": bool(cond_ricci),
        "worst_value": -worst_tr,
        "worst_direction": worst_dir.tolist(),
        "C0": c0,
        "delta": worst_tr,
        "max_null_dim": max_null,
        "conditions": {"ricci": cond_ricci, "null_dim": cond_null, "eigen_floor": cond_floor,
                       "trace_floor": cond_ricci},
        "consistent": cond_ricci == cond_null == cond_floor and (not cond_ricci or c0 >= worst_tr / k - PSD_TOL),
        "samples": int(len(dirs)),
        "seed": seed,
    }


def averaged_tr_k_bound(matrices, weights, k: int) -> dict:
    """Compare Tr_k of a weighted average with the smallest individual Tr_k."""
    mats = np.asarray(matrices, dtype=float)
    w = np.asarray(weights, dtype=float)
    if abs(w.sum() - 1.0) > 1e-10 or np.any(w < 0):
        raise ValueError("weights must be a probability vector")
    lhs = tr_k(np.einsum("i,ijk->jk", w, mats), k)
    rhs = min(tr_k(a, k) for a in mats)
    return {"lhs": lhs, "rhs": rhs, "holds": lhs >= rhs - 1e-10}
