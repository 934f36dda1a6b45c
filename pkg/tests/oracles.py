"""Independent reference computations used by several test files."""
import numpy as np


def ball_to_hyperboloid(y):
    """Ball point -> (x0, x) on the upper sheet of -x0^2 + |x|^2 = -1."""
    y = np.asarray(y, dtype=float)
    s = 1.0 - y @ y
    return np.r_[(1.0 + y @ y) / s, 2.0 * y / s]


def ray_distance(y, theta, t):
    """d(y, gamma(t)) for the unit-speed ray from the origin toward theta, via the hyperboloid.

    gamma(t) = (cosh t, sinh t * theta); cosh d = -<Y, gamma(t)>_Lorentz.  For
    large t the arccosh is taken in log form to avoid overflow.
    """
    Y = ball_to_hyperboloid(y)
    # -<Y, Z> = Y0 cosh t - sinh t (Y . theta) = e^t (Y0 - Y.theta)/2 + e^{-t} (Y0 + Y.theta)/2
    a = 0.5 * (Y[0] - Y[1:] @ theta)
    b = 0.5 * (Y[0] + Y[1:] @ theta)
    if t > 30.0:
        # log(c + sqrt(c^2 - 1)) with c = a e^t + b e^{-t}
        lc = t + np.log(a) + np.log1p(b * np.exp(-2.0 * t) / a)
        return float(lc + np.log(2.0) + np.log(0.5 * (1.0 + np.sqrt(1.0 - np.exp(-2.0 * lc)))))
    return float(np.arccosh(a * np.exp(t) + b * np.exp(-t)))


def product_ray_excess(y1, y2, th1, th2, slope, t):
    """d(y, gamma(t)) - t on a product, gamma leaving the origin with the given slope."""
    d1 = ray_distance(y1, th1, t * np.cos(slope))
    d2 = ray_distance(y2, th2, t * np.sin(slope))
    return float(np.hypot(d1, d2) - t)


def brute_envelope(n, grid=60):
    """Max of prod mu_i^{1/2} / prod (1 - mu_i) over {mu >= 0, sum mu = 1}.

    Exhaustive lattice search with denominator ``grid`` followed by a
    Nelder-Mead polish in softmax coordinates from the best lattice points.
    Written independently of the library's SLSQP search.
    """
    from itertools import combinations
    from scipy.optimize import minimize

    def value(mu):
        if np.any(mu >= 1.0) or np.any(mu < 0.0):
            return 0.0
        return float(np.exp(0.5 * np.sum(np.log(mu)) - np.sum(np.log1p(-mu)))) if np.all(mu > 0) else 0.0

    # compositions of grid into n positive parts via stars and bars
    best = []
    for cuts in combinations(range(1, grid), n - 1):
        parts = np.diff(np.r_[0, cuts, grid]) / grid
        best.append((value(parts), parts))
    best.sort(key=lambda p: -p[0])
    top = best[0][0]
    for _, mu0 in best[:5]:
        z0 = np.log(mu0)
        f = lambda z: -value(np.exp(z - z.max()) / np.exp(z - z.max()).sum())
        r = minimize(f, z0, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 20000})
        top = max(top, -r.fun)
    return top
