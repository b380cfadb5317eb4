"""Brute-force reference computations used to check the closed forms.

Nothing here is fast. These routines evaluate the objective directly on
grids or by finite differences, so they share no algebra with the solvers
they are used to verify.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter, NumericalFailure

__all__ = [
    "GridSpec",
    "fd_gradient",
    "grid_min_1d",
    "zoom_min_1d",
    "scalar_capped_prox_oracle",
    "scalar_capped_prox_oracle_batch",
]


@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    points: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise InvalidParameter(f"grid needs lo < hi, got [{self.lo}, {self.hi}]")
        if self.points < 2:
            raise InvalidParameter("grid needs at least two points")

    def values(self):
        return np.linspace(self.lo, self.hi, self.points)


def fd_gradient(f, x, step=1e-6):
    """Central-difference gradient of a scalar function of an array.

    The result has the shape of ``x``.
    """
    if step <= 0:
        raise InvalidParameter("finite-difference step must be positive")
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    grad = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f(x)
        flat[i] = orig - step
        fm = f(x)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericalFailure(f"non-finite function value at coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * step)
    return grad.reshape(x.shape)


def _evaluate(phi, pts, vectorized):
    if vectorized:
        vals = np.asarray(phi(pts), dtype=np.float64)
    else:
        vals = np.array([phi(float(p)) for p in pts], dtype=np.float64)
    if not np.all(np.isfinite(vals)):
        raise NumericalFailure("non-finite value on the grid")
    return vals


def grid_min_1d(phi, grid, vectorized=False):
    """Exhaustive minimisation over a grid; returns ``(argmin, min)``.

    Ties go to the smaller argument (``np.argmin`` returns the first index).
    """
    pts = grid.values()
    vals = _evaluate(phi, pts, vectorized)
    i = int(np.argmin(vals))
    return float(pts[i]), float(vals[i])


def zoom_min_1d(phi, lo, hi, tol=1e-10, points=201, vectorized=False):
    """Nested-grid minimisation of a unimodal function on ``[lo, hi]``.

    Each level re-grids two spacings either side of the incumbent, so the
    bracket shrinks by ``(points - 1) / 4`` per level.
    """
    a, b = float(lo), float(hi)
    best_x, best_v = a, np.inf
    while True:
        pts = np.linspace(a, b, points)
        vals = _evaluate(phi, pts, vectorized)
        i = int(np.argmin(vals))
        if vals[i] < best_v:
            best_x, best_v = float(pts[i]), float(vals[i])
        h = (b - a) / (points - 1)
        if h <= tol:
            return best_x, best_v
        a, b = max(lo, best_x - 2 * h), min(hi, best_x + 2 * h)


def _capped_model(x, u, w, mu, theta):
    return 0.5 * w * (x - u) ** 2 + mu * np.minimum(np.abs(x), theta)


def scalar_capped_prox_oracle_batch(u, w, mu, theta, points=4001, tol=1e-9, n_starts=4):
    """Vectorised brute-force minimiser of ``w/2 (x-u)^2 + mu min(|x|, theta)``.

    For every tuple a uniform grid over ``[-|u|-theta-1, |u|+theta+1]`` is
    scanned; the ``n_starts`` lowest grid-local minima and the three
    breakpoints ``{-theta, 0, theta}`` are then refined by nested grids down
    to ``tol``.
    """
    u, w, mu, theta = np.broadcast_arrays(
        *(np.asarray(v, dtype=np.float64) for v in (u, w, mu, theta))
    )
    u, w, mu, theta = (v.reshape(-1, 1) for v in (u, w, mu, theta))
    if np.any(w <= 0):
        raise InvalidParameter("prox weight must be positive")
    half = np.abs(u) + theta + 1.0
    t = np.linspace(-1.0, 1.0, points)[None, :]
    xs = t * half
    vals = _capped_model(xs, u, w, mu, theta)

    interior = np.full(vals.shape, False)
    interior[:, 1:-1] = (vals[:, 1:-1] <= vals[:, :-2]) & (vals[:, 1:-1] <= vals[:, 2:])
    interior[:, 0] = vals[:, 0] <= vals[:, 1]
    interior[:, -1] = vals[:, -1] <= vals[:, -2]
    masked = np.where(interior, vals, np.inf)
    k = min(n_starts, points)
    idx = np.argsort(masked, axis=1, kind="stable")[:, :k]
    starts = np.take_along_axis(xs, idx, axis=1)
    valid = np.isfinite(np.take_along_axis(masked, idx, axis=1))
    starts = np.where(valid, starts, starts[:, :1])
    starts = np.concatenate([starts, -theta, np.zeros_like(theta), theta], axis=1)

    h = 2.0 * half / (points - 1) * np.ones_like(starts)
    centers = starts
    lo_bound, hi_bound = -half, half
    sub = np.linspace(-2.0, 2.0, 81)[None, None, :]
    while True:
        cand = np.clip(centers[:, :, None] + sub * h[:, :, None], lo_bound[:, :, None], hi_bound[:, :, None])
        cv = _capped_model(cand, u[:, :, None], w[:, :, None], mu[:, :, None], theta[:, :, None])
        j = np.argmin(cv, axis=2)
        centers = np.take_along_axis(cand, j[:, :, None], axis=2)[:, :, 0]
        h = h / 20.0
        if np.all(h <= tol):
            break
    final_v = _capped_model(centers, u, w, mu, theta)
    best = np.argmin(final_v, axis=1)
    x = np.take_along_axis(centers, best[:, None], axis=1)[:, 0]
    v = np.take_along_axis(final_v, best[:, None], axis=1)[:, 0]
    return x, v


def scalar_capped_prox_oracle(u, w, mu, theta, points=1_000_000):
    """Single-tuple version of :func:`scalar_capped_prox_oracle_batch`.

    Uses the dense default grid (10^6 points) and refines the spacing to
    1e-9.  Near a smooth minimum the objective is flat to second order, so
    the argument is only resolved to about ``sqrt(machine eps)`` times the
    scale of the problem; the value is accurate to rounding.
    """
    x, _ = scalar_capped_prox_oracle_batch(u, w, mu, theta, points=points, tol=1e-9)
    return float(x[0])
