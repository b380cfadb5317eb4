"""Dense linear-algebra primitives, seeded randomness and small polynomial solvers.

Matrices and vectors are plain float64 ``numpy`` arrays; :func:`as_matrix`
and :func:`as_vector` enforce the shape and finiteness invariants at the
boundaries where data enters the package.
"""

import math

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import (
    ConvergenceFailure,
    DegenerateCubic,
    InvalidArgument,
    InvalidParameter,
    NotPositiveDefinite,
)

__all__ = [
    "as_matrix",
    "as_vector",
    "make_rng",
    "fork_rngs",
    "soft_threshold",
    "cubic_real_roots",
    "quartic_value",
    "quartic_min_unit",
    "spectral_norm",
    "SpdFactor",
    "solve_spd",
]


def as_matrix(a, name="matrix"):
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise InvalidArgument(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidArgument(f"{name} contains non-finite entries")
    return m


def as_vector(a, name="vector"):
    v = np.asarray(a, dtype=np.float64)
    if v.ndim != 1:
        raise InvalidArgument(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidArgument(f"{name} contains non-finite entries")
    return v


def make_rng(seed):
    """Return a PCG64 generator; same seed gives the same stream everywhere."""
    return np.random.Generator(np.random.PCG64(np.uint64(seed)))


def fork_rngs(seed, n):
    """Derive ``n`` independent single-owner streams from one seed."""
    children = np.random.SeedSequence(int(seed)).spawn(n)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def soft_threshold(x, tau):
    """Entrywise soft-thresholding ``[x - tau]^+ - [-x - tau]^+``.

    Works for scalars and arrays; ``tau`` may be a scalar or broadcastable
    array of non-negative thresholds.
    """
    tau_arr = np.asarray(tau, dtype=np.float64)
    if np.any(tau_arr < 0):
        raise InvalidParameter("soft-threshold level must be non-negative")
    x_arr = np.asarray(x, dtype=np.float64)
    out = np.maximum(x_arr - tau_arr, 0.0) - np.maximum(-x_arr - tau_arr, 0.0)
    if np.ndim(out) == 0:
        return float(out)
    return out


def _polyval3(c3, c2, c1, c0, x):
    return ((c3 * x + c2) * x + c1) * x + c0


def _newton_polish(c3, c2, c1, c0, x, steps=3):
    """A few Newton steps, each kept only if it shrinks the residual."""
    fx = _polyval3(c3, c2, c1, c0, x)
    for _ in range(steps):
        dfx = (3.0 * c3 * x + 2.0 * c2) * x + c1
        if fx == 0.0 or dfx == 0.0 or not math.isfinite(dfx):
            break
        y = x - fx / dfx
        fy = _polyval3(c3, c2, c1, c0, y) if math.isfinite(y) else math.inf
        if abs(fy) >= abs(fx):
            break
        x, fx = y, fy
    return x


def _is_root(c3, c2, c1, c0, x, rtol=1e-12):
    terms = max(abs(c3 * x**3), abs(c2 * x * x), abs(c1 * x), abs(c0))
    return abs(_polyval3(c3, c2, c1, c0, x)) <= rtol * terms


def _cardano(a2, a1, a0):
    """Closed-form real roots of the monic cubic ``x^3 + a2 x^2 + a1 x + a0``."""
    shift = a2 / 3.0
    # depressed cubic t^3 + p t + q with x = t - shift
    p = a1 - a2 * a2 / 3.0
    q = 2.0 * a2**3 / 27.0 - a2 * a1 / 3.0 + a0
    half_q = q / 2.0
    third_p = p / 3.0
    disc = half_q * half_q + third_p**3
    if disc >= 0.0:
        sq = math.sqrt(disc)
        # take the larger-magnitude cube root first to avoid cancellation
        u = float(np.cbrt(-half_q - sq if half_q > 0 else -half_q + sq))
        ts = [u - third_p / u if u != 0.0 else 0.0]
    else:
        r = math.sqrt(-third_p)
        phi = math.acos(min(1.0, max(-1.0, -half_q / (r**3))))
        ts = [2.0 * r * math.cos((phi - 2.0 * math.pi * k) / 3.0) for k in range(3)]
    return [t - shift for t in ts]


def _monotone_brackets(a2, a1, a0):
    """Cut points splitting the real line into intervals where the cubic is monotone.

    The outer ends are the Cauchy bound, so every real root lies inside.
    """
    bound = 1.0 + max(abs(a2), abs(a1), abs(a0))
    # critical points: 3 x^2 + 2 a2 x + a1 = 0
    disc = a2 * a2 - 3.0 * a1
    crit = []
    if disc > 0.0:
        qq = -(a2 + math.copysign(math.sqrt(disc), a2))
        crit = sorted([qq / 3.0, a1 / qq] if qq != 0.0 else [0.0])
    elif disc == 0.0:
        crit = [-a2 / 3.0]
    return [-bound] + crit + [bound], crit


def cubic_real_roots(c3, c2, c1, c0):
    """Real roots of ``c3 x^3 + c2 x^2 + c1 x + c0``.

    Roots come from Cardano's formula followed by one Newton step.  Each
    interval on which the cubic is monotone holds at most one root; when the
    closed-form value for a sign-changing interval is missing or inaccurate
    (close root pairs make Cardano's formula lose digits), the root is
    recomputed there by Brent's method.  Tangential roots at a critical
    point are detected by their residual.  Returns a sorted list of 1 to 3
    distinct values.
    """
    if c3 == 0.0:
        raise DegenerateCubic("leading coefficient is zero; use the quadratic path")
    a2, a1, a0 = c2 / c3, c1 / c3, c0 / c3
    if not all(math.isfinite(v) for v in (a2, a1, a0)):
        raise InvalidParameter("cubic coefficients overflow after normalisation")

    def poly(x):
        return ((x + a2) * x + a1) * x + a0

    closed = [_newton_polish(1.0, a2, a1, a0, r) for r in _cardano(a2, a1, a0)]
    cuts, crit = _monotone_brackets(a2, a1, a0)
    roots = [c for c in crit if _is_root(1.0, a2, a1, a0, c, rtol=1e-10)]
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        flo, fhi = poly(lo), poly(hi)
        if flo == 0.0:
            roots.append(lo)
            continue
        if fhi == 0.0 or (flo < 0.0) == (fhi < 0.0):
            continue
        inside = [r for r in closed if lo <= r <= hi and _is_root(1.0, a2, a1, a0, r)]
        if inside:
            roots.append(inside[0])
        else:
            roots.append(scipy.optimize.brentq(poly, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                                                   maxiter=500, disp=False))
    if poly(cuts[-1]) == 0.0:
        roots.append(cuts[-1])
    roots.sort()
    out = []
    for r in roots:
        if not out or abs(r - out[-1]) > 1e-12 * max(1.0, abs(r)):
            out.append(r)
    return out


def quartic_value(a, b, c, d, gamma):
    """Evaluate ``a/4 g^4 + b/3 g^3 + c/2 g^2 + d g`` (vectorised over gamma)."""
    g = np.asarray(gamma, dtype=np.float64)
    return (((a / 4.0 * g + b / 3.0) * g + c / 2.0) * g + d) * g


def _stationary_points(a, b, c, d):
    """Real roots of the derivative ``a g^3 + b g^2 + c g + d``."""
    if a != 0.0 and all(math.isfinite(v / a) for v in (b, c, d)):
        try:
            with np.errstate(over="raise", invalid="raise"):
                roots = cubic_real_roots(a, b, c, d)
            if all(math.isfinite(r) for r in roots):
                return roots
        except (FloatingPointError, OverflowError):
            pass
        # cubic term negligible at this scale; fall through to the quadratic path
    if b != 0.0:
        disc = c * c - 4.0 * b * d
        if disc < 0.0:
            return []
        sq = math.sqrt(disc)
        # numerically stable pair
        q = -0.5 * (c + math.copysign(sq, c)) if c != 0.0 else -0.5 * sq
        roots = []
        if q != 0.0:
            roots.append(q / b)
            roots.append(d / q)
        else:
            roots.append(0.0)
        return roots
    if c != 0.0:
        return [-d / c]
    return []


def quartic_min_unit(a, b, c, d):
    """Global minimiser over [0, 1] of ``a/4 g^4 + b/3 g^3 + c/2 g^2 + d g``.

    Candidates are the endpoints plus every real stationary point clipped to
    the interval; the smallest value wins, ties going to the smaller step.
    """
    candidates = {0.0, 1.0}
    for r in _stationary_points(float(a), float(b), float(c), float(d)):
        if math.isfinite(r):
            candidates.add(min(1.0, max(0.0, r)))
    best_g, best_v = None, math.inf
    for g in sorted(candidates):
        v = float(quartic_value(a, b, c, d, g))
        if v < best_v:
            best_g, best_v = g, v
    return best_g


def spectral_norm(m, rtol=1e-8, max_iter=10_000):
    """Largest singular value by power iteration on ``M^T M``.

    Starts from the normalised all-ones vector, so the result is fully
    deterministic.
    """
    m = as_matrix(m, "M")
    if m.size == 0:
        raise InvalidArgument("spectral norm of an empty matrix")
    n = m.shape[1]
    v = np.full(n, 1.0 / math.sqrt(n))
    sigma = 0.0
    for _ in range(max_iter):
        w = m.T @ (m @ v)
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            if sigma == 0.0 and np.any(m):
                # start vector orthogonal to the row space; restart off-axis
                v = np.arange(1, n + 1, dtype=np.float64)
                v /= np.linalg.norm(v)
                continue
            return sigma
        new_sigma = math.sqrt(nw)
        v = w / nw
        if abs(new_sigma - sigma) <= rtol * new_sigma:
            return new_sigma
        sigma = new_sigma
    raise ConvergenceFailure("power iteration hit its iteration cap", best_estimate=sigma)


class SpdFactor:
    """Cholesky factorisation of a symmetric positive definite matrix.

    Reusable across right-hand sides (the ADMM A-update solves with the same
    matrix every iteration).
    """

    def __init__(self, m):
        m = as_matrix(m, "M")
        if m.shape[0] != m.shape[1]:
            raise InvalidArgument(f"SPD matrix must be square, got {m.shape}")
        try:
            self._cf = scipy.linalg.cho_factor(m, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite(str(exc)) from exc
        self.n = m.shape[0]

    def solve(self, b):
        b = np.asarray(b, dtype=np.float64)
        if b.shape[0] != self.n:
            raise InvalidArgument(f"right-hand side has {b.shape[0]} rows, expected {self.n}")
        return scipy.linalg.cho_solve(self._cf, b, check_finite=False)


def solve_spd(m, b):
    """Solve ``M X = B`` for symmetric positive definite ``M``."""
    return SpdFactor(m).solve(b)
