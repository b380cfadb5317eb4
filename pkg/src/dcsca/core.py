"""Generic successive convex approximation for ``f + g_plus - g_minus``.

The problem is described by a :class:`DcProblem`; a :class:`SurrogateSolver`
returns the minimiser of the convex approximate problem at the current point
and :func:`run_sca` combines the two with one of the line searches below.
Iterates may be arrays of any shape; inner products flatten them.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import (
    InternalError,
    InvalidArgument,
    InvalidParameter,
    LineSearchFailure,
    NumericalFailure,
)
from .trace import IterationTrace, RunResult, Stopwatch

__all__ = [
    "DcProblem",
    "SurrogateSolver",
    "Exact",
    "Successive",
    "Constant",
    "upper_bound_eval",
    "descent_slope",
    "stationarity_gap",
    "descent_check",
    "exact_line_search_convex",
    "successive_line_search",
    "run_sca",
    "proximal_surrogate",
    "prox_gradient_backtracking",
    "gist_baseline",
]

DESCENT_EPS = 1e-12


def _zero(x):
    return 0.0


@dataclass
class DcProblem:
    """Objective ``h = f + g_plus - g_minus`` with its (sub)gradient oracles.

    ``gminus_eval=None`` means ``g_minus`` is identically zero.  ``gplus_prox``
    is optional and only needed by the proximal surrogate and GIST; it must
    return ``argmin_x g_plus(x) + ||x - v||^2 / (2 step)``.  The feasible set is
    the whole space.
    """

    f_eval: Callable
    f_grad: Callable
    gplus_eval: Callable
    gminus_eval: Optional[Callable] = None
    gminus_subgrad: Optional[Callable] = None
    gplus_prox: Optional[Callable] = None
    dimension: Optional[int] = None

    def __post_init__(self):
        if (self.gminus_eval is None) != (self.gminus_subgrad is None):
            raise InvalidArgument("g_minus and its subgradient must be given together")

    @property
    def gminus_is_zero(self):
        return self.gminus_eval is None

    def gminus(self, x):
        return 0.0 if self.gminus_eval is None else float(self.gminus_eval(x))

    def xi_minus(self, x):
        if self.gminus_subgrad is None:
            return np.zeros_like(x, dtype=np.float64)
        return self.gminus_subgrad(x)

    def h(self, x):
        return float(self.f_eval(x)) + float(self.gplus_eval(x)) - self.gminus(x)

    def check_point(self, x, name="x"):
        x = np.asarray(x, dtype=np.float64)
        if self.dimension is not None and x.size != self.dimension:
            raise InvalidArgument(f"{name} has {x.size} entries, problem dimension is {self.dimension}")
        return x


@dataclass
class SurrogateSolver:
    """Best-response map of a convex approximate problem.

    ``solve(x_t, xi_minus)`` returns the minimiser of
    ``f~(x; x_t) - (x - x_t)^T xi_minus + g_plus(x)``.
    """

    solve: Callable
    description: str = ""
    # optional f~(x; x_t) evaluator, used for gradient-consistency checks
    f_tilde: Optional[Callable] = None


@dataclass(frozen=True)
class Exact:
    """Exact minimisation of the differentiable majorant model (bisection)."""

    tol: float = 1e-10


@dataclass(frozen=True)
class Successive:
    alpha: float = 0.01
    beta: float = 0.5
    m_max: int = 60

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidParameter(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.beta < 1.0:
            raise InvalidParameter(f"beta must lie in (0, 1), got {self.beta}")
        if self.m_max < 0:
            raise InvalidParameter("m_max must be non-negative")


@dataclass(frozen=True)
class Constant:
    gamma: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise InvalidParameter(f"constant step must lie in (0, 1], got {self.gamma}")


def upper_bound_eval(p, x, x_t):
    """Majorant of ``h`` obtained by linearising ``g_minus`` at ``x_t``."""
    x = np.asarray(x, dtype=np.float64)
    x_t = np.asarray(x_t, dtype=np.float64)
    if x.shape != x_t.shape:
        raise InvalidArgument(f"shape mismatch {x.shape} vs {x_t.shape}")
    lin = np.vdot(x - x_t, p.xi_minus(x_t))
    return float(p.f_eval(x)) - p.gminus(x_t) - float(lin) + float(p.gplus_eval(x))


def descent_slope(p, x_t, bx_t, grad=None, xi=None, gp_x=None, gp_bx=None):
    """Signed quantity ``d^T (grad f - xi_minus) + g_plus(Bx) - g_plus(x)``."""
    grad = p.f_grad(x_t) if grad is None else grad
    xi = p.xi_minus(x_t) if xi is None else xi
    gp_x = float(p.gplus_eval(x_t)) if gp_x is None else gp_x
    gp_bx = float(p.gplus_eval(bx_t)) if gp_bx is None else gp_bx
    d = np.asarray(bx_t) - np.asarray(x_t)
    return float(np.vdot(d, grad - xi)) + gp_bx - gp_x


def stationarity_gap(p, x_t, bx_t):
    return abs(descent_slope(p, x_t, bx_t))


def descent_check(p, x_t, bx_t):
    return descent_slope(p, x_t, bx_t) < -DESCENT_EPS


def exact_line_search_convex(p, x_t, bx_t, delta_gplus, tol=1e-10):
    """Minimise ``f(x_t + g d) + g * delta_gplus`` over ``g`` in [0, 1].

    ``f`` must be convex along the segment.  The derivative is bisected to an
    interval of width ``tol``; zero is returned only when the slope at zero is
    non-negative.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    d = np.asarray(bx_t, dtype=np.float64) - x_t
    if not np.any(d):
        return 0.0

    def dphi(g):
        v = float(np.vdot(d, p.f_grad(x_t + g * d))) + delta_gplus
        if not np.isfinite(v):
            raise NumericalFailure(f"non-finite line-search slope at step {g}")
        return v

    if dphi(0.0) >= 0.0:
        return 0.0
    if dphi(1.0) <= 0.0:
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if dphi(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def successive_line_search(p, x_t, bx_t, alpha, beta, m_max=60, *, fx=None, grad=None,
                           xi=None, gp_x=None, gp_bx=None):
    """Armijo-type backtracking on the majorant model.

    Returns ``beta**m`` for the smallest admissible ``m``.  ``g_plus`` is
    evaluated at ``bx_t`` once (or not at all when ``gp_bx`` is supplied);
    only ``f`` is re-evaluated while backtracking.
    """
    if not 0.0 < alpha < 1.0 or not 0.0 < beta < 1.0:
        raise InvalidParameter("alpha and beta must lie in (0, 1)")
    x_t = np.asarray(x_t, dtype=np.float64)
    d = np.asarray(bx_t, dtype=np.float64) - x_t
    fx = float(p.f_eval(x_t)) if fx is None else fx
    xi = p.xi_minus(x_t) if xi is None else xi
    grad = p.f_grad(x_t) if grad is None else grad
    gp_x = float(p.gplus_eval(x_t)) if gp_x is None else gp_x
    gp_bx = float(p.gplus_eval(bx_t)) if gp_bx is None else gp_bx

    d_xi = float(np.vdot(d, xi))
    dgp = gp_bx - gp_x
    slope = float(np.vdot(d, grad)) - d_xi + dgp
    if not slope < -DESCENT_EPS:
        raise InvalidArgument("successive line search called without a descent direction")
    step = 1.0
    for _ in range(m_max + 1):
        lhs = float(p.f_eval(x_t + step * d)) - step * d_xi + step * dgp
        if lhs <= fx + alpha * step * slope:
            return step
        step *= beta
    raise LineSearchFailure(f"no admissible step within {m_max} backtracking steps")


def run_sca(p, s, ls, x0, delta=1e-6, max_iter=1000, clock=None):
    """Successive convex approximation driver.

    Parameters
    ----------
    p : DcProblem
    s : SurrogateSolver
    ls : Exact, Successive, Constant or callable
        A callable is invoked as ``ls(x_t, bx_t, info)`` where ``info`` holds
        the quantities already computed this iteration, and returns the step.
    x0 : array_like
    delta : float
        Stop once the stationarity gap is at most ``delta``.
    max_iter : int

    Returns
    -------
    RunResult
        ``trace[t]`` describes ``x^t``: its objective, the gap measured there,
        and the step that produced it (0 for ``t = 0``).  ``stats`` holds the
        number of ``g_plus`` evaluations at the best response per iteration.
    """
    if delta <= 0:
        raise InvalidParameter("delta must be positive")
    clock = Stopwatch() if clock is None else clock
    x = p.check_point(x0, "x0").copy()
    trace = []
    gplus_bx_evals = []
    converged = False
    gamma = 0.0
    with clock.paused():
        hx = p.h(x)

    for t in range(max_iter + 1):
        xi = p.xi_minus(x)
        bx = s.solve(x, xi)
        grad = p.f_grad(x)
        gp_x = float(p.gplus_eval(x))
        gp_bx = float(p.gplus_eval(bx))
        n_gp = 1
        d = bx - x
        d_xi = float(np.vdot(d, xi))
        slope = float(np.vdot(d, grad)) - d_xi + gp_bx - gp_x
        gap = abs(slope)
        trace.append(IterationTrace(t, hx, gap, gamma, clock.elapsed()))
        if gap <= delta:
            converged = True
            break
        if t == max_iter:
            break
        if not slope < -DESCENT_EPS:
            raise InternalError(f"best response is not a descent direction (slope {slope:.3e})")

        if isinstance(ls, Exact):
            gamma = exact_line_search_convex(p, x, bx, gp_bx - gp_x - d_xi, tol=ls.tol)
        elif isinstance(ls, Successive):
            gamma = successive_line_search(
                p, x, bx, ls.alpha, ls.beta, ls.m_max,
                fx=float(p.f_eval(x)), grad=grad, xi=xi, gp_x=gp_x, gp_bx=gp_bx,
            )
        elif isinstance(ls, Constant):
            gamma = ls.gamma
        elif callable(ls):
            info = dict(grad=grad, xi=xi, gp_x=gp_x, gp_bx=gp_bx, slope=slope)
            gamma = float(ls(x, bx, info))
        else:
            raise InvalidArgument(f"unknown line search {ls!r}")
        gplus_bx_evals.append(n_gp)
        if not gamma > 0.0:
            raise InternalError("line search returned a zero step along a descent direction")

        x = x + gamma * d
        with clock.paused():
            h_new = p.h(x)
        if h_new > hx + 1e-10 * max(1.0, abs(hx)):
            raise InternalError(f"objective increased from {hx!r} to {h_new!r} at iteration {t + 1}")
        hx = h_new

    return RunResult(x, trace, converged, {"gplus_bx_evals": gplus_bx_evals})


def proximal_surrogate(p, c_t):
    """Proximal-type approximation with fixed weight ``c_t``.

    Needs ``p.gplus_prox``.  The best response is
    ``prox_{g_plus / c}(x_t - (grad f(x_t) - xi_minus) / c)``.
    """
    if not c_t > 0:
        raise InvalidParameter("proximal weight must be positive")
    if p.gplus_prox is None:
        raise InvalidArgument("proximal surrogate needs a g_plus prox operator")

    def solve(x_t, xi):
        return p.gplus_prox(x_t - (p.f_grad(x_t) - xi) / c_t, 1.0 / c_t)

    def f_tilde(x, x_t):
        dx = np.asarray(x) - x_t
        return float(p.f_eval(x_t)) + float(np.vdot(p.f_grad(x_t), dx)) + 0.5 * c_t * float(np.vdot(dx, dx))

    return SurrogateSolver(solve, f"proximal(c={c_t:g})", f_tilde)


def prox_gradient_backtracking(h_eval, grad, prox, x0, alpha, beta, max_iter=1000, delta=1e-6,
                               step0=1.0, m_max=60, strict=False, clock=None):
    """Proximal gradient with backtracked step ``step0 * beta**m``.

    ``prox(v, step)`` minimises ``g(x) + ||x - v||^2 / (2 step)`` where ``g`` is
    the whole nonsmooth part.  A trial point is accepted when
    ``h(x*) - h(x) <= -(alpha / (2 step)) ||x* - x||^2`` (``<`` if ``strict``).
    Stops when ``||x* - x|| / step <= delta``.  ``stats["model_solves"]`` holds
    ``m_t + 1`` per iteration; the trace gap column carries the
    gradient-mapping norm.
    """
    if not 0.0 < alpha < 1.0 or not 0.0 < beta < 1.0:
        raise InvalidParameter("alpha and beta must lie in (0, 1)")
    clock = Stopwatch() if clock is None else clock
    x = np.array(x0, dtype=np.float64)
    with clock.paused():
        hx = h_eval(x)
    trace = [IterationTrace(0, hx, float("nan"), 0.0, clock.elapsed())]
    solves = []
    converged = False
    for t in range(1, max_iter + 1):
        g = grad(x)
        step = step0
        for m in range(m_max + 1):
            xs = prox(x - step * g, step)
            dx = xs - x
            nrm2 = float(np.vdot(dx, dx))
            if nrm2 == 0.0:
                break
            h_new = h_eval(xs)
            bound = hx - alpha / (2.0 * step) * nrm2
            if (h_new < bound) if strict else (h_new <= bound):
                break
            step *= beta
        else:
            raise LineSearchFailure(f"backtracking exhausted at iteration {t}")
        solves.append(m + 1)
        if nrm2 == 0.0:
            trace.append(IterationTrace(t, hx, 0.0, 0.0, clock.elapsed()))
            converged = True
            break
        x = xs
        hx = h_new
        gmap = np.sqrt(nrm2) / step
        trace.append(IterationTrace(t, hx, gmap, step, clock.elapsed()))
        if gmap <= delta:
            converged = True
            break
    return RunResult(x, trace, converged, {"model_solves": solves})


def gist_baseline(p, x0, beta=0.5, alpha=0.5, max_iter=1000, delta=1e-6, step0=1.0, m_max=60):
    """GIST: proximal gradient with backtracked weight ``1 / beta**m``.

    Only defined for a convex regulariser (``g_minus`` identically zero).
    Every trial step costs a fresh proximal-model solve, which is recorded in
    ``stats["model_solves"]``.
    """
    if not p.gminus_is_zero:
        raise InvalidArgument("GIST needs g_minus identically zero")
    if p.gplus_prox is None:
        raise InvalidArgument("GIST needs a g_plus prox operator")
    return prox_gradient_backtracking(
        p.h, p.f_grad, p.gplus_prox, x0, alpha, beta, max_iter=max_iter, delta=delta,
        step0=step0, m_max=m_max, strict=True,
    )
