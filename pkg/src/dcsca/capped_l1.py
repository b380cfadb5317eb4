"""Capped-l1 regularised least squares.

Minimises ``0.5 ||A x - b||^2 + mu * sum_k min(|x_k|, theta)`` written as
``f + g_plus - g_minus`` with ``g_plus = mu ||x||_1`` and
``g_minus = mu * sum_k max(|x_k| - theta, 0)``.

Solvers: STELA (parallel best response with closed-form exact step), the
classic MM method (each majorant minimised by l1-STELA with a warm start)
and the proximal MM method with backtracking.
"""

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import DcProblem, SurrogateSolver, prox_gradient_backtracking
from .errors import InternalError, InvalidArgument, InvalidParameter, InvalidProblem
from .numerics import as_matrix, as_vector, make_rng, soft_threshold
from .trace import IterationTrace, RunResult, Stopwatch

__all__ = [
    "CappedL1Problem",
    "DegenerateDirectionWarning",
    "h_eval",
    "xi_minus",
    "stela_direction",
    "stela_stepsize",
    "capped_prox",
    "as_dc_problem",
    "best_response_surrogate",
    "run_stela",
    "run_classic_mm",
    "run_proximal_mm",
    "generate_data",
]

RESIDUAL_REFRESH = 50


class DegenerateDirectionWarning(RuntimeWarning):
    pass


@dataclass
class CappedL1Problem:
    A: np.ndarray
    b: np.ndarray
    mu: float
    theta: float = 1.0
    col_sq: np.ndarray = field(init=False, repr=False)
    init_seconds: float = field(init=False, repr=False, default=0.0)

    def __post_init__(self):
        self.A = as_matrix(self.A, "A")
        self.b = as_vector(self.b, "b")
        if self.A.shape[0] != self.b.shape[0]:
            raise InvalidArgument(f"A has {self.A.shape[0]} rows but b has length {self.b.shape[0]}")
        if not self.mu > 0:
            raise InvalidParameter("mu must be positive")
        if not self.theta > 0:
            raise InvalidParameter("theta must be positive")
        t0 = time.perf_counter()
        self.col_sq = np.einsum("ij,ij->j", self.A, self.A)
        self.init_seconds = time.perf_counter() - t0
        if np.any(self.col_sq <= 0):
            raise InvalidProblem("A has a zero column")

    @property
    def shape(self):
        return self.A.shape

    def residual(self, x):
        return self.A @ x - self.b


def _check_x(p, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.A.shape[1],):
        raise InvalidArgument(f"x must have shape ({p.A.shape[1]},), got {x.shape}")
    return x


def _capped_reg(p, x):
    return p.mu * float(np.sum(np.minimum(np.abs(x), p.theta)))


def h_eval(p, x):
    x = _check_x(p, x)
    r = p.residual(x)
    return 0.5 * float(r @ r) + _capped_reg(p, x)


def gminus_eval(p, x):
    return p.mu * float(np.sum(np.maximum(np.abs(x) - p.theta, 0.0)))


def xi_minus(p, x):
    """Subgradient of ``g_minus``; ``|x_k| = theta`` maps to ``+-mu``."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= p.theta, p.mu, np.where(x <= -p.theta, -p.mu, 0.0))


def stela_direction(p, x_t, grad=None, xi=None):
    """Best response of the coordinate-wise surrogate (closed form)."""
    x_t = _check_x(p, x_t)
    if grad is None:
        grad = p.A.T @ p.residual(x_t)
    if xi is None:
        xi = xi_minus(p, x_t)
    r = p.col_sq * x_t + xi - grad
    return soft_threshold(r, p.mu) / p.col_sq


def stela_stepsize(p, x_t, bx, grad=None, xi=None, a_dir=None):
    """Closed-form exact step along ``bx - x_t``, clipped to [0, 1]."""
    x_t = _check_x(p, x_t)
    d = bx - x_t
    if not np.any(d):
        return 0.0
    if grad is None:
        grad = p.A.T @ p.residual(x_t)
    if xi is None:
        xi = xi_minus(p, x_t)
    if a_dir is None:
        a_dir = p.A @ d
    num = float((xi - grad) @ d) - p.mu * (float(np.abs(bx).sum()) - float(np.abs(x_t).sum()))
    den = float(a_dir @ a_dir)
    if den == 0.0:
        warnings.warn("direction lies in the null space of A; using a unit step",
                      DegenerateDirectionWarning, stacklevel=2)
        return 1.0
    return min(1.0, max(0.0, num / den))


def capped_prox(u, step, mu, theta):
    """Minimiser of ``(x - u)^2 / (2 step) + mu min(|x|, theta)``, entrywise.

    Two candidates are compared: the soft-threshold point clipped into
    ``[-theta, theta]`` and the flat-region minimiser pushed out to
    ``|x| >= theta``.  Ties go to the first.
    """
    u = np.asarray(u, dtype=np.float64)
    w = 1.0 / step
    inner = np.clip(soft_threshold(u, mu * step), -theta, theta)
    sgn = np.where(u < 0, -1.0, 1.0)
    outer = sgn * np.maximum(np.abs(u), theta)
    v_in = 0.5 * w * (inner - u) ** 2 + mu * np.abs(inner)
    v_out = 0.5 * w * (outer - u) ** 2 + mu * theta
    out = np.where(v_in <= v_out, inner, outer)
    if np.ndim(out) == 0:
        return float(out)
    return out


def as_dc_problem(p):
    """The capped problem as a generic :class:`~dcsca.core.DcProblem`."""

    def f(x):
        r = p.residual(x)
        return 0.5 * float(r @ r)

    return DcProblem(
        f_eval=f,
        f_grad=lambda x: p.A.T @ p.residual(x),
        gplus_eval=lambda x: p.mu * float(np.abs(x).sum()),
        gminus_eval=lambda x: gminus_eval(p, x),
        gminus_subgrad=lambda x: xi_minus(p, x),
        gplus_prox=lambda v, step: soft_threshold(v, p.mu * step),
        dimension=p.A.shape[1],
    )


def best_response_surrogate(p):
    """Coordinate-wise best-response surrogate as a :class:`SurrogateSolver`."""

    def solve(x_t, xi):
        return stela_direction(p, x_t, xi=xi)

    def f_tilde(x, x_t):
        # sum_k f(x_k, x_{-k}^t), each term evaluated from its definition
        r_t = p.residual(x_t)
        dx = np.asarray(x) - x_t
        total = 0.0
        for k in range(p.A.shape[1]):
            rk = r_t + p.A[:, k] * dx[k]
            total += 0.5 * float(rk @ rk)
        return total

    return SurrogateSolver(solve, "capped-l1 best response", f_tilde)


def _stela_loop(p, x, xi_fn, delta, max_iter, clock, trace, h_fn, start_iter=0, monotone=True,
                gp_counts=None):
    """Shared STELA iteration; ``xi_fn(x)`` supplies the linearised ``g_minus`` term.

    Appends to ``trace`` and returns ``(x, converged, n_iter)``.  When given,
    ``gp_counts`` receives, for every step taken, how many times ``g_plus``
    was evaluated at the best response.
    """
    res = p.residual(x)
    gamma = 0.0
    hx = None
    for t in range(max_iter + 1):
        grad = p.A.T @ res
        xi = xi_fn(x)
        bx = soft_threshold(p.col_sq * x + xi - grad, p.mu) / p.col_sq
        d = bx - x
        gp_x = p.mu * float(np.abs(x).sum())
        n_gp = 0
        gp_bx = p.mu * float(np.abs(bx).sum())
        n_gp += 1
        slope = float(d @ (grad - xi)) + gp_bx - gp_x
        gap = abs(slope)
        with clock.paused():
            h_new = h_fn(x, res)
        if monotone and hx is not None and h_new > hx + 1e-10 * max(1.0, abs(hx)):
            raise InternalError(f"objective increased from {hx!r} to {h_new!r}")
        hx = h_new
        trace.append(IterationTrace(start_iter + t, hx, gap, gamma, clock.elapsed()))
        if gap <= delta:
            return x, True, t
        if t == max_iter:
            return x, False, t
        a_dir = p.A @ d
        den = float(a_dir @ a_dir)
        if den == 0.0:
            warnings.warn("direction lies in the null space of A; using a unit step",
                          DegenerateDirectionWarning, stacklevel=3)
            gamma = 1.0
        else:
            gamma = min(1.0, max(0.0, -slope / den))
            if not gamma > 0.0:
                raise InternalError(f"zero step at a non-stationary point (slope {slope!r})")
        if gp_counts is not None:
            gp_counts.append(n_gp)
        x = x + gamma * d
        if (t + 1) % RESIDUAL_REFRESH == 0:
            res = p.residual(x)
        else:
            res = res + gamma * a_dir
    raise AssertionError("unreachable")


def _h_from_residual(p):
    def h(x, res):
        return 0.5 * float(res @ res) + _capped_reg(p, x)
    return h


def run_stela(p, x0=None, delta=1e-6, max_iter=1000):
    """STELA for the capped-l1 problem.

    Iteration 0 of the trace carries the set-up time spent on ``diag(A^T A)``.
    ``stats["gplus_bx_evals"]`` records one ``g_plus`` evaluation at the best
    response per iteration.
    """
    if not delta > 0:
        raise InvalidParameter("delta must be positive")
    clock = Stopwatch(offset=p.init_seconds)
    x = np.zeros(p.A.shape[1]) if x0 is None else _check_x(p, x0).copy()
    trace, counts = [], []
    x, converged, _ = _stela_loop(p, x, lambda z: xi_minus(p, z), delta, max_iter, clock, trace,
                                  _h_from_residual(p), gp_counts=counts)
    return RunResult(x, trace, converged, {"gplus_bx_evals": counts})


def run_classic_mm(p, x0=None, outer_iters=10, inner_delta=1e-8, inner_max_iter=10_000):
    """Classic MM: minimise each majorant by l1-STELA, warm-started.

    The linear term ``xi_minus(x^t)`` is frozen for the whole inner solve.
    The trace records the capped objective at every inner iteration (so wall
    time is comparable with the single-loop solvers); ``stats["outer_h"]``
    holds the objective after each outer step.  Converged means the outer
    iteration reached a fixed point of the linearisation.
    """
    clock = Stopwatch(offset=p.init_seconds)
    x = np.zeros(p.A.shape[1]) if x0 is None else _check_x(p, x0).copy()
    trace = []
    h_fn = _h_from_residual(p)
    outer_h = [h_eval(p, x)]
    inner_counts = []
    converged = False
    xi = xi_minus(p, x)
    for _ in range(outer_iters):
        frozen = xi
        # inner iterates decrease the majorant, not h itself
        x, _, n = _stela_loop(p, x, lambda z: frozen, inner_delta, inner_max_iter, clock, trace,
                              h_fn, start_iter=len(trace), monotone=False)
        inner_counts.append(n)
        outer_h.append(h_eval(p, x))
        if outer_h[-1] > outer_h[-2] + 1e-10 * max(1.0, abs(outer_h[-2])):
            raise InternalError("classic MM outer objective increased")
        xi = xi_minus(p, x)
        if np.array_equal(xi, frozen):
            converged = True
            break
    return RunResult(x, trace, converged, {"outer_h": outer_h, "inner_iterations": inner_counts})


def run_proximal_mm(p, x0=None, alpha=0.5, beta=0.5, max_iter=1000, delta=1e-6, step0=1.0):
    """Proximal MM with backtracking on the prox weight ``1 / beta**m``.

    ``stats["model_solves"]`` holds ``m_t + 1`` per iteration.
    """
    x = np.zeros(p.A.shape[1]) if x0 is None else _check_x(p, x0).copy()

    def grad(z):
        return p.A.T @ p.residual(z)

    def prox(v, step):
        return capped_prox(v, step, p.mu, p.theta)

    return prox_gradient_backtracking(
        lambda z: h_eval(p, z), grad, prox, x, alpha, beta, max_iter=max_iter, delta=delta,
        step0=step0, clock=Stopwatch(),
    )


def generate_data(n, k, density=0.1, noise_var=1e-4, seed=0, theta=1.0):
    """Random sparse-regression instance.

    ``A`` has i.i.d. standard normal entries with rows scaled to unit norm;
    ``x_true`` has ``ceil(density * k)`` standard normal entries at uniform
    positions; ``mu = 0.1 ||A^T b||_inf``.
    """
    if not 0.0 < density < 1.0:
        raise InvalidParameter("density must lie in (0, 1)")
    if n < 1 or k < 1:
        raise InvalidParameter("dimensions must be positive")
    rng = make_rng(seed)
    A = rng.standard_normal((n, k))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    nnz = math.ceil(density * k)
    x_true = np.zeros(k)
    support = rng.choice(k, size=nnz, replace=False)
    x_true[support] = rng.standard_normal(nnz)
    b = A @ x_true + math.sqrt(noise_var) * rng.standard_normal(n)
    mu = 0.1 * float(np.max(np.abs(A.T @ b)))
    return CappedL1Problem(A, b, mu, theta), x_true
