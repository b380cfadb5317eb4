"""Sparsity-regularised rank minimisation for network anomaly detection.

Minimises over ``Z = (P, Q, S)``::

    0.5 ||P Q + D S - Y||_F^2 + lam/2 (||P||_F^2 + ||Q||_F^2) + mu ||S||_1

Solvers: STELA (joint best response of the three blocks followed by an
exact line search on a quartic), block coordinate descent with row-wise
updates of ``S``, and ADMM on the split ``S = A = B``.

The row-wise pieces of the best response and of the quartic coefficients
live in helpers that take one block of rows of ``(Y, D, P)``.  The
centralized solver calls them on the whole matrices and the distributed
simulation calls them per node, so with a single node both produce the
same floating-point numbers.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import DcProblem, SurrogateSolver
from .errors import (
    InternalError,
    InvalidArgument,
    InvalidParameter,
    InvalidProblem,
    InvalidReference,
    NotPositiveDefinite,
)
from .numerics import SpdFactor, as_matrix, make_rng, quartic_min_unit, soft_threshold, spectral_norm
from .trace import IterationTrace, RunResult, Stopwatch

__all__ = [
    "AnomalyProblem",
    "AnomalyState",
    "QuarticCoeffs",
    "objective",
    "gradient",
    "best_response",
    "quartic_coeffs",
    "exact_line_search_quartic",
    "stationarity_gap",
    "init_state",
    "run_stela",
    "run_bcd",
    "run_admm",
    "generate_data",
    "relative_error",
    "as_dc_problem",
    "best_response_surrogate",
]

MONOTONE_RTOL = 1e-10


@dataclass
class AnomalyProblem:
    Y: np.ndarray
    D: np.ndarray
    lam: float
    mu: float
    rho: int
    dtd_diag: np.ndarray = field(init=False, repr=False)
    init_seconds: float = field(init=False, repr=False, default=0.0)

    def __post_init__(self):
        self.Y = as_matrix(self.Y, "Y")
        self.D = as_matrix(self.D, "D")
        if self.Y.shape[0] != self.D.shape[0]:
            raise InvalidArgument(f"Y has {self.Y.shape[0]} rows but D has {self.D.shape[0]}")
        if not self.lam > 0:
            raise InvalidParameter("lambda must be positive")
        if not self.mu > 0:
            raise InvalidParameter("mu must be positive")
        self.rho = int(self.rho)
        if not 1 <= self.rho <= min(self.Y.shape):
            raise InvalidParameter(f"rank {self.rho} outside [1, {min(self.Y.shape)}]")
        t0 = time.perf_counter()
        self.dtd_diag = column_sq_norms(self.D)
        self.init_seconds = time.perf_counter() - t0
        if np.any(self.dtd_diag <= 0):
            raise InvalidProblem("D has a zero column")

    @property
    def dims(self):
        """``(N, K, I, rho)``."""
        n, k = self.Y.shape
        return n, k, self.D.shape[1], self.rho


@dataclass
class AnomalyState:
    P: np.ndarray
    Q: np.ndarray
    S: np.ndarray

    def copy(self):
        return AnomalyState(self.P.copy(), self.Q.copy(), self.S.copy())

    def axpy(self, gamma, other):
        """``self + gamma * (other - self)``, block by block."""
        return AnomalyState(
            self.P + gamma * (other.P - self.P),
            self.Q + gamma * (other.Q - self.Q),
            self.S + gamma * (other.S - self.S),
        )

    def flatten(self):
        return np.concatenate([self.P.ravel(), self.Q.ravel(), self.S.ravel()])

    @classmethod
    def unflatten(cls, v, p):
        n, k, i, r = p.dims
        v = np.asarray(v, dtype=np.float64)
        a, b = n * r, n * r + r * k
        return cls(v[:a].reshape(n, r), v[a:b].reshape(r, k), v[b:].reshape(i, k))


@dataclass(frozen=True)
class QuarticCoeffs:
    """``phi(g) = a/4 g^4 + b/3 g^3 + c/2 g^2 + d g``."""

    a: float
    b: float
    c: float
    d: float

    def __iter__(self):
        return iter((self.a, self.b, self.c, self.d))

    def value(self, gamma):
        return ((self.a / 4.0 * gamma + self.b / 3.0) * gamma + self.c / 2.0) * gamma * gamma + self.d * gamma


def column_sq_norms(D):
    return np.einsum("ij,ij->j", D, D)


def check_state(p, z):
    n, k, i, r = p.dims
    for name, m, shape in (("P", z.P, (n, r)), ("Q", z.Q, (r, k)), ("S", z.S, (i, k))):
        if np.shape(m) != shape:
            raise InvalidArgument(f"{name} must have shape {shape}, got {np.shape(m)}")


def residual(p, z):
    return z.P @ z.Q + p.D @ z.S - p.Y


def objective(p, z):
    check_state(p, z)
    r = residual(p, z)
    return (
        0.5 * float(np.vdot(r, r))
        + 0.5 * p.lam * (float(np.vdot(z.P, z.P)) + float(np.vdot(z.Q, z.Q)))
        + p.mu * float(np.abs(z.S).sum())
    )


def _objective_from_residual(p, z, r):
    return (
        0.5 * float(np.vdot(r, r))
        + 0.5 * p.lam * (float(np.vdot(z.P, z.P)) + float(np.vdot(z.Q, z.Q)))
        + p.mu * float(np.abs(z.S).sum())
    )


def gradient(p, z):
    """Gradient of the smooth part ``f`` as an :class:`AnomalyState`."""
    r = residual(p, z)
    return AnomalyState(r @ z.Q.T + p.lam * z.P, z.P.T @ r + p.lam * z.Q, p.D.T @ r)


# -- row-block pieces shared with the distributed simulation ---------------


def _ridge_solve(gram, lam, rhs):
    """``(gram + lam I)^{-1} rhs``; the system is SPD whenever ``lam > 0``."""
    m = gram + lam * np.eye(gram.shape[0])
    try:
        return SpdFactor(m).solve(rhs)
    except NotPositiveDefinite as exc:
        raise InternalError("ridge system not positive definite") from exc


def local_target(Y_l, D_l, S):
    """``Y_l - D_l S``: the data left for the low-rank part on these rows."""
    return Y_l - D_l @ S


def local_bp(target_l, Q, lam):
    """Best response of the rows of ``P`` held by one block."""
    return _ridge_solve(Q @ Q.T, lam, Q @ target_l.T).T


def local_q_terms(P_l, target_l):
    """Partial sums ``(P_l^T P_l, P_l^T target_l)`` for the ``Q`` update."""
    return P_l.T @ P_l, P_l.T @ target_l


def local_s_term(Y_l, D_l, P_l, Q, S):
    """Partial sum ``D_l^T (D_l S - Y_l + P_l Q)`` for the ``S`` update."""
    return D_l.T @ (D_l @ S - Y_l + P_l @ Q)


def bq_from_sums(ptp, pt_target, lam):
    return _ridge_solve(ptp, lam, pt_target)


def bs_from_sums(dtd_diag, s_term, S, mu):
    d = dtd_diag[:, None]
    return soft_threshold(d * S - s_term, mu) / d


def local_coeffs(P_l, dP_l, Y_l, D_l, Q, dQ, S, dS, lam, mu, gs_change, n_nodes):
    """This block's share ``(a_l, b_l, c_l, d_l)`` of the quartic coefficients.

    Terms coupling the partitioned rows are computed locally; the
    regulariser of the shared ``Q`` and the ``l1`` change of ``S`` are split
    evenly across ``n_nodes`` so the shares sum to the full coefficients.
    ``gs_change`` is ``||B_S||_1 - ||S||_1``.
    """
    W = dP_l @ dQ
    M = P_l @ dQ + dP_l @ Q + D_l @ dS
    R = P_l @ Q + D_l @ S - Y_l
    a = 2.0 * float(np.vdot(W, W))
    b = 3.0 * float(np.vdot(M, W))
    c = (
        float(np.vdot(M, M))
        + 2.0 * float(np.vdot(R, W))
        + lam * float(np.vdot(dP_l, dP_l))
        + (lam / n_nodes) * float(np.vdot(dQ, dQ))
    )
    d = (
        float(np.vdot(R, M))
        + lam * float(np.vdot(P_l, dP_l))
        + (lam / n_nodes) * float(np.vdot(Q, dQ))
        + (mu / n_nodes) * gs_change
    )
    return a, b, c, d


def l1_change(S, BS):
    return float(np.abs(BS).sum()) - float(np.abs(S).sum())


# -- centralized operations -------------------------------------------------


def best_response(p, z):
    """Joint best response ``(B_P, B_Q, B_S)``, all three computed from ``z``."""
    check_state(p, z)
    target = local_target(p.Y, p.D, z.S)
    BP = local_bp(target, z.Q, p.lam)
    ptp, pt_target = local_q_terms(z.P, target)
    BQ = bq_from_sums(ptp, pt_target, p.lam)
    BS = bs_from_sums(p.dtd_diag, local_s_term(p.Y, p.D, z.P, z.Q, z.S), z.S, p.mu)
    return AnomalyState(BP, BQ, BS)


def quartic_coeffs(p, z, bz):
    """Coefficients of the exact line-search polynomial along ``bz - z``.

    ``phi(g) + f(z) = f(z + g (bz - z)) + g mu (||B_S||_1 - ||S||_1)``.
    """
    dP, dQ, dS = bz.P - z.P, bz.Q - z.Q, bz.S - z.S
    a, b, c, d = local_coeffs(z.P, dP, p.Y, p.D, z.Q, dQ, z.S, dS, p.lam, p.mu, l1_change(z.S, bz.S), 1)
    return QuarticCoeffs(a, b, c, d)


def exact_line_search_quartic(q):
    """Exact step in [0, 1]: global minimiser of the quartic model."""
    return quartic_min_unit(q.a, q.b, q.c, q.d)


def stationarity_gap(p, z, bz=None):
    """``|<B Z - Z, grad f> + mu (||B_S||_1 - ||S||_1)|``; zero exactly at stationary points."""
    if bz is None:
        bz = best_response(p, z)
    return abs(quartic_coeffs(p, z, bz).d)


def init_state(p, seed=0):
    """Default starting point: ``P, Q ~ N(0, 1/rho)`` entrywise, ``S = 0``."""
    n, k, i, r = p.dims
    rng = make_rng(seed)
    sd = 1.0 / math.sqrt(r)
    P = sd * rng.standard_normal((n, r))
    Q = sd * rng.standard_normal((r, k))
    return AnomalyState(P, Q, np.zeros((i, k)))


def _check_monotone(h_prev, h_new, what):
    if h_prev is not None and h_new > h_prev + MONOTONE_RTOL * max(1.0, abs(h_prev)):
        raise InternalError(f"{what}: objective increased from {h_prev!r} to {h_new!r}")


def stela_step(p, z):
    """One STELA iteration's ingredients: ``(bz, coeffs, gamma)``."""
    bz = best_response(p, z)
    q = quartic_coeffs(p, z, bz)
    return bz, q, exact_line_search_quartic(q)


def run_stela(p, z0=None, delta=1e-6, max_iter=1000, seed=0, step_fn=None):
    """Parallel best response with exact line search.

    ``trace[t]`` describes ``Z^t``: its objective, its stationarity gap and the
    step that produced it.  Stops once the gap is at most ``delta``.

    Parameters
    ----------
    z0 : AnomalyState, optional
        Starting point; :func:`init_state` with ``seed`` when omitted.
    step_fn : callable, optional
        ``step_fn(p, z) -> (bz, coeffs, gamma)``.  Replaces the centralized
        computation (the distributed simulation plugs in here).
    """
    if not delta > 0:
        raise InvalidParameter("delta must be positive")
    clock = Stopwatch(offset=p.init_seconds)
    z = init_state(p, seed) if z0 is None else z0.copy()
    check_state(p, z)
    step_fn = stela_step if step_fn is None else step_fn
    trace, gammas = [], []
    gamma, h_prev = 0.0, None
    for t in range(max_iter + 1):
        bz, q, next_gamma = step_fn(p, z)
        gap = abs(q.d)
        with clock.paused():
            h = objective(p, z)
        _check_monotone(h_prev, h, "STELA")
        h_prev = h
        trace.append(IterationTrace(t, h, gap, gamma, clock.elapsed()))
        if gap <= delta:
            return RunResult(z, trace, True, {"gammas": gammas})
        if t == max_iter:
            break
        if not next_gamma > 0:
            raise InternalError(f"zero step at a non-stationary point (gap {gap!r})")
        gamma = next_gamma
        gammas.append(gamma)
        z = z.axpy(gamma, bz)
    return RunResult(z, trace, False, {"gammas": gammas})


def run_bcd(p, z0=None, sweeps=100, delta=1e-6, seed=0):
    """Block coordinate descent: ``P``, then ``Q``, then the rows of ``S`` one at a time.

    A trace row is written after the ``P`` update, the ``Q`` update and every
    row update of ``S``.  The stationarity gap is only evaluated (with the
    clock paused) at the end of a sweep; other rows carry NaN.  Stops when
    that gap is at most ``delta`` or after ``sweeps`` sweeps.
    """
    clock = Stopwatch(offset=p.init_seconds)
    z = init_state(p, seed) if z0 is None else z0.copy()
    check_state(p, z)
    P, Q, S = z.P, z.Q, z.S.copy()
    D, Y = p.D, p.Y
    nan = float("nan")
    trace = []
    with clock.paused():
        h_prev = objective(p, z)
        gap = stationarity_gap(p, z)
    trace.append(IterationTrace(0, h_prev, gap, 0.0, clock.elapsed()))
    if gap <= delta:
        return RunResult(z, trace, True, {"sweeps": 0})

    def record(h_new, g=nan):
        nonlocal h_prev
        _check_monotone(h_prev, h_new, "BCD")
        h_prev = h_new
        trace.append(IterationTrace(len(trace), h_new, g, 1.0, clock.elapsed()))

    for sweep in range(1, sweeps + 1):
        target = Y - D @ S
        P = local_bp(target, Q, p.lam)
        with clock.paused():
            record(objective(p, AnomalyState(P, Q, S)))
        Q = bq_from_sums(P.T @ P, P.T @ target, p.lam)
        R = P @ Q + D @ S - Y
        with clock.paused():
            record(objective(p, AnomalyState(P, Q, S)))
        for i in range(S.shape[0]):
            d_i = D[:, i]
            old = S[i].copy()
            # correlation with the residual that excludes row i's contribution
            corr = -(d_i @ R) + p.dtd_diag[i] * old
            new = soft_threshold(corr, p.mu) / p.dtd_diag[i]
            S[i] = new
            R += np.outer(d_i, new - old)
            if i < S.shape[0] - 1:
                with clock.paused():
                    record(_objective_from_residual(p, AnomalyState(P, Q, S), R))
        z = AnomalyState(P, Q, S.copy())
        with clock.paused():
            gap = stationarity_gap(p, z)
            record(objective(p, z), gap)
        if gap <= delta:
            return RunResult(z, trace, True, {"sweeps": sweep})
    return RunResult(z, trace, False, {"sweeps": sweeps})


def admm_update_q(p, P, A):
    """``argmin_Q`` of the augmented Lagrangian: a ridge system in ``Q``."""
    target = p.Y - p.D @ A
    return bq_from_sums(P.T @ P, P.T @ target, p.lam)


def admm_update_b(p, A, Pi, c):
    """``argmin_B mu ||B||_1 - <Pi, B> + c/2 ||A - B||^2``."""
    return soft_threshold(A + Pi / c, p.mu / c)


def admm_update_p(p, Q, A):
    return local_bp(p.Y - p.D @ A, Q, p.lam)


def admm_update_a(p, factor, P, Q, B, Pi, c):
    """Solve ``(D^T D + c I) A = D^T (Y - P Q) + c B - Pi`` with the cached factor."""
    return factor.solve(p.D.T @ (p.Y - P @ Q) + c * B - Pi)


def admm_update_multiplier(Pi, A, B, c):
    return Pi + c * (A - B)


def admm_factor(p, c):
    return SpdFactor(p.D.T @ p.D + c * np.eye(p.D.shape[1]))


def run_admm(p, z0=None, c=1e4, max_iter=1000, delta=1e-6, seed=0):
    """ADMM on the split ``S = A = B`` with multiplier ``Pi``.

    Per iteration: ``Q`` (ridge), ``B`` (soft threshold), ``P`` (ridge), ``A``
    (SPD solve with a cached factor of ``D^T D + c I``), then
    ``Pi += c (A - B)``.  The recorded objective uses ``S := A`` and the gap
    column is the stationarity gap at ``(P, Q, A)``.  Monotone decrease is
    not expected and not checked.
    """
    if not c > 0:
        raise InvalidParameter("ADMM penalty c must be positive")
    t0 = time.perf_counter()
    factor = admm_factor(p, c)
    clock = Stopwatch(offset=p.init_seconds + time.perf_counter() - t0)
    z = init_state(p, seed) if z0 is None else z0.copy()
    check_state(p, z)
    P, Q, A = z.P, z.Q, z.S.copy()
    B = A.copy()
    Pi = np.zeros_like(A)
    trace = []
    converged = False
    for t in range(max_iter + 1):
        zt = AnomalyState(P, Q, A)
        with clock.paused():
            h = objective(p, zt)
            gap = stationarity_gap(p, zt)
        trace.append(IterationTrace(t, h, gap, 1.0 if t else 0.0, clock.elapsed()))
        if gap <= delta:
            converged = True
            break
        if t == max_iter:
            break
        Q = admm_update_q(p, P, A)
        B = admm_update_b(p, A, Pi, c)
        P = admm_update_p(p, Q, A)
        A = admm_update_a(p, factor, P, Q, B, Pi, c)
        Pi = admm_update_multiplier(Pi, A, B, c)
    return RunResult(AnomalyState(P, Q, A), trace, converged, {"B": B, "Pi": Pi})


def generate_data(n=50, k=100, i=100, rho=5, seed=0):
    """Synthetic traffic instance and its ground truth.

    ``D`` is uniform on {0, 1}; ``S`` entries are -1, 0, 1 with probabilities
    0.05, 0.9, 0.05; ``P ~ N(0, 100/I)``, ``Q ~ N(0, 100/K)``, noise
    ``N(0, 0.01)``; ``lam = 0.1 ||Y||_2`` and ``mu = 0.1 max|D^T Y|``.
    A column of ``D`` that comes out all zero is redrawn from the same stream.
    """
    if min(n, k, i, rho) < 1:
        raise InvalidParameter("dimensions must be positive")
    rng = make_rng(seed)
    D = rng.integers(0, 2, size=(n, i)).astype(np.float64)
    for _ in range(10_000):
        empty = np.flatnonzero(~D.any(axis=0))
        if empty.size == 0:
            break
        D[:, empty] = rng.integers(0, 2, size=(n, empty.size))
    else:
        raise InternalError("could not draw a routing matrix without empty columns")
    V = 0.1 * rng.standard_normal((n, k))
    S = rng.choice(np.array([-1.0, 0.0, 1.0]), size=(i, k), p=[0.05, 0.9, 0.05])
    P = math.sqrt(100.0 / i) * rng.standard_normal((n, rho))
    Q = math.sqrt(100.0 / k) * rng.standard_normal((rho, k))
    Y = P @ Q + D @ S + V
    lam = 0.1 * spectral_norm(Y)
    mu = 0.1 * float(np.max(np.abs(D.T @ Y)))
    return AnomalyProblem(Y, D, lam, mu, rho), AnomalyState(P, Q, S)


def relative_error(trace, h_star):
    """``(h(Z^t) - h*) / h*`` for every trace row."""
    if not (math.isfinite(h_star) and h_star > 0):
        raise InvalidReference(f"reference objective must be positive and finite, got {h_star!r}")
    return np.array([(rec.h_value - h_star) / h_star for rec in trace])


def as_dc_problem(p):
    """The problem on the flattened vector ``[P, Q, S]`` for the generic driver."""
    n, k, i, r = p.dims
    s_start = n * r + r * k

    def f(v):
        z = AnomalyState.unflatten(v, p)
        res = residual(p, z)
        return 0.5 * float(np.vdot(res, res)) + 0.5 * p.lam * (float(np.vdot(z.P, z.P)) + float(np.vdot(z.Q, z.Q)))

    def grad(v):
        return gradient(p, AnomalyState.unflatten(v, p)).flatten()

    def prox(v, step):
        out = np.array(v, dtype=np.float64)
        out[s_start:] = soft_threshold(out[s_start:], p.mu * step)
        return out

    return DcProblem(
        f_eval=f,
        f_grad=grad,
        gplus_eval=lambda v: p.mu * float(np.abs(np.asarray(v)[s_start:]).sum()),
        gplus_prox=prox,
        dimension=s_start + i * k,
    )


def best_response_surrogate(p):
    """Block best-response surrogate on flattened vectors.

    ``f_tilde(Z; Z^t) = f(P, Q^t, S^t) + f(P^t, Q, S^t) + sum_ik f(P^t, Q^t, S^t + (s_ik - s^t_ik) e_ik)``,
    evaluated term by term from the definition.
    """

    def f_smooth(z):
        res = residual(p, z)
        return 0.5 * float(np.vdot(res, res)) + 0.5 * p.lam * (float(np.vdot(z.P, z.P)) + float(np.vdot(z.Q, z.Q)))

    def solve(v_t, xi):
        return best_response(p, AnomalyState.unflatten(v_t, p)).flatten()

    def f_tilde(v, v_t):
        z, zt = AnomalyState.unflatten(v, p), AnomalyState.unflatten(v_t, p)
        total = f_smooth(AnomalyState(z.P, zt.Q, zt.S)) + f_smooth(AnomalyState(zt.P, z.Q, zt.S))
        for ii in range(zt.S.shape[0]):
            for kk in range(zt.S.shape[1]):
                S = zt.S.copy()
                S[ii, kk] = z.S[ii, kk]
                total += f_smooth(AnomalyState(zt.P, zt.Q, S))
        return total

    return SurrogateSolver(solve, "anomaly block best response", f_tilde)
