"""In-process simulation of STELA split across ``L`` nodes by rows of ``Y``.

Node ``l`` holds a contiguous block of rows ``(Y_l, D_l, P_l)``.  Every
quantity that needs more than one block is assembled by summing per-node
partial results in node-id order, and every such exchange is logged as a
:class:`ReductionMessage` so the traffic can be accounted for.  ``Q`` and
``S`` are replicated on all nodes.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import anomaly as an
from .errors import InvalidArgument, InvalidPartition

__all__ = [
    "NodeShard",
    "ReductionMessage",
    "MESSAGE_KINDS",
    "shard",
    "concatenate",
    "distributed_best_response",
    "distributed_coeffs",
    "run_distributed_stela",
    "communication_report",
]

MESSAGE_KINDS = ("GramPQ", "GramD", "ResidualSum", "Coeffs4")
HEADER_BYTES = 16
REAL_BYTES = 8


@dataclass
class NodeShard:
    node_id: int
    Y_l: np.ndarray
    D_l: np.ndarray
    P_l: np.ndarray
    row_offset: int

    @property
    def rows(self):
        return self.Y_l.shape[0]


@dataclass(frozen=True)
class ReductionMessage:
    kind: str
    node_id: int
    payload: np.ndarray

    def __post_init__(self):
        if self.kind not in MESSAGE_KINDS:
            raise InvalidArgument(f"unknown message kind {self.kind!r}")
        if self.kind == "Coeffs4" and np.size(self.payload) != 4:
            raise InvalidArgument("a Coeffs4 message carries exactly four reals")

    @property
    def byte_size(self):
        return HEADER_BYTES + REAL_BYTES * int(np.size(self.payload))


def _row_splits(n, L):
    base, extra = divmod(n, L)
    sizes = [base + 1 if l < extra else base for l in range(L)]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    return sizes, offsets


def shard(p, z, L):
    """Balanced contiguous row partition; block sizes differ by at most one."""
    n = p.Y.shape[0]
    L = int(L)
    if L < 1:
        raise InvalidPartition("need at least one node")
    if L > n:
        raise InvalidPartition(f"cannot split {n} rows over {L} nodes")
    an.check_state(p, z)
    _, off = _row_splits(n, L)
    return [
        NodeShard(l, p.Y[off[l]:off[l + 1]], p.D[off[l]:off[l + 1]], z.P[off[l]:off[l + 1]], int(off[l]))
        for l in range(L)
    ]


def concatenate(shards):
    """Stack the node blocks back into ``(Y, D, P)``."""
    ordered = sorted(shards, key=lambda s: s.node_id)
    return tuple(np.vstack([getattr(s, name) for s in ordered]) for name in ("Y_l", "D_l", "P_l"))


def _reduce(parts):
    # fixed node-id order; starting from the first part keeps L = 1 exact
    total = parts[0].copy() if isinstance(parts[0], np.ndarray) else parts[0]
    for part in parts[1:]:
        total = total + part
    return total


def distributed_best_response(shards, Q, S, lam, mu, log=None):
    """Best response assembled from per-node partial sums.

    Returns ``(BP_blocks, BQ, BS, log)`` where ``BP_blocks[l]`` is node
    ``l``'s rows of ``B_P``.  The log gains, per node, one message each of
    kinds GramPQ (both ``Q`` partial sums), GramD and ResidualSum.
    """
    log = [] if log is None else log
    shards = sorted(shards, key=lambda s: s.node_id)
    bp_blocks, ptp_parts, ptt_parts, dd_parts, s_parts = [], [], [], [], []
    for sh in shards:
        target = an.local_target(sh.Y_l, sh.D_l, S)
        bp_blocks.append(an.local_bp(target, Q, lam))
        ptp, ptt = an.local_q_terms(sh.P_l, target)
        dd = an.column_sq_norms(sh.D_l)
        st = an.local_s_term(sh.Y_l, sh.D_l, sh.P_l, Q, S)
        ptp_parts.append(ptp)
        ptt_parts.append(ptt)
        dd_parts.append(dd)
        s_parts.append(st)
        log.append(ReductionMessage("GramPQ", sh.node_id, np.concatenate([ptp.ravel(), ptt.ravel()])))
        log.append(ReductionMessage("GramD", sh.node_id, dd))
        log.append(ReductionMessage("ResidualSum", sh.node_id, st))
    BQ = an.bq_from_sums(_reduce(ptp_parts), _reduce(ptt_parts), lam)
    BS = an.bs_from_sums(_reduce(dd_parts), _reduce(s_parts), S, mu)
    return bp_blocks, BQ, BS, log


def distributed_coeffs(shards, dP_blocks, Q, dQ, S, dS, lam, mu, gs_change, log=None):
    """Per-node quartic coefficient shares and their sum.

    ``gs_change`` is ``||B_S||_1 - ||S||_1``; it is known to every node since
    ``S`` and ``B_S`` are replicated.  Returns ``(QuarticCoeffs, shares, log)``.
    """
    log = [] if log is None else log
    shards = sorted(shards, key=lambda s: s.node_id)
    L = len(shards)
    shares = []
    for sh, dP_l in zip(shards, dP_blocks):
        v = an.local_coeffs(sh.P_l, dP_l, sh.Y_l, sh.D_l, Q, dQ, S, dS, lam, mu, gs_change, L)
        shares.append(v)
        log.append(ReductionMessage("Coeffs4", sh.node_id, np.array(v)))
    total = [_reduce([s[j] for s in shares]) for j in range(4)]
    return an.QuarticCoeffs(*total), shares, log


class _DistributedStep:
    """``step_fn`` for :func:`anomaly.run_stela` that runs the node protocol."""

    def __init__(self, L):
        self.L = L
        self.per_iteration = []

    def __call__(self, p, z):
        shards = shard(p, z, self.L)
        log = []
        bp_blocks, BQ, BS, log = distributed_best_response(shards, z.Q, z.S, p.lam, p.mu, log)
        dP_blocks = [bp - sh.P_l for bp, sh in zip(bp_blocks, shards)]
        q, _, log = distributed_coeffs(
            shards, dP_blocks, z.Q, BQ - z.Q, z.S, BS - z.S, p.lam, p.mu, an.l1_change(z.S, BS), log
        )
        self.per_iteration.append(log)
        bz = an.AnomalyState(np.vstack(bp_blocks), BQ, BS)
        return bz, q, an.exact_line_search_quartic(q)


def communication_report(per_iteration):
    """Messages and bytes per iteration and in total, broken down by kind."""
    rows = []
    for t, log in enumerate(per_iteration):
        by_kind = {k: 0 for k in MESSAGE_KINDS}
        for m in log:
            by_kind[m.kind] += 1
        rows.append({
            "iteration": t,
            "messages": len(log),
            "bytes": sum(m.byte_size for m in log),
            "by_kind": by_kind,
        })
    return {
        "iterations": rows,
        "total_messages": sum(r["messages"] for r in rows),
        "total_bytes": sum(r["bytes"] for r in rows),
    }


def run_distributed_stela(p, z0=None, L=1, delta=1e-6, max_iter=1000, seed=0):
    """STELA with the best response and step computed by ``L`` simulated nodes.

    Returns ``(RunResult, report)``; the report is the dictionary from
    :func:`communication_report`.
    """
    step = _DistributedStep(L)
    if L > p.Y.shape[0]:
        raise InvalidPartition(f"cannot split {p.Y.shape[0]} rows over {L} nodes")
    result = an.run_stela(p, z0, delta=delta, max_iter=max_iter, seed=seed, step_fn=step)
    return result, communication_report(step.per_iteration)


def report_to_json(report):
    return json.dumps(report, indent=1, sort_keys=True) + "\n"
