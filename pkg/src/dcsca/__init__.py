"""Successive convex approximation with exact line search for DC-structured problems.

Subpackages by application: :mod:`dcsca.anomaly` (sparsity-regularised rank
minimisation), :mod:`dcsca.capped_l1` (capped-l1 least squares) and
:mod:`dcsca.distributed` (the anomaly solver split over simulated nodes).
The generic driver lives in :mod:`dcsca.core`.
"""

from .core import Constant, DcProblem, Exact, Successive, SurrogateSolver, run_sca
from .trace import IterationTrace, RunResult

__version__ = "0.1.0"

__all__ = [
    "Constant",
    "DcProblem",
    "Exact",
    "IterationTrace",
    "RunResult",
    "Successive",
    "SurrogateSolver",
    "run_sca",
]
