"""Per-iteration records, the solver result container and trace serialisation."""

import csv
import io
import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

__all__ = [
    "IterationTrace",
    "RunResult",
    "Stopwatch",
    "TRACE_FIELDS",
    "trace_to_csv",
    "trace_to_json",
    "write_trace",
    "read_trace_csv",
]

TRACE_FIELDS = ("iter", "h", "gap", "gamma", "seconds")


@dataclass
class IterationTrace:
    iteration: int
    h_value: float
    stationarity_gap: float
    step_size: float
    elapsed_seconds: float

    def row(self, clock=True):
        secs = self.elapsed_seconds if clock else 0.0
        return (self.iteration, self.h_value, self.stationarity_gap, self.step_size, secs)


@dataclass
class RunResult:
    """What every solver returns.

    Unpacks as ``x, trace = result`` for the common case; ``converged`` and
    the per-iteration counters in ``stats`` are available as attributes.
    """

    x: object
    trace: list
    converged: bool = False
    stats: dict = field(default_factory=dict)

    def __iter__(self):
        yield self.x
        yield self.trace

    @property
    def iterations(self):
        return self.trace[-1].iteration if self.trace else 0

    @property
    def final_h(self):
        return self.trace[-1].h_value

    @property
    def final_gap(self):
        return self.trace[-1].stationarity_gap


class Stopwatch:
    """Monotonic clock that can be paused around diagnostics.

    Objective evaluations done only for the trace run inside ``paused()`` so
    they are not charged to the algorithm.
    """

    def __init__(self, offset=0.0):
        # offset: time already spent before the clock was created (set-up work)
        self._start = time.perf_counter() - offset
        self._paused_total = 0.0

    def elapsed(self):
        return time.perf_counter() - self._start - self._paused_total

    @contextmanager
    def paused(self):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self._paused_total += time.perf_counter() - t0


def _fmt(v):
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def trace_to_csv(trace, clock=True):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_FIELDS)
    for rec in trace:
        w.writerow([_fmt(v) for v in rec.row(clock)])
    return buf.getvalue()


def trace_to_json(trace, clock=True):
    rows = [dict(zip(TRACE_FIELDS, rec.row(clock))) for rec in trace]
    return json.dumps(rows, indent=1) + "\n"


def write_trace(trace, path, fmt="csv", clock=True):
    text = trace_to_csv(trace, clock) if fmt == "csv" else trace_to_json(trace, clock)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def read_trace_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [
        IterationTrace(int(r["iter"]), float(r["h"]), float(r["gap"]), float(r["gamma"]), float(r["seconds"]))
        for r in rows
    ]

