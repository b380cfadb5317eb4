"""Binary container for problem instances and their ground truth.

Layout (all integers little-endian)::

    8 bytes   magic b"DCSCAIN1"
    8 bytes   uint64 length H of the header
    H bytes   UTF-8 JSON header: {"problem": str, "params": {...},
              "arrays": [{"name": str, "shape": [int, ...]}, ...]}
    ...       each array in header order, row-major little-endian float64

The header is written with sorted keys and no timestamps, so the same
instance always produces the same bytes.
"""

import json
import struct

import numpy as np

from .errors import InvalidArgument

__all__ = ["MAGIC", "save_instance", "load_instance", "save_problem", "load_problem"]

MAGIC = b"DCSCAIN1"


def save_instance(path, problem, params, arrays):
    """Write named float64 arrays plus scalar parameters to ``path``.

    Parameters
    ----------
    problem : str
        Problem kind tag, e.g. ``"anomaly"``.
    params : dict
        JSON-serialisable scalars (regularisation weights, rank, seed...).
    arrays : dict of str to ndarray
        Written in insertion order.
    """
    entries, blobs = [], []
    for name, a in arrays.items():
        a = np.ascontiguousarray(a, dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape)})
        blobs.append(a.tobytes(order="C"))
    header = json.dumps({"problem": problem, "params": params, "arrays": entries}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)


def load_instance(path):
    """Inverse of :func:`save_instance`: returns ``(problem, params, arrays)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise InvalidArgument(f"{path}: not an instance file (bad magic)")
    (hlen,) = struct.unpack("<Q", data[8:16])
    try:
        header = json.loads(data[16:16 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InvalidArgument(f"{path}: corrupt header") from exc
    pos = 16 + hlen
    arrays = {}
    for e in header["arrays"]:
        shape = tuple(e["shape"])
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if pos + nbytes > len(data):
            raise InvalidArgument(f"{path}: truncated array {e['name']!r}")
        arrays[e["name"]] = np.frombuffer(data, dtype="<f8", count=nbytes // 8, offset=pos).reshape(shape).copy()
        pos += nbytes
    if pos != len(data):
        raise InvalidArgument(f"{path}: {len(data) - pos} trailing bytes")
    return header["problem"], header["params"], arrays


def save_problem(path, problem, truth, seed=None):
    """Save an anomaly or capped-l1 problem together with its ground truth."""
    from .anomaly import AnomalyProblem
    from .capped_l1 import CappedL1Problem

    if isinstance(problem, AnomalyProblem):
        params = {"lam": problem.lam, "mu": problem.mu, "rho": problem.rho, "seed": seed}
        arrays = {"Y": problem.Y, "D": problem.D, "P_true": truth.P, "Q_true": truth.Q, "S_true": truth.S}
        save_instance(path, "anomaly", params, arrays)
    elif isinstance(problem, CappedL1Problem):
        params = {"mu": problem.mu, "theta": problem.theta, "seed": seed}
        save_instance(path, "capped_l1", params, {"A": problem.A, "b": problem.b, "x_true": truth})
    else:
        raise InvalidArgument(f"cannot save a {type(problem).__name__}")


def load_problem(path):
    """Returns ``(kind, problem, truth, params)``."""
    from .anomaly import AnomalyProblem, AnomalyState
    from .capped_l1 import CappedL1Problem

    kind, params, arrays = load_instance(path)
    try:
        if kind == "anomaly":
            p = AnomalyProblem(arrays["Y"], arrays["D"], params["lam"], params["mu"], params["rho"])
            truth = AnomalyState(arrays["P_true"], arrays["Q_true"], arrays["S_true"])
        elif kind == "capped_l1":
            p = CappedL1Problem(arrays["A"], arrays["b"], params["mu"], params["theta"])
            truth = arrays["x_true"]
        else:
            raise InvalidArgument(f"{path}: unknown problem kind {kind!r}")
    except KeyError as exc:
        raise InvalidArgument(f"{path}: missing field {exc}") from exc
    return kind, p, truth, params
