"""Command-line harness: ``gen``, ``run`` and ``compare``.

Exit codes: 0 success, 2 usage or configuration error, 3 a solver hit its
iteration cap without meeting the stopping tolerance (its trace is still
written).
"""

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import anomaly as an
from . import capped_l1 as cl
from . import core
from .distributed import report_to_json, run_distributed_stela
from .errors import DcscaError
from .io import load_problem, save_problem
from .trace import trace_to_csv, trace_to_json

__all__ = ["main", "RunConfig", "build_parser", "run_algorithm", "SCALES", "ALGORITHMS"]

EXIT_OK, EXIT_USAGE, EXIT_NOT_CONVERGED = 0, 2, 3

SCALES = {
    "anomaly": {"desk": (50, 100, 100, 5), "paper": (1000, 4000, 4000, 10)},
    "capped_l1": {"desk": (200, 1000), "paper": (10000, 50000)},
}
ALGORITHMS = {
    "anomaly": ("stela", "bcd", "admm", "gist", "stela_distributed"),
    "capped_l1": ("stela", "classic_mm", "proximal_mm"),
}
DEFAULT_MAX_ITER = {"classic_mm": 10}
MEMORY_WARN_BYTES = 1 << 30
REFERENCE_DELTA = 1e-9
REFERENCE_MAX_ITER = 50_000


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    problem: str = "anomaly"
    scale: str = "desk"
    dims: tuple = ()
    seed: int = 0
    algorithm: tuple = ("stela",)
    delta: float = 1e-6
    max_iter: int = None
    line_search: str = "exact"
    alpha: float = 0.01
    beta: float = 0.5
    gamma: float = 1.0
    c: float = 1e4
    lam: float = None
    mu: float = None
    theta: float = 1.0
    nodes: int = 1
    threads: int = 1
    out: str = None
    fmt: str = "csv"
    instance: str = None
    clock: bool = True
    extra: dict = field(default_factory=dict)

    def resolved_dims(self):
        if self.dims:
            want = 4 if self.problem == "anomaly" else 2
            if len(self.dims) != want:
                raise UsageError(f"--dims for {self.problem} takes {want} integers, got {len(self.dims)}")
            return tuple(self.dims)
        return SCALES[self.problem][self.scale]


# -- argument handling ------------------------------------------------------

CONFIG_KEYS = {
    "problem": str, "scale": str, "dims": str, "seed": int, "algorithm": str, "delta": float,
    "max_iter": int, "line_search": str, "alpha": float, "beta": float, "gamma": float, "c": float,
    "lam": float, "mu": float, "theta": float, "nodes": int, "threads": int, "out": str,
    "format": str, "instance": str,
}


def read_config_file(path):
    """Flat ``key = value`` file; ``#`` starts a comment.  Keys use underscores."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = CONFIG_KEYS[key](val)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {val!r}") from exc
    return values


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _add_common(sp, with_algorithm=True):
    sp.add_argument("--config", help="key=value file; command-line flags take precedence")
    sp.add_argument("--problem", choices=sorted(SCALES))
    sp.add_argument("--scale", choices=("desk", "paper"))
    sp.add_argument("--dims", help="explicit sizes: N,K,I,rho (anomaly) or N,K (capped_l1)")
    sp.add_argument("--seed", type=int, help="64-bit seed (default: $DCSCA_SEED, else 0)")
    sp.add_argument("--lam", type=float, help="override the data-derived lambda (anomaly)")
    sp.add_argument("--mu", type=float, help="override the data-derived mu")
    sp.add_argument("--theta", type=float, help="cap of the capped-l1 penalty")
    sp.add_argument("--out", help="output file (gen, run) or directory (compare)")
    if with_algorithm:
        sp.add_argument("--instance", help="instance file written by 'gen'; otherwise generated from the seed")
        sp.add_argument("--algorithm", help="algorithm name; a comma-separated list for 'compare'")
        sp.add_argument("--delta", type=float, help="stationarity tolerance")
        sp.add_argument("--max-iter", type=_positive_int, dest="max_iter")
        sp.add_argument("--line-search", choices=("exact", "successive", "constant"), dest="line_search")
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--beta", type=float)
        sp.add_argument("--gamma", type=float, help="step for --line-search constant")
        sp.add_argument("--c", type=float, help="ADMM penalty")
        sp.add_argument("--nodes", type=_positive_int, help="node count for stela_distributed")
        sp.add_argument("--threads", type=_positive_int, help="BLAS threads (default 1)")
        sp.add_argument("--format", choices=("csv", "json"))
        sp.add_argument("--no-clock", action="store_true", dest="no_clock",
                        help="write 0 in the seconds column so repeated runs give identical files")


def build_parser():
    parser = argparse.ArgumentParser(prog="dcsca", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("gen", help="generate an instance file"), with_algorithm=False)
    _add_common(sub.add_parser("run", help="run one algorithm and write its trace"))
    _add_common(sub.add_parser("compare", help="run several algorithms on one instance"))
    return parser


def config_from_args(args, environ=None):
    environ = os.environ if environ is None else environ
    merged = read_config_file(args.config) if args.config else {}
    for key in CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    cfg = RunConfig()
    for key in ("problem", "scale", "seed", "delta", "max_iter", "line_search", "alpha", "beta", "gamma",
                "c", "lam", "mu", "theta", "nodes", "threads", "out", "instance"):
        if key in merged:
            setattr(cfg, key, merged[key])
    if "format" in merged:
        cfg.fmt = merged["format"]
    if "seed" not in merged:
        env = environ.get("DCSCA_SEED")
        if env is not None:
            try:
                cfg.seed = int(env)
            except ValueError as exc:
                raise UsageError(f"DCSCA_SEED is not an integer: {env!r}") from exc
    if not 0 <= cfg.seed < 2**64:
        raise UsageError("seed must fit in 64 unsigned bits")
    if "dims" in merged:
        try:
            cfg.dims = tuple(int(v) for v in str(merged["dims"]).split(","))
        except ValueError as exc:
            raise UsageError(f"--dims must be comma-separated integers, got {merged['dims']!r}") from exc
    if "algorithm" in merged:
        cfg.algorithm = tuple(a.strip() for a in str(merged["algorithm"]).split(",") if a.strip())
    if cfg.problem not in SCALES:
        raise UsageError(f"unknown problem {cfg.problem!r}")
    if cfg.scale not in ("desk", "paper"):
        raise UsageError(f"unknown scale {cfg.scale!r}")
    if cfg.fmt not in ("csv", "json"):
        raise UsageError(f"unknown format {cfg.fmt!r}")
    cfg.clock = not getattr(args, "no_clock", False)
    return cfg


# -- instances ---------------------------------------------------------------


def make_instance(cfg, warn=None):
    """Generate the problem described by ``cfg``; returns ``(problem, truth)``."""
    warn = warn or (lambda msg: print(msg, file=sys.stderr))
    dims = cfg.resolved_dims()
    if cfg.problem == "anomaly":
        n, k, i, rho = dims
        p, truth = an.generate_data(n, k, i, rho, seed=cfg.seed)
        if cfg.lam is not None or cfg.mu is not None:
            p = an.AnomalyProblem(p.Y, p.D, cfg.lam if cfg.lam is not None else p.lam,
                                  cfg.mu if cfg.mu is not None else p.mu, p.rho)
        return p, truth
    n, k = dims
    nbytes = 8 * n * k
    if nbytes >= MEMORY_WARN_BYTES:
        warn(f"warning: the dictionary alone needs {nbytes / 2**30:.1f} GiB of memory")
    p, truth = cl.generate_data(n, k, seed=cfg.seed, theta=cfg.theta)
    if cfg.mu is not None:
        p = cl.CappedL1Problem(p.A, p.b, cfg.mu, cfg.theta)
    return p, truth


def load_or_make(cfg):
    if cfg.instance:
        try:
            kind, p, truth, params = load_problem(cfg.instance)
        except OSError as exc:
            raise UsageError(f"cannot read instance {cfg.instance}: {exc}") from exc
        if kind != cfg.problem:
            raise UsageError(f"instance holds a {kind} problem but --problem is {cfg.problem}")
        return p, truth
    return make_instance(cfg)


# -- running ----------------------------------------------------------------


def _line_search(cfg):
    if cfg.line_search == "successive":
        return core.Successive(alpha=cfg.alpha, beta=cfg.beta)
    if cfg.line_search == "constant":
        return core.Constant(cfg.gamma)
    return core.Exact()


def run_algorithm(cfg, p, name, delta=None, max_iter=None):
    """Run ``name`` on ``p``; returns ``(RunResult, extra_outputs)``."""
    delta = cfg.delta if delta is None else delta
    if max_iter is None:
        max_iter = cfg.max_iter if cfg.max_iter is not None else DEFAULT_MAX_ITER.get(name, 1000)
    if name not in ALGORITHMS[cfg.problem]:
        raise UsageError(f"algorithm {name!r} is not available for {cfg.problem}; "
                         f"choose from {', '.join(ALGORITHMS[cfg.problem])}")
    extra = {}
    if cfg.problem == "anomaly":
        z0 = an.init_state(p, cfg.seed)
        if name == "stela" and cfg.line_search != "exact":
            dc = an.as_dc_problem(p)
            res = core.run_sca(dc, an.best_response_surrogate(p), _line_search(cfg), z0.flatten(),
                               delta=delta, max_iter=max_iter)
            res.x = an.AnomalyState.unflatten(res.x, p)
        elif name == "stela":
            res = an.run_stela(p, z0, delta=delta, max_iter=max_iter)
        elif name == "bcd":
            res = an.run_bcd(p, z0, sweeps=max_iter, delta=delta)
        elif name == "admm":
            res = an.run_admm(p, z0, c=cfg.c, max_iter=max_iter, delta=delta)
        elif name == "gist":
            res = core.gist_baseline(an.as_dc_problem(p), z0.flatten(), beta=cfg.beta, alpha=cfg.alpha,
                                     max_iter=max_iter, delta=delta)
        else:
            res, report = run_distributed_stela(p, z0, L=cfg.nodes, delta=delta, max_iter=max_iter)
            extra["communication"] = report
        return res, extra
    if name == "stela" and cfg.line_search != "exact":
        res = core.run_sca(cl.as_dc_problem(p), cl.best_response_surrogate(p), _line_search(cfg),
                           np.zeros(p.A.shape[1]), delta=delta, max_iter=max_iter)
    elif name == "stela":
        res = cl.run_stela(p, delta=delta, max_iter=max_iter)
    elif name == "classic_mm":
        res = cl.run_classic_mm(p, outer_iters=max_iter)
    else:
        res = cl.run_proximal_mm(p, beta=cfg.beta, max_iter=max_iter, delta=delta)
    return res, extra


def format_trace(trace, cfg):
    return trace_to_csv(trace, cfg.clock) if cfg.fmt == "csv" else trace_to_json(trace, cfg.clock)


def _write(path, text):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from exc


def time_to_tolerance(trace, h_star, tol):
    """Elapsed seconds at the first row whose relative error is at most ``tol``."""
    for rec, err in zip(trace, an.relative_error(trace, h_star)):
        if err <= tol:
            return rec.elapsed_seconds
    return None


def cmd_gen(cfg, out=print):
    p, truth = make_instance(cfg)
    path = cfg.out or f"{cfg.problem}-{cfg.scale}-{cfg.seed}.bin"
    try:
        save_problem(path, p, truth, seed=cfg.seed)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from exc
    if cfg.problem == "anomaly":
        out(f"wrote {path}: lambda={p.lam!r} mu={p.mu!r}")
    else:
        out(f"wrote {path}: mu={p.mu!r} theta={p.theta!r}")
    return EXIT_OK


def cmd_run(cfg, out=print):
    if len(cfg.algorithm) != 1:
        raise UsageError("'run' takes exactly one algorithm; use 'compare' for several")
    name = cfg.algorithm[0]
    p, _ = load_or_make(cfg)
    res, extra = run_algorithm(cfg, p, name)
    path = cfg.out or f"{name}.{cfg.fmt}"
    _write(path, format_trace(res.trace, cfg))
    if "communication" in extra:
        _write(str(path) + ".comm.json", report_to_json(extra["communication"]))
    last = res.trace[-1]
    out(f"{name}: final h={last.h_value!r} gap={last.stationarity_gap!r} "
        f"iterations={last.iteration} seconds={last.elapsed_seconds:.4f} converged={res.converged}")
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_compare(cfg, out=print):
    if len(cfg.algorithm) < 2:
        raise UsageError("'compare' needs at least two algorithms")
    p, _ = load_or_make(cfg)
    outdir = Path(cfg.out or "compare-out")
    ref, _ = run_algorithm(cfg, p, "stela", delta=REFERENCE_DELTA, max_iter=REFERENCE_MAX_ITER)
    results = {name: run_algorithm(cfg, p, name)[0] for name in cfg.algorithm}
    h_star = min([ref.final_h] + [r.final_h for r in results.values()])
    rows = []
    for name, res in results.items():
        _write(outdir / f"{name}.{cfg.fmt}", format_trace(res.trace, cfg))
        rows.append({
            "algorithm": name,
            "final_h": res.final_h,
            "iterations": res.trace[-1].iteration,
            "converged": res.converged,
            "time_to_1e-2": time_to_tolerance(res.trace, h_star, 1e-2),
            "time_to_1e-4": time_to_tolerance(res.trace, h_star, 1e-4),
        })
    finals = [r["final_h"] for r in rows]
    spread = (max(finals) - min(finals)) / abs(h_star)
    summary = {"h_star": h_star, "relative_spread_final_h": spread, "rows": rows}
    _write(outdir / "summary.json", json.dumps(summary, indent=1) + "\n")
    out(f"{'algorithm':<18}{'final h':>24}{'t(1e-2)':>12}{'t(1e-4)':>12}  converged")
    for r in rows:
        t2 = "-" if r["time_to_1e-2"] is None else f"{r['time_to_1e-2']:.4f}"
        t4 = "-" if r["time_to_1e-4"] is None else f"{r['time_to_1e-4']:.4f}"
        out(f"{r['algorithm']:<18}{r['final_h']:>24.12g}{t2:>12}{t4:>12}  {r['converged']}")
    out(f"relative spread of final h: {spread:.3e}")
    return EXIT_OK if all(r["converged"] for r in rows) else EXIT_NOT_CONVERGED


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "compare": cmd_compare}


def main(argv=None, environ=None, out=print):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        cfg = config_from_args(args, environ)
        with threadpool_limits(limits=cfg.threads):
            return COMMANDS[args.command](cfg, out)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DcscaError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry_point():
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
