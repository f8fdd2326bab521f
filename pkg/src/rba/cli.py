"""Command-line front end: ``rba simulate | sweep | thresholds | branches | bgk | classify``.

CSV files carry a header row, use ``.`` as decimal separator, 17 significant
digits and LF line endings.  Exit codes: 0 success, 2 usage error,
3 numerical-domain error, 4 non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import bgk, so3
from . import equilibria as eq
from . import particles as pt
from .errors import ConvergenceError, DomainError, InvalidInputError

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_NONCONVERGED = 0, 2, 3, 4

DEFAULT_SWEEP_RHO = [1.0, 2.0, 3.0, *np.round(np.geomspace(4.0, 7.0, 13), 6).tolist(), 8.0, 10.0, 12.0]
DEFAULT_SWEEP_C = [0.0, 0.25, 0.5, 0.75, 1.0]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x) if math.isfinite(x) else ""
    return str(x)


def write_csv(path: str | None, header: list[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    _emit(path, buf.getvalue())


def _emit(path: str | None, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(type(obj).__name__)


def dump_json(path: str | None, obj) -> None:
    _emit(path, json.dumps(obj, indent=2, default=_json_default) + "\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected numbers, got {text!r}") from exc


def _init_arg(text: str):
    try:
        return pt.parse_init(text)
    except (InvalidInputError, DomainError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def worker_count() -> int:
    env = os.environ.get("RBA_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise InvalidInputError(f"RBA_THREADS must be an integer, got {env!r}") from exc
        if n < 1:
            raise InvalidInputError("RBA_THREADS must be at least 1")
        return n
    return os.cpu_count() or 1


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------


def _sim_config(args, **overrides) -> pt.SimConfig:
    kw = dict(rho=args.rho, n_particles=args.n, dt=args.dt, n_steps=args.steps, seed=args.seed, init=args.init)
    kw.update(overrides)
    return pt.SimConfig(**kw)


def cmd_simulate(args) -> int:
    cfg = _sim_config(args)
    ts = pt.run(cfg)
    if args.format == "json":
        dump_json(args.out, {"t": ts.times, "c": ts.c_values, "flux_norm": ts.flux_norms})
    else:
        write_csv(args.out, ["t", "c", "flux_norm"], zip(ts.times, ts.c_values, ts.flux_norms))
    return EXIT_OK


# --------------------------------------------------------------------------
# sweep
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    rho_values: tuple[float, ...]
    c_init_values: tuple[float, ...]
    replicates: int
    sim: pt.SimConfig

    def __post_init__(self):
        if not self.rho_values or not self.c_init_values:
            raise InvalidInputError("sweep grids must be non-empty")
        if self.replicates < 1:
            raise InvalidInputError("replicates must be at least 1")

    def tasks(self, master_seed: int) -> list[tuple[int, float, float, int]]:
        out = []
        for rho in self.rho_values:
            for c in self.c_init_values:
                for _ in range(self.replicates):
                    i = len(out)
                    seed = record_seed(master_seed, i)
                    out.append((i, float(rho), float(c), seed))
        return out


@dataclass(frozen=True)
class RunRecord:
    index: int
    rho: float
    c_target: float
    seed: int
    c_initial: float | None
    c_final: float | None
    status: str
    wall_time: float


def record_seed(master: int, index: int) -> int:
    ss = np.random.SeedSequence([int(master) % (1 << 64), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def init_for_c(c: float):
    """``0`` means Haar initial data, ``1`` all aligned, otherwise von Mises with that ``c``."""
    if c == 0.0:
        return pt.Uniform()
    if c == 1.0:
        return pt.Aligned()
    return pt.VonMisesTargetC(c)


def _run_record(task, template: pt.SimConfig) -> RunRecord:
    index, rho, c, seed = task
    t0 = time.perf_counter()
    try:
        cfg = pt.SimConfig(
            rho=rho,
            n_particles=template.n_particles,
            dt=template.dt,
            n_steps=template.n_steps,
            seed=seed,
            init=init_for_c(c),
            renorm_every=template.renorm_every,
        )
        ts = pt.run(cfg)
        rec = (float(ts.c_values[0]), float(ts.c_values[-1]), "ok")
    except Exception as exc:  # recorded per row, the sweep goes on
        rec = (None, None, f"error:{type(exc).__name__}")
    return RunRecord(index, rho, c, seed, rec[0], rec[1], rec[2], time.perf_counter() - t0)


def _run_chunk(args):
    tasks, template = args
    return [_run_record(t, template) for t in tasks]


def run_sweep(spec: SweepSpec, master_seed: int, workers: int = 1) -> list[RunRecord]:
    """All records in index order; the result does not depend on ``workers``."""
    tasks = spec.tasks(master_seed)
    if workers <= 1 or len(tasks) <= 1:
        return [_run_record(t, spec.sim) for t in tasks]
    chunks = [(tasks[i::workers], spec.sim) for i in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        done = [r for part in pool.map(_run_chunk, chunks) for r in part]
    return sorted(done, key=lambda r: r.index)


SWEEP_HEADER = ["index", "rho", "c_target", "seed", "c_initial", "c_final", "status"]


def cmd_sweep(args) -> int:
    template = pt.SimConfig(rho=0.0, n_particles=args.n, dt=args.dt, n_steps=args.steps)
    rhos = tuple(args.rho_values or DEFAULT_SWEEP_RHO)
    for rho in rhos:
        if rho * args.dt > pt.STABILITY_LIMIT:
            raise InvalidInputError(f"rho={rho} violates dt * rho <= {pt.STABILITY_LIMIT}")
    spec = SweepSpec(rhos, tuple(args.c_init or DEFAULT_SWEEP_C), args.replicates, template)
    records = run_sweep(spec, args.seed, worker_count())
    header = SWEEP_HEADER + (["wall_time"] if args.timing else [])
    rows = []
    for r in records:
        row = [r.index, r.rho, r.c_target, r.seed, r.c_initial, r.c_final, r.status]
        rows.append(row + ([r.wall_time] if args.timing else []))
    if args.format == "json":
        dump_json(args.out, [dict(zip(header, row)) for row in rows])
    else:
        write_csv(args.out, header, rows)
    return EXIT_OK


# --------------------------------------------------------------------------
# thresholds, branches, classify
# --------------------------------------------------------------------------


def thresholds_report() -> dict:
    tab = eq.find_thresholds()
    return {
        "alpha_star": tab.alpha_star,
        "rho_star": tab.rho_star,
        "c_star": tab.c_star,
        "rho_c": tab.rho_c,
        "tolerances": {
            "quad_epsrel": tab.quad_epsrel,
            "root_xtol": tab.root_xtol,
            "golden_tol": tab.golden_tol,
        },
    }


def cmd_thresholds(args) -> int:
    rep = thresholds_report()
    if args.format == "csv":
        write_csv(args.out, ["alpha_star", "rho_star", "c_star", "rho_c"], [[rep[k] for k in ("alpha_star", "rho_star", "c_star", "rho_c")]])
    else:
        dump_json(args.out, rep)
    return EXIT_OK


def _maybe(f, *a):
    try:
        return f(*a)
    except DomainError:
        return None


def branch_rows(rho_values) -> list[list]:
    tab = eq.find_thresholds()
    rows = []
    for rho in rho_values:
        rows.append(
            [
                rho,
                _maybe(tab.c1_up, rho),
                _maybe(tab.c1_down, rho),
                _maybe(tab.c2_tilde, rho),
                rho < eq.RHO_C,
            ]
        )
    return rows


def branch_grid(rho_min: float, rho_max: float, points: int) -> list[float]:
    """Log-spaced grid, with ``rho*`` and ``rho_c`` added when they fall inside."""
    if not 0 < rho_min < rho_max or points < 2:
        raise InvalidInputError("need 0 < rho-min < rho-max and at least 2 points")
    tab = eq.find_thresholds()
    grid = set(np.geomspace(rho_min, rho_max, points).tolist())
    grid.update(x for x in (tab.rho_star, eq.RHO_C) if rho_min <= x <= rho_max)
    return sorted(grid)


def cmd_branches(args) -> int:
    grid = branch_grid(args.rho_min, args.rho_max, args.points)
    header = ["rho", "c1_up", "c1_down", "c2", "uniform_stable_flag"]
    rows = branch_rows(grid)
    if args.format == "json":
        dump_json(args.out, [dict(zip(header, r)) for r in rows])
    else:
        write_csv(args.out, header, rows)
    return EXIT_OK


def cmd_classify(args) -> int:
    items = eq.classify_all(args.rho)
    header = ["family", "alpha", "c", "signature", "lambda1", "lambda2", "lambda3", "stable", "residual"]
    rows = [
        [
            it.equilibrium.tag.value,
            it.equilibrium.alpha,
            it.order_parameter,
            it.report.signature,
            *it.report.eigenvalues,
            it.stable,
            it.residual,
        ]
        for it in items
    ]
    if args.format == "csv":
        write_csv(args.out, header, rows)
    else:
        out = []
        for it, row in zip(items, rows):
            d = dict(zip(header, row))
            d["eigenvalues"] = [d.pop(f"lambda{i}") for i in (1, 2, 3)]
            d["label"] = it.label
            out.append(d)
        dump_json(args.out, {"rho": args.rho, "critical": bgk.is_critical(args.rho), "equilibria": out})
    return EXIT_OK


# --------------------------------------------------------------------------
# bgk
# --------------------------------------------------------------------------

BGK_PRESETS = ("random", "rotation", "rank1", "small", "identity")


def bgk_initial(preset: str, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    if preset == "random":
        return rng.standard_normal((3, 3))
    if preset == "rotation":
        return so3.haar_sample(rng)
    if preset == "rank1":
        a, b = rng.standard_normal(3), rng.standard_normal(3)
        return math.sqrt(3.0) * np.outer(a / np.linalg.norm(a), b / np.linalg.norm(b))
    if preset == "small":
        return 0.1 * rng.standard_normal((3, 3))
    if preset == "identity":
        return np.eye(3)
    raise InvalidInputError(f"unknown preset {preset!r}")


def bgk_report(res: bgk.LimitClassification, j0: np.ndarray) -> dict:
    e = res.equilibrium
    rate = None
    if res.trajectory.converged and e is not None:
        stable = {c.equilibrium.tag: c.stable for c in eq.classify_all(res.trajectory.rho)}
        if stable.get(e.tag):
            try:
                rate = bgk.decay_rate_fit(res.trajectory)
            except ConvergenceError:
                rate = None
    return {
        "rho": res.trajectory.rho,
        "status": res.status,
        "class": res.tag,
        "alpha": None if e is None else e.alpha,
        "frame": None if e is None or e.frame is None else e.frame,
        "vectors": None if e is None or e.vectors is None else [e.vectors[0], e.vectors[1]],
        "critical": res.critical,
        "j0": j0,
        "j_limit": res.j_limit,
        "d_limit": res.d_limit,
        "distance": res.distance,
        "t_final": float(res.trajectory.times[-1]),
        "decay_rate": rate,
    }


def cmd_bgk(args) -> int:
    if args.matrix is not None:
        if len(args.matrix) != 9:
            raise InvalidInputError("--matrix needs 9 numbers (row major)")
        j0 = np.array(args.matrix, dtype=float).reshape(3, 3)
    else:
        j0 = bgk_initial(args.init, args.seed)
    res = bgk.classify_limit(args.rho, j0, t_max=args.t_max)
    tr = res.trajectory
    report = bgk_report(res, j0)
    if args.format == "json":
        dump_json(args.out, report)
    else:
        rows = ([t, *d, v] for t, d, v in zip(tr.times, tr.d_values, tr.v_values))
        write_csv(args.out, ["t", "d1", "d2", "d3", "V"], rows)
        if args.report:
            dump_json(args.report, report)
    return EXIT_OK if tr.converged else EXIT_NONCONVERGED


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rba", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, fmt="csv"):
        sp.add_argument("--out", default=None, help="output path (default: stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default=fmt)

    def sim_flags(sp, steps):
        sp.add_argument("--n", type=_positive_int, default=500, help="number of particles")
        sp.add_argument("--dt", type=float, default=0.04)
        sp.add_argument("--steps", type=_positive_int, default=steps)
        sp.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("simulate", help="time series of the order parameter")
    s.add_argument("--rho", type=float, required=True)
    s.add_argument("--init", type=_init_arg, default=pt.Aligned(), help="aligned | uniform | vmc:<c>")
    sim_flags(s, 100)
    common(s)

    s = sub.add_parser("sweep", help="final order parameter over a (rho, c0) grid")
    s.add_argument("--rho-values", type=_float_list, default=None, help="comma separated")
    s.add_argument("--c-init", type=_float_list, default=None, help="initial c values; 0 uniform, 1 aligned")
    s.add_argument("--replicates", type=_positive_int, default=1)
    s.add_argument("--timing", action="store_true", help="add a wall_time column (not reproducible)")
    sim_flags(s, 500)
    common(s)

    s = sub.add_parser("thresholds", help="alpha*, rho*, c*, rho_c")
    common(s, "json")

    s = sub.add_parser("branches", help="order parameter of each branch versus rho")
    s.add_argument("--rho-min", type=float, default=2.0)
    s.add_argument("--rho-max", type=float, default=40.0)
    s.add_argument("--points", type=int, default=100)
    common(s)

    s = sub.add_parser("bgk", help="integrate the flux ODE and classify its limit")
    s.add_argument("--rho", type=float, required=True)
    s.add_argument("--init", choices=BGK_PRESETS, default="random")
    s.add_argument("--matrix", type=_float_list, default=None, help="9 numbers, row major")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--t-max", type=float, default=400.0)
    s.add_argument("--report", default=None, help="also write the JSON classification here")
    common(s)

    s = sub.add_parser("classify", help="steady states at rho with their stability")
    s.add_argument("--rho", type=float, required=True)
    common(s, "json")
    return p


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "thresholds": cmd_thresholds,
    "branches": cmd_branches,
    "bgk": cmd_bgk,
    "classify": cmd_classify,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except InvalidInputError as exc:
        print(f"rba: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"rba: domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ConvergenceError as exc:
        print(f"rba: no convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
