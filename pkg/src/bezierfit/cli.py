"""Command line front end.

Subcommands: ``fit``, ``interpolate``, ``eval``, ``gradcheck`` and
``experiment``. Every run writes ``summary.json`` into the output directory,
also when it fails.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .bezier import CompositeBezier, composite_eval, pack, unpack
from .experiments import EXPERIMENTS, run_experiment
from .manifolds import CutLocusError, GeometryError, manifold_from_name
from .objective import (DiscretizationGrid, FittingProblem, default_initialization,
                        first_order_diffs, gradient, objective)
from .solver import (BACKTRACK_FAIL, ArmijoParams, SolverCutLocusError, StoppingCriteria,
                     gradient_descent)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_BACKTRACK = 2
EXIT_GRADCHECK = 3

CSV_DIGITS = 12
FD_STEP = 1e-6
GRADCHECK_TOL = {"Euclidean": 1e-6, "Sphere": 1e-4, "Rotations3": 1e-4}


class InputError(ValueError):
    """Malformed problem description; the message names the offending field."""


# -- formatting ----------------------------------------------------------------

def _fmt(x) -> str:
    return format(float(x), f".{CSV_DIGITS}g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return x
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj):
    # float repr is the shortest string that round-trips (at most 17 digits)
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])


# -- problem ingestion ---------------------------------------------------------

def parse_lambda(value):
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity", "+inf"):
            return math.inf
        try:
            value = float(value)
        except ValueError:
            raise InputError(f"lambda: cannot parse {value!r}") from None
    if value is None or not isinstance(value, (int, float)) or isinstance(value, bool):
        raise InputError("lambda: expected a number or \"inf\"")
    if value < 0 or math.isnan(value):
        raise InputError("lambda: must be non-negative")
    return float(value)


def _field(doc, key, kind=None):
    if key not in doc:
        raise InputError(f"{key}: missing")
    value = doc[key]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise InputError(f"{key}: expected an integer")
    return value


def _points(M, values, key):
    if not isinstance(values, list):
        raise InputError(f"{key}: expected a list of points")
    try:
        return np.array([M.point_from_list(p) for p in values], dtype=float).reshape(
            (len(values),) + M.point_shape)
    except (ValueError, TypeError, GeometryError) as err:
        raise InputError(f"{key}: {err}") from None


def load_problem(doc, lam_override=None, n_override=None):
    """``(problem, initial pack)`` from a problem document."""
    if not isinstance(doc, dict):
        raise InputError("problem: expected a JSON object")
    try:
        M = manifold_from_name(_field(doc, "manifold"))
    except ValueError as err:
        raise InputError(str(err)) from None
    degree = _field(doc, "degree", int) if "degree" in doc else 3
    lam = parse_lambda(lam_override if lam_override is not None else _field(doc, "lambda"))
    data = _points(M, _field(doc, "data"), "data")
    if len(data) < 2:
        raise InputError("data: need at least 2 points")
    if not 2 <= degree <= 6:
        raise InputError("degree: must lie between 2 and 6")
    N = n_override if n_override is not None else _field(doc, "N", int)
    try:
        grid = DiscretizationGrid(len(data) - 1, int(N))
        problem = FittingProblem(M, data, lam, grid, degree=degree)
    except ValueError as err:
        raise InputError(str(err)) from None
    if doc.get("initial_controls") is None:
        return problem, default_initialization(problem)
    segs = doc["initial_controls"]
    if isinstance(segs, dict):
        segs = segs.get("segments")
    if not isinstance(segs, list) or not segs:
        raise InputError("initial_controls: expected a list of segments")
    try:
        ctrl = np.array([_points(M, s, "initial_controls") for s in segs])
        B = CompositeBezier(M, ctrl)
    except ValueError as err:
        raise InputError(f"initial_controls: {err}") from None
    if B.n != problem.n or B.degree != degree:
        raise InputError("initial_controls: segment count or degree does not match data")
    if problem.interpolating and np.max(M.dist(B.junctions, data)) > 1e-12:
        raise InputError("initial_controls: junctions must equal the data when interpolating")
    return problem, pack(B, problem.mode)


def read_config(path):
    if path is None:
        raise InputError("--config: a problem file is required")
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InputError(f"--config: file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise InputError(f"--config: invalid JSON ({err})") from None


# -- artifacts -----------------------------------------------------------------

def write_curve(out: Path, B: CompositeBezier, grid: DiscretizationGrid):
    M = B.manifold
    t = grid.times
    pts = composite_eval(B, t)
    width = int(np.prod(M.point_shape))
    write_csv(out / "curve_samples.csv", ["t"] + [f"x{i}" for i in range(width)],
              ([ti] + list(p.reshape(-1)) for ti, p in zip(t, pts)))
    fo = first_order_diffs(B, grid)
    write_csv(out / "first_order_diffs.csv", ["t", "diff"], zip(t[:-1], fo))
    doc = B.to_json()
    doc["N"] = grid.N
    write_json(out / "control_points.json", doc)


def write_trace(out: Path, trace):
    write_csv(out / "trace.csv", ["k", "objective", "grad_norm", "step_size", "displacement"],
              ([r.k, float(r.objective), float(r.grad_norm), float(r.step_size),
                float(r.displacement)] for r in trace.records))


def run_summary(problem, v_final, trace):
    val = objective(v_final, problem)
    return {
        "manifold": problem.manifold.name,
        "degree": problem.degree,
        "segments": problem.n,
        "lambda": problem.lam,
        "mode": problem.mode,
        "N": problem.grid.N,
        "initial_objective": trace.initial_objective,
        "final_objective": val.total,
        "final_msa": val.msa,
        "final_data_term": val.data_term,
        "iterations": trace.iterations,
        "termination_reason": trace.termination_reason,
        "final_grad_norm": trace.final_grad_norm,
    }


def _stopping(M, args):
    return StoppingCriteria.for_manifold(M, max_iterations=args.max_iter,
                                         min_change=args.eps,
                                         min_grad_norm=args.grad_eps)


# -- commands ------------------------------------------------------------------

def cmd_fit(args, out, summary, interpolate=False):
    doc = read_config(args.config)
    lam = "inf" if interpolate else args.lam
    problem, v0 = load_problem(doc, lam, args.grid_n)
    if not interpolate and problem.interpolating:
        logger.info("lambda is infinite; solving the interpolation problem")
    v, trace = gradient_descent(problem, v0, ArmijoParams(),
                                _stopping(problem.manifold, args))
    B = unpack(v)
    write_curve(out, B, problem.grid)
    write_trace(out, trace)
    summary.update(run_summary(problem, v, trace))
    return EXIT_BACKTRACK if trace.termination_reason == BACKTRACK_FAIL else EXIT_OK


def cmd_eval(args, out, summary):
    doc = read_config(args.config)
    if "segments" in doc:
        try:
            B = CompositeBezier.from_json(doc)
        except (KeyError, ValueError) as err:
            raise InputError(f"segments: {err}") from None
    else:
        problem, v0 = load_problem(doc, args.lam, args.grid_n)
        B = unpack(v0)
    N = args.grid_n if args.grid_n is not None else doc.get("N")
    if N is None:
        raise InputError("N: missing (pass --grid-n)")
    grid = DiscretizationGrid(B.n, int(N))
    write_curve(out, B, grid)
    summary.update({"manifold": B.manifold.name, "degree": B.degree, "segments": B.n,
                    "N": grid.N})
    return EXIT_OK


def random_problem(manifold, seed, lam=3.0, n=3, degree=3, N=24):
    """Random fitting problem with a perturbed default start, for gradient checks."""
    M = manifold_from_name(manifold)
    rng = np.random.default_rng(seed)
    x = M.random_point(rng)
    data = [x]
    for _ in range(n):
        step = M.random_tangent(x, rng)
        step *= 0.8 / max(float(M.norm(x, step)), 1e-12)
        x = M.exp(x, step)
        data.append(x)
    problem = FittingProblem(M, np.array(data), lam, DiscretizationGrid(n, N), degree=degree)
    v = default_initialization(problem)
    noise = np.array([0.15 * M.random_tangent(p, rng) for p in v.points])
    return problem, v.with_points(M.exp(v.points, noise))


def gradient_check(problem, v, grad_fn=gradient, h=FD_STEP):
    """Per-variable comparison of the analytic gradient with central
    differences along an orthonormal tangent basis.

    Returns rows ``(variable, analytic_norm, fd_norm, rel_error)``. The
    relative error is taken against the larger of the two norms, floored at
    ``1e-6`` times the largest analytic component so that variables with a
    vanishing gradient do not divide by zero.
    """
    M = problem.manifold
    g = np.asarray(grad_fn(v, problem))
    comps, fds = [], []
    for j, p in enumerate(v.points):
        basis = M.tangent_basis(p)
        fd = np.empty(len(basis))
        for k, e in enumerate(basis):
            pts_plus, pts_minus = v.points.copy(), v.points.copy()
            pts_plus[j] = M.exp(p, h * e)
            pts_minus[j] = M.exp(p, -h * e)
            f_plus = objective(v.with_points(pts_plus), problem).total
            f_minus = objective(v.with_points(pts_minus), problem).total
            fd[k] = (f_plus - f_minus) / (2 * h)
        comps.append(np.array([M.inner(p, g[j], e) for e in basis]))
        fds.append(fd)
    floor = 1e-6 * max(float(np.linalg.norm(c)) for c in comps) + 1e-300
    rows = []
    for j, (a, fd) in enumerate(zip(comps, fds)):
        na, nf = float(np.linalg.norm(a)), float(np.linalg.norm(fd))
        rows.append((j, na, nf, float(np.linalg.norm(a - fd)) / max(na, nf, floor)))
    return rows


def cmd_gradcheck(args, out, summary, grad_hook=None):
    if args.config is not None:
        problem, v = load_problem(read_config(args.config), args.lam, args.grid_n)
    else:
        lam = 3.0 if args.lam is None else parse_lambda(args.lam)
        kw = {} if args.grid_n is None else {"N": args.grid_n}
        try:
            problem, v = random_problem(args.manifold, args.seed, lam, **kw)
        except ValueError as err:
            raise InputError(str(err)) from None
    grad_fn = gradient
    if grad_hook is not None:
        def grad_fn(vv, pp):
            return grad_hook(gradient(vv, pp))
    rows = gradient_check(problem, v, grad_fn)
    write_csv(out / "gradcheck.csv", ["variable", "analytic_norm", "fd_norm", "rel_error"],
              rows)
    worst = max(r[3] for r in rows)
    tol = GRADCHECK_TOL[problem.manifold.kind]
    summary.update({"manifold": problem.manifold.name, "lambda": problem.lam,
                    "N": problem.grid.N, "variables": len(rows),
                    "max_rel_error": worst, "tolerance": tol, "passed": worst <= tol})
    return EXIT_OK if worst <= tol else EXIT_GRADCHECK


def cmd_experiment(args, out, summary):
    name = args.name
    if name not in EXPERIMENTS:
        raise InputError(f"experiment: unknown preset {name!r}; available: "
                         + ", ".join(EXPERIMENTS))
    result = run_experiment(name, max_iter=args.max_iter, eps=args.eps,
                            grad_eps=args.grad_eps)
    runs = []
    for run in result.runs:
        sub = out / run.label if len(result.runs) > 1 else out
        sub.mkdir(parents=True, exist_ok=True)
        write_curve(sub, run.curve, run.problem.grid)
        write_trace(sub, run.trace)
        info = run_summary(run.problem, pack(run.curve, run.problem.mode), run.trace)
        info["label"] = run.label
        if len(result.runs) > 1:
            write_json(sub / "summary.json", dict(info, error=None))
        runs.append(info)
    rows = [c.row() for c in result.checks]
    write_json(out / "report.json", {"experiment": name, "checks": rows,
                                     "passed": result.passed})
    write_csv(out / "report.csv", ["check", "achieved", "reference", "tolerance", "kind",
                                   "passed"],
              ([r["check"], r["achieved"], "" if r["reference"] is None else r["reference"],
                "" if r["tolerance"] is None else r["tolerance"], r["kind"],
                "" if r["passed"] is None else str(r["passed"]).lower()] for r in rows))
    summary.update({"experiment": name, "runs": runs, "checks_passed": result.passed})
    if len(runs) == 1:
        summary.update({k: v for k, v in runs[0].items() if k != "label"})
    return EXIT_OK


# -- entry point ---------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="bezierfit",
        description="Fit C1 composite Bezier curves to manifold-valued data.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="problem JSON file")
    common.add_argument("--output", default="out", help="output directory")
    common.add_argument("--lambda", dest="lam", default=None,
                        help="data weight, a number or 'inf'")
    common.add_argument("--grid-n", type=int, default=None,
                        help="number of grid intervals")
    common.add_argument("--max-iter", type=int, default=None)
    common.add_argument("--eps", type=float, default=None,
                        help="stop when the summed displacement falls below this")
    common.add_argument("--grad-eps", type=float, default=None,
                        help="stop when the gradient norm falls below this")
    common.add_argument("--seed", type=int, default=0,
                        help="seed for randomized problems")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("fit", parents=[common], help="minimize the fitting functional")
    sub.add_parser("interpolate", parents=[common], help="interpolate the data points")
    sub.add_parser("eval", parents=[common], help="sample a curve without optimizing")
    gc = sub.add_parser("gradcheck", parents=[common],
                        help="compare the gradient with finite differences")
    gc.add_argument("--manifold", default="Sphere(2)",
                    help="manifold of the random problem used without --config")
    ex = sub.add_parser("experiment", parents=[common], help="run a reference preset")
    ex.add_argument("name", help="one of: " + ", ".join(EXPERIMENTS))
    return parser


def main(argv=None, grad_hook=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.output)
    summary = {"command": args.command, "error": None}
    code = EXIT_INPUT
    try:
        out.mkdir(parents=True, exist_ok=True)
        if args.lam is not None and args.command != "interpolate":
            parse_lambda(args.lam)
        if args.command == "fit":
            code = cmd_fit(args, out, summary)
        elif args.command == "interpolate":
            code = cmd_fit(args, out, summary, interpolate=True)
        elif args.command == "eval":
            code = cmd_eval(args, out, summary)
        elif args.command == "gradcheck":
            code = cmd_gradcheck(args, out, summary, grad_hook)
        else:
            code = cmd_experiment(args, out, summary)
    except InputError as err:
        summary["error"] = str(err)
        code = EXIT_INPUT
    except SolverCutLocusError as err:
        summary["error"] = str(err)
        summary.update({"iteration": err.iteration, "variable_index": err.index})
        code = EXIT_INPUT
    except (CutLocusError, GeometryError, ValueError) as err:
        summary["error"] = str(err)
        code = EXIT_INPUT
    summary["exit_code"] = code
    try:
        write_json(out / "summary.json", summary)
    except OSError as err:
        print(f"error: cannot write summary: {err}", file=sys.stderr)
    if summary["error"]:
        print(f"error: {summary['error']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
