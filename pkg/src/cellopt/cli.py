"""Command-line surface: optimize, serve, eval, oracle, report.

Exit codes are a stable contract: 0 success, 2 validation problem,
3 transport failure, 4 no feasible solution.
"""

from __future__ import annotations

import argparse
import itertools
import os
import sys
from pathlib import Path

import numpy as np

from . import reporting, simulator
from .domain import LayoutVector, constraint_matrix
from .driver import NoSolutionError, best_so_far, run
from .protocol import ENDPOINT_ENV_VAR, RemoteEvaluator, TransportError, serve
from .scenario import Scenario, ScenarioError, load_scenario

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_TRANSPORT = 3
EXIT_NO_SOLUTION = 4

_ORACLE_GRID_LIMIT = 10**7


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _load(path: str) -> Scenario:
    return load_scenario(path)


def cmd_optimize(args) -> int:
    try:
        scenario = _load(args.scenario)
    except ScenarioError as exc:
        return _fail(EXIT_VALIDATION, str(exc))
    opt = scenario.optimizer
    if args.seed is not None:
        import dataclasses

        opt = dataclasses.replace(opt, seed=args.seed)
    space = scenario.search_space()
    entity_map = scenario.entity_map()

    endpoint = args.endpoint or os.environ.get(ENDPOINT_ENV_VAR)
    remote = None
    if endpoint:
        try:
            remote = RemoteEvaluator(endpoint, entity_map)
        except TransportError as exc:
            return _fail(EXIT_TRANSPORT, str(exc))
        evaluator = remote.evaluate
    else:
        evaluator = lambda x: simulator.evaluate(x, scenario.cell)

    try:
        report = run(opt, space, scenario.constraints, evaluator, entity_map)
    finally:
        if remote is not None:
            remote.close()

    if args.out:
        reporting.save_report(report, args.out)
    if not report.complete:
        return _fail(EXIT_TRANSPORT, "run aborted after repeated transport failures")
    try:
        x_opt, objective = best_so_far(report)
    except NoSolutionError as exc:
        return _fail(EXIT_NO_SOLUTION, str(exc))
    print(f"incumbent_s\t{objective!r}")
    print("x_opt\t" + ",".join(repr(v) for v in x_opt.coords))
    return EXIT_OK


def cmd_serve(args) -> int:
    try:
        scenario = _load(args.scenario)
    except ScenarioError as exc:
        return _fail(EXIT_VALIDATION, str(exc))
    endpoint = f"{args.host}:{args.port}"
    print(f"serving {scenario.name} on {endpoint}", file=sys.stderr)
    try:
        serve(endpoint, lambda x: simulator.evaluate(x, scenario.cell), scenario.entity_map())
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        scenario = _load(args.scenario)
    except ScenarioError as exc:
        return _fail(EXIT_VALIDATION, str(exc))
    spec = args.layout
    if spec.startswith("@"):
        try:
            spec = Path(spec[1:]).read_text(encoding="utf-8")
        except OSError as exc:
            return _fail(EXIT_VALIDATION, f"cannot read layout file: {exc}")
    parts = [p for p in spec.replace(",", " ").split() if p]
    if len(parts) != scenario.dim:
        return _fail(
            EXIT_VALIDATION,
            f"layout needs {scenario.dim} coordinates, got {len(parts)}",
        )
    try:
        coords = tuple(float(p) for p in parts)
    except ValueError as exc:
        return _fail(EXIT_VALIDATION, f"bad coordinate: {exc}")
    x = LayoutVector(coords, scenario.entity_map())
    result = simulator.evaluate(x, scenario.cell, with_timeline=args.timeline)
    print(f"objective_s\t{result.objective!r}")
    print(f"feasible\t{'true' if result.feasible else 'false'}")
    print(f"penalized\t{'true' if result.penalized else 'false'}")
    if args.timeline and result.timeline is not None:
        for e in result.timeline.events:
            print(f"{e.agent}\t{e.action}\t{e.start_s!r}\t{e.end_s!r}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    try:
        scenario = _load(args.scenario)
    except ScenarioError as exc:
        return _fail(EXIT_VALIDATION, str(exc))
    n = args.grid
    if n < 2:
        return _fail(EXIT_VALIDATION, "grid must be >= 2 points per dimension")
    free = scenario.free_dims()
    total = n ** len(free)
    if total > _ORACLE_GRID_LIMIT:
        return _fail(
            EXIT_VALIDATION,
            f"grid of {total} points exceeds the {_ORACLE_GRID_LIMIT} limit; "
            "use a coarser grid or fewer optimized entities",
        )
    space = scenario.search_space()
    entity_map = scenario.entity_map()
    lo, hi = space.lows(), space.highs()
    axes = [np.linspace(lo[d], hi[d], n) for d in free]
    base = lo.copy()  # pinned dims sit at their fixed value (lo == hi)

    best_obj = None
    best_coords = None
    evaluated = 0
    chunk: list[np.ndarray] = []

    def flush(chunk_rows):
        nonlocal best_obj, best_coords, evaluated
        if not chunk_rows:
            return
        batch = np.vstack(chunk_rows)
        if scenario.constraints:
            g = constraint_matrix(batch, entity_map, scenario.constraints)
            batch = batch[np.all(g <= 0, axis=1)]
        for row in batch:
            x = LayoutVector(tuple(float(v) for v in row), entity_map)
            res = simulator.evaluate(x, scenario.cell)
            evaluated += 1
            if best_obj is None or res.objective < best_obj:
                best_obj = res.objective
                best_coords = x.coords

    for combo in itertools.product(*axes):
        row = base.copy()
        row[free] = combo
        chunk.append(row)
        if len(chunk) >= 4096:
            flush(chunk)
            chunk = []
    flush(chunk)

    print(f"grid_points\t{total}")
    print(f"evaluations\t{evaluated}")
    if best_obj is None:
        print("no feasible grid point")
        return EXIT_NO_SOLUTION
    print(f"objective_s\t{best_obj!r}")
    print("x_best\t" + ",".join(repr(v) for v in best_coords))
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        report = reporting.load_report(args.report)
    except reporting.ReportError as exc:
        return _fail(EXIT_VALIDATION, str(exc))
    reporting.write_csv(report, args.csv)
    if not args.no_plot:
        plot_path = args.plot or str(Path(args.csv).with_suffix(".png"))
        reporting.render_figure(report, plot_path)
        print(f"wrote {args.csv} and {plot_path}")
    else:
        print(f"wrote {args.csv}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cellopt",
        description="Cycle-time layout optimization for a collaborative robot cell",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="run the optimization loop on a scenario")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--endpoint", default=None,
                   help=f"evaluate over TCP at host:port (default: ${ENDPOINT_ENV_VAR})")
    p.add_argument("--out", default=None, help="write the run report JSON here")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("serve", help="expose the built-in simulator over TCP")
    p.add_argument("scenario")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=4780)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("eval", help="evaluate one layout with the built-in simulator")
    p.add_argument("scenario")
    p.add_argument("--layout", required=True,
                   help="comma/space separated coordinates, or @file")
    p.add_argument("--timeline", action="store_true", help="also print the event timeline")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", help="brute-force the best layout on a feasible grid")
    p.add_argument("scenario")
    p.add_argument("--grid", type=int, default=11, help="points per optimized dimension")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("report", help="export a run report as CSV plus a trend figure")
    p.add_argument("report")
    p.add_argument("--csv", required=True, help="path for the per-iteration CSV")
    p.add_argument("--plot", default=None, help="figure path (default: CSV path with .png)")
    p.add_argument("--no-plot", action="store_true", help="skip the figure")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
