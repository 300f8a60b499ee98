"""``hydrocal`` command line.

Exit codes: 0 ok, 1 domain violation, 2 usage or parse error, 3 solver
failure, 4 infeasible calibration.  ``HYDROCAL_LOG`` sets the log level
(DEBUG, INFO, WARNING, ...).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io
from .calibration import (
    AxisError,
    CalibrationOptions,
    CalibrationProblem,
    InsufficientMeasurementsError,
    ScanAxis,
    multistart_calibrate,
    scan_merit,
)
from .network import NetworkError, min_measurement_sets, sensor_config, validate_network
from .steady_state import ConvergenceError, check_turbulence, sample_measurements, solve_steady_state

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE, EXIT_SOLVER, EXIT_INFEASIBLE = 0, 1, 2, 3, 4

log = logging.getLogger("hydrocal")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(f"{self.prog}: {message}", EXIT_USAGE)


def _load_network(path, sensors_override=None):
    try:
        net, sensors = io.read_network(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_USAGE) from exc
    except (io.FormatError, ValueError) as exc:
        raise CliError(f"{path}: {exc}", EXIT_USAGE) from exc
    problems = validate_network(net)
    if problems:
        raise CliError(f"{path}: invalid network:\n  " + "\n  ".join(problems), EXIT_DOMAIN)
    if sensors_override:
        sensors = tuple(s.strip() for s in sensors_override.split(",") if s.strip())
    return net, sensors


def _sensors(net, ids):
    try:
        return sensor_config(net, ids)
    except NetworkError as exc:
        raise CliError(f"sensor configuration: {exc}", EXIT_USAGE) from exc


def _read(fn, path, *args, **kw):
    try:
        return fn(path, *args, **kw)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_USAGE) from exc
    except ValueError as exc:
        raise CliError(f"{path}: {exc}", EXIT_USAGE) from exc


def cmd_validate(args) -> int:
    try:
        net, _ = io.read_network(args.network)
    except OSError as exc:
        raise CliError(f"cannot read {args.network}: {exc.strerror}", EXIT_USAGE) from exc
    except ValueError as exc:
        raise CliError(f"{args.network}: {exc}", EXIT_USAGE) from exc
    problems = validate_network(net)
    for p in problems:
        print(f"{args.network}: {p}", file=sys.stderr)
    if problems:
        return EXIT_DOMAIN
    print(f"{args.network}: ok ({net.n_j} inner nodes, {net.n_s} sources, {net.n_pipes} pipes)")
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.noise < 0:
        raise CliError("--noise must be non-negative", EXIT_USAGE)
    net, sensor_ids = _load_network(args.network, args.sensors)
    sensors = _sensors(net, sensor_ids)
    loads = _read(io.read_loads, args.loads, net)
    if not loads:
        raise CliError(f"{args.loads}: no loading conditions", EXIT_USAGE)
    try:
        net.roughness
    except NetworkError as exc:
        raise CliError(str(exc), EXIT_DOMAIN) from exc
    solutions = []
    for i, load in enumerate(loads, start=1):
        try:
            sol = solve_steady_state(net, load)
        except ConvergenceError as exc:
            raise CliError(f"load set {i}: {exc}", EXIT_SOLVER) from exc
        solutions.append(sol)
        re = sol.reynolds
        print(f"set {i}: Re min {re.min():.0f} (pipe {net.pipe_ids[int(np.argmin(re))]}), "
              f"max {re.max():.0f}, {sol.iterations} iterations")
        for slow in check_turbulence(sol, net):
            print(f"warning: set {i}, pipe {slow['pipe']}: Re = {slow['reynolds']:.0f} < 4000",
                  file=sys.stderr)
    sets = sample_measurements(solutions, loads, sensors, args.noise, args.seed)
    io.write_json(args.output, io.measurements_to_dict(sets, net, sensors))
    log.info("wrote %d measurement sets to %s", len(sets), args.output)
    return EXIT_OK


def _problem(args):
    net, sensor_ids = _load_network(args.network, args.sensors)
    sensors = _sensors(net, sensor_ids)
    sets = _read(io.read_measurements, args.measurements, net, sensors, args.piezometric)
    try:
        return CalibrationProblem(net, sensors, sets)
    except ValueError as exc:
        raise CliError(f"{args.measurements}: {exc}", EXIT_USAGE) from exc


def cmd_calibrate(args) -> int:
    problem = _problem(args)
    need = min_measurement_sets(problem.n_pipes, problem.sensors.n_p)
    if problem.n_sets < need:
        raise CliError(
            f"{problem.n_sets} measurement sets given; {problem.n_pipes} pipes with "
            f"{problem.sensors.n_p} sensors need at least ceil({problem.n_pipes}/"
            f"{problem.sensors.n_p}) = {need} sets", EXIT_DOMAIN)
    opts = CalibrationOptions(
        seed=args.seed, max_outer=args.max_outer, eps_f=args.eps_f, eps_x=args.eps_x,
        max_iter=args.max_iter, norm=args.norm,
    )
    try:
        result = multistart_calibrate(problem, opts)
    except InsufficientMeasurementsError as exc:  # pragma: no cover - checked above
        raise CliError(str(exc), EXIT_DOMAIN) from exc
    if not np.isfinite(result.merit):
        raise CliError("every Newton launch failed; see the log for details", EXIT_SOLVER)
    io.write_json(args.output, io.result_to_dict(result, problem))
    trace = args.trace or Path(args.output).with_suffix(".trace.csv")
    io.write_trace_csv(trace, result, problem)

    eps, _ = problem.split(result.x)
    print(f"start point: scaled Jacobian rank {result.start_rank} of {problem.n_unknowns}, "
          f"condition {result.start_condition:.3e}")
    print(f"merit ({args.norm}): {result.merit:.4e} m^3/s after {len(result.trace)} launches")
    print("roughness [mm]: " + ", ".join(
        f"{pid}={e * 1e3:.4f}" for pid, e in zip(problem.network.pipe_ids, eps)))
    for s, pid in result.laminar:
        print(f"warning: set {s}, pipe {pid} below Re = 4000 at the result", file=sys.stderr)
    if not result.feasible:
        print("error: best candidate has unmeasured heads outside the physical range",
              file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def _scan_base(args, problem):
    if args.base == "initial":
        return problem.initial_guess()
    if args.base == "truth":
        net = problem.network
        try:
            rough = net.roughness
        except NetworkError as exc:
            raise CliError(f"--base truth needs pipe roughness in the network: {exc}",
                           EXIT_USAGE) from exc
        idx = problem.sensors.unmeasured_idx
        hN = []
        for i, m in enumerate(problem.sets, start=1):
            try:
                hN.append(solve_steady_state(net, m.load).pressure_heads[idx])
            except ConvergenceError as exc:
                raise CliError(f"set {i}: {exc}", EXIT_SOLVER) from exc
        return problem.join(rough, np.array(hN))
    return _read(io.read_result_vector, args.base, problem)


def _grid(text):
    try:
        parts = [int(p) for p in text.lower().split("x")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 41 or 41x61, got {text!r}") from None
    if len(parts) not in (1, 2) or min(parts) < 1:
        raise argparse.ArgumentTypeError(f"grid must look like 41 or 41x61, got {text!r}")
    return (parts[0], parts[-1])


def cmd_scan(args) -> int:
    problem = _problem(args)
    try:
        axis_a = ScanAxis.parse(args.axis_a)
        axis_b = ScanAxis.parse(args.axis_b) if args.axis_b else None
        x_base = _scan_base(args, problem)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            grid = scan_merit(problem, x_base, axis_a, axis_b, args.grid)
    except AxisError as exc:
        raise CliError(f"axis: {exc}", EXIT_USAGE) from exc
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    io.write_scan_csv(args.output, grid)
    i, j = grid.argmin("l1")
    print(f"L1 minimum {grid.values['l1'][i, j]:.4e} at {axis_a.label}={grid.a[i]:.6g}"
          + (f", {axis_b.label}={grid.b[j]:.6g}" if axis_b else ""))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hydrocal", description="Pipe-network steady state and roughness calibration.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check a network file")
    p.add_argument("network")
    p.set_defaults(func=cmd_validate)

    def sensors_opt(p):
        p.add_argument("--sensors", help="comma-separated sensed node ids (overrides the network file)")

    p = sub.add_parser("simulate", help="solve loading conditions and write sensor readings")
    p.add_argument("network")
    p.add_argument("loads")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--noise", type=float, default=0.0, help="std. dev. of Gaussian sensor noise [m]")
    p.add_argument("--seed", type=int, default=0)
    sensors_opt(p)
    p.set_defaults(func=cmd_simulate)

    def problem_opts(p):
        p.add_argument("network")
        p.add_argument("measurements")
        p.add_argument("-o", "--output", required=True)
        p.add_argument("--piezometric", action="store_true",
                       help="sensed heads in the file are piezometric (elevation included)")
        sensors_opt(p)

    p = sub.add_parser("calibrate", help="estimate pipe roughness from measurement sets")
    problem_opts(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-outer", type=int, default=7, help="number of Newton launches")
    p.add_argument("--norm", choices=("l1", "l2", "linf"), default="l1")
    p.add_argument("--eps-f", type=float, default=1e-7)
    p.add_argument("--eps-x", type=float, default=5e-7)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--trace", help="trace CSV path (default: <output>.trace.csv)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("scan", help="tabulate the merit over one or two coordinates")
    problem_opts(p)
    p.add_argument("--axis-a", required=True, help="eps:<pipe>=LO:HI, epsrel:<pipe>=LO:HI or h:<node>@<set>=LO:HI")
    p.add_argument("--axis-b")
    p.add_argument("--grid", type=_grid, default=(41, 41), help="points per axis, e.g. 41 or 41x61")
    p.add_argument("--base", default="truth",
                   help="'truth' (forward-solved), 'initial', or a calibration result JSON")
    p.set_defaults(func=cmd_scan)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("HYDROCAL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
