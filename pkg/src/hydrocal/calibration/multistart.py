"""Repeated Newton launches with random re-seeding of out-of-range roughness."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .newton import DegenerateJacobianError, NewtonResult, NonFiniteMeritError, merit, newton_solve
from ..network import min_measurement_sets
from .problem import CalibrationProblem, PhysicalBounds

log = logging.getLogger(__name__)


class InsufficientMeasurementsError(ValueError):
    pass


@dataclass(frozen=True)
class CalibrationOptions:
    seed: int = 0
    max_outer: int = 7  # total number of Newton launches, the first included
    eps_f: float = 1e-7
    eps_x: float = 5e-7
    max_iter: int = 1000
    outer_eps_f: float = 1e-8
    outer_eps_x: float = 1e-6
    scale: bool = True
    norm: str = "l1"


@dataclass
class OuterIteration:
    index: int
    x0: np.ndarray
    x: np.ndarray
    merit: float
    newton_iterations: int
    buffered: bool
    status: str = "ok"
    redrawn: list[int] = field(default_factory=list)
    laminar: list[tuple[int, str]] = field(default_factory=list)
    newton: NewtonResult | None = field(default=None, repr=False)


@dataclass
class CalibrationResult:
    x: np.ndarray
    merit: float
    residual: np.ndarray
    trace: list[OuterIteration]
    feasible: bool
    converged: bool
    seed: int
    laminar: list[tuple[int, str]] = field(default_factory=list)
    start_rank: int | None = None
    start_condition: float | None = None

    @property
    def buffered_merits(self) -> list[float]:
        return [t.merit for t in self.trace if t.buffered]


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 stream; identical draws on every platform for a given seed."""
    return np.random.Generator(np.random.PCG64(seed))


def _launch(problem, x0, opts, scaling, index) -> OuterIteration:
    try:
        res = newton_solve(
            problem.residual_and_jacobian, x0, n_roughness=problem.n_pipes, scaling=scaling,
            eps_f=opts.eps_f, eps_x=opts.eps_x, max_iter=opts.max_iter, norm=opts.norm,
        )
    except (DegenerateJacobianError, NonFiniteMeritError) as exc:
        log.warning("launch %d aborted: %s", index, exc)
        return OuterIteration(index, np.array(x0), np.array(x0), float("inf"), 0, False,
                              status=f"aborted: {exc}")
    return OuterIteration(index, np.array(x0), res.x, res.merit, res.iterations, False,
                          status="ok" if res.converged else "max_iter", newton=res)


def multistart_calibrate(
    problem: CalibrationProblem,
    opts: CalibrationOptions | None = None,
    x0=None,
    bounds: PhysicalBounds | None = None,
) -> CalibrationResult:
    """Multistart driver around :func:`newton_solve`.

    The best launch so far ``x+`` is replaced only by a launch with
    ``v <= v+`` whose unmeasured heads lie inside ``bounds``.  Each new start
    takes ``x+`` and redraws, uniformly in ``[0, 0.05 d_i]``, exactly the
    roughness components above ``0.05 d_i``.
    """
    opts = opts or CalibrationOptions()
    if not problem.has_enough_sets:
        need = min_measurement_sets(problem.n_pipes, problem.sensors.n_p)
        raise InsufficientMeasurementsError(
            f"{problem.n_sets} measurement sets given, at least ceil(n_pipes / n_sensors) = "
            f"{need} are needed"
        )
    bounds = bounds or problem.default_bounds()
    scaling = problem.column_scaling(bounds) if opts.scale else None
    x0 = problem.initial_guess() if x0 is None else np.asarray(x0, dtype=float)
    rank, cond = problem.conditioning(
        x0, scaling if scaling is not None else np.ones(problem.n_unknowns))
    log.info("start point: scaled Jacobian %dx%d, rank %d, condition %.3e",
             problem.n_equations, problem.n_unknowns, rank, cond)
    rng = make_rng(opts.seed)
    nl = problem.n_pipes
    eps_max = bounds.eps_upper

    first = _launch(problem, x0, opts, scaling, 1)
    if not np.isfinite(first.merit):
        first.x = x0.copy()
        first.merit = merit(problem.residual(x0), opts.norm)
    first.buffered = True
    trace = [first]
    x_best, v_best = first.x.copy(), first.merit
    x_last = x0.copy()

    while (v_best > opts.outer_eps_f or np.linalg.norm(x_last - x_best) > opts.outer_eps_x) \
            and len(trace) < opts.max_outer:
        start = x_best.copy()
        redraw = np.nonzero(start[:nl] > eps_max)[0]
        start[redraw] = rng.uniform(0.0, eps_max[redraw])
        it = _launch(problem, start, opts, scaling, len(trace) + 1)
        it.redrawn = [int(i) for i in redraw]
        x_last = it.x
        _, hN = problem.split(it.x)
        if it.merit <= v_best and bounds.heads_within(hN):
            x_best, v_best = it.x.copy(), it.merit
            it.buffered = True
        trace.append(it)

    for t in trace:
        t.laminar = problem.laminar_pipes(t.x) if np.isfinite(t.merit) else []
    _, hN_best = problem.split(x_best)
    feasible = bounds.heads_within(hN_best)
    return CalibrationResult(
        x=x_best,
        merit=v_best,
        residual=problem.residual(x_best),
        trace=trace,
        feasible=feasible,
        converged=v_best <= opts.outer_eps_f,
        seed=opts.seed,
        laminar=problem.laminar_pipes(x_best),
        start_rank=rank,
        start_condition=cond,
    )
