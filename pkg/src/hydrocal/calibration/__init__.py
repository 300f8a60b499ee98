"""Roughness calibration from sensed pressure heads over several loading conditions."""
from ..steady_state import MeasurementSet
from .multistart import (
    CalibrationOptions,
    CalibrationResult,
    InsufficientMeasurementsError,
    OuterIteration,
    make_rng,
    multistart_calibrate,
)
from .newton import (
    COND_LIMIT,
    DegenerateJacobianError,
    NewtonResult,
    NonFiniteMeritError,
    StepRecord,
    cubic_step,
    descent_rate,
    merit,
    newton_direction,
    newton_solve,
    quadratic_step,
)
from .problem import (
    ZERO_HEADLOSS,
    CalibrationProblem,
    PhysicalBounds,
    SingularJacobianError,
    true_decision_vector,
)
from .scan import AxisError, MeritGrid, ScanAxis, ScanRangeWarning, scan_merit


def head_losses(x, problem: CalibrationProblem, set_no: int | None = None):
    """Pipe head losses; all sets as rows, or the row of ``set_no`` (from 1)."""
    dh = problem.head_losses(x)
    return dh if set_no is None else dh[set_no - 1]


def residual(x, problem: CalibrationProblem):
    return problem.residual(x)


def jacobian(x, problem: CalibrationProblem):
    return problem.jacobian(x)


def initial_guess(problem: CalibrationProblem):
    return problem.initial_guess()


def default_bounds(problem: CalibrationProblem) -> PhysicalBounds:
    return problem.default_bounds()


__all__ = [
    "COND_LIMIT", "ZERO_HEADLOSS",
    "AxisError", "CalibrationOptions", "CalibrationProblem", "CalibrationResult",
    "DegenerateJacobianError", "InsufficientMeasurementsError", "MeasurementSet", "MeritGrid",
    "NewtonResult", "NonFiniteMeritError", "OuterIteration", "PhysicalBounds", "ScanAxis",
    "ScanRangeWarning", "SingularJacobianError", "StepRecord",
    "cubic_step", "default_bounds", "descent_rate", "head_losses", "initial_guess", "jacobian",
    "make_rng", "merit", "multistart_calibrate", "newton_direction", "newton_solve",
    "quadratic_step", "residual", "scan_merit", "true_decision_vector",
]
