"""Merit values over a 1-D or 2-D slice of the decision space, for surface plots."""
from __future__ import annotations

import re
import warnings
from dataclasses import dataclass

import numpy as np

from .problem import CalibrationProblem

NORMS = ("l1", "l2", "linf")

_AXIS_RE = re.compile(
    r"^(?P<kind>eps|epsrel|h):(?P<id>[^@=]+)(?:@(?P<set>\d+))?=(?P<lo>[^:]+):(?P<hi>[^:]+)$"
)


class AxisError(ValueError):
    pass


class ScanRangeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ScanAxis:
    """One scanned coordinate.

    ``kind`` is ``eps`` (roughness in m), ``epsrel`` (roughness over diameter)
    or ``h`` (pressure head of an unmeasured node in one set, numbered from 1).
    """

    kind: str
    target: str
    lo: float
    hi: float
    set_no: int | None = None

    @classmethod
    def parse(cls, text: str) -> "ScanAxis":
        """Parse ``eps:<pipe>=LO:HI``, ``epsrel:<pipe>=LO:HI`` or ``h:<node>@<set>=LO:HI``."""
        m = _AXIS_RE.match(text.strip())
        if not m:
            raise AxisError(f"cannot parse axis {text!r}; expected e.g. 'eps:7=0:0.002', "
                            "'epsrel:7=0:0.05' or 'h:5@3=77:78'")
        kind = m["kind"]
        if (kind == "h") != (m["set"] is not None):
            raise AxisError(f"axis {text!r}: a set number '@n' is required for h axes only")
        try:
            lo, hi = float(m["lo"]), float(m["hi"])
        except ValueError as exc:
            raise AxisError(f"axis {text!r}: {exc}") from None
        return cls(kind, m["id"], lo, hi, int(m["set"]) if m["set"] else None)

    @property
    def label(self) -> str:
        if self.kind == "h":
            return f"h_{self.target}@{self.set_no}"
        return f"{self.kind}_{self.target}"

    def column(self, problem: CalibrationProblem) -> int:
        net = problem.network
        if self.kind in ("eps", "epsrel"):
            if self.target not in net.pipe_index:
                raise AxisError(f"unknown pipe {self.target!r}")
            return net.pipe_index[self.target]
        unmeasured = problem.sensors.unmeasured_nodes
        if self.target not in unmeasured:
            raise AxisError(f"node {self.target!r} is not an unmeasured inner node")
        if not 1 <= self.set_no <= problem.n_sets:
            raise AxisError(f"set {self.set_no} out of range 1..{problem.n_sets}")
        return problem.n_pipes + (self.set_no - 1) * problem.n_unmeasured + unmeasured.index(self.target)

    def to_decision(self, problem: CalibrationProblem, values: np.ndarray) -> np.ndarray:
        if self.kind == "epsrel":
            return values * problem.network.diameters[self.column(problem)]
        return values

    def physical_range(self, problem: CalibrationProblem, bounds) -> tuple[float, float]:
        col = self.column(problem)
        if self.kind == "h":
            j = col - problem.n_pipes
            return float(bounds.hN_lower.ravel()[j]), float(bounds.hN_upper.ravel()[j])
        lo, hi = float(bounds.eps_lower[col]), float(bounds.eps_upper[col])
        if self.kind == "epsrel":
            d = problem.network.diameters[col]
            return lo / d, hi / d
        return lo, hi


@dataclass
class MeritGrid:
    axis_a: ScanAxis
    axis_b: ScanAxis | None
    a: np.ndarray
    b: np.ndarray
    values: dict[str, np.ndarray]  # norm -> (len(a), len(b))

    def rows(self):
        for i, av in enumerate(self.a):
            for j, bv in enumerate(self.b):
                yield (float(av), float(bv), *(float(self.values[n][i, j]) for n in NORMS))

    def argmin(self, norm: str = "l1") -> tuple[int, int]:
        return np.unravel_index(int(np.argmin(self.values[norm])), self.values[norm].shape)


def scan_merit(
    problem: CalibrationProblem,
    x_base,
    axis_a: ScanAxis,
    axis_b: ScanAxis | None = None,
    grid: tuple[int, int] | int = 41,
    chunk: int = 20000,
) -> MeritGrid:
    """Evaluate the merit in all three norms on a grid spanned by one or two coordinates.

    All other coordinates stay at ``x_base``.  ``grid`` gives the number of
    points per axis.  Ranges leaving the physical box only trigger a warning.
    """
    x_base = np.asarray(x_base, dtype=float)
    problem.split(x_base)
    na, nb = (grid, grid) if isinstance(grid, int) else grid
    if axis_b is None:
        nb = 1
    if na < 1 or nb < 1:
        raise ValueError("grid needs at least one point per axis")
    a_vals = np.linspace(axis_a.lo, axis_a.hi, na) if na > 1 else np.array([axis_a.lo])
    cols = [axis_a.column(problem)]
    axes = [axis_a]
    if axis_b is not None:
        b_vals = np.linspace(axis_b.lo, axis_b.hi, nb) if nb > 1 else np.array([axis_b.lo])
        cols.append(axis_b.column(problem))
        axes.append(axis_b)
        if cols[0] == cols[1]:
            raise AxisError("both axes address the same coordinate")
    else:
        b_vals = np.array([np.nan])

    bounds = problem.default_bounds()
    for ax in axes:
        lo, hi = ax.physical_range(problem, bounds)
        if min(ax.lo, ax.hi) < lo or max(ax.lo, ax.hi) > hi:
            warnings.warn(f"axis {ax.label} range [{ax.lo}, {ax.hi}] leaves the physical range "
                          f"[{lo:.6g}, {hi:.6g}]", ScanRangeWarning, stacklevel=2)

    A, B = np.meshgrid(a_vals, b_vals, indexing="ij")
    X = np.repeat(x_base[None], A.size, axis=0)
    X[:, cols[0]] = axis_a.to_decision(problem, A.ravel())
    if axis_b is not None:
        X[:, cols[1]] = axis_b.to_decision(problem, B.ravel())

    out = {n: np.empty(A.size) for n in NORMS}
    for start in range(0, A.size, chunk):
        F = np.abs(problem.batch_residual(X[start:start + chunk]))
        sl = slice(start, start + F.shape[0])
        out["l1"][sl] = F.sum(axis=1)
        out["l2"][sl] = np.sqrt((F * F).sum(axis=1))
        out["linf"][sl] = F.max(axis=1)
    return MeritGrid(axis_a, axis_b, a_vals, b_vals, {n: v.reshape(A.shape) for n, v in out.items()})
