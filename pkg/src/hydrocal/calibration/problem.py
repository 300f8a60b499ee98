"""Residual, thin Jacobian, bounds and start values of the roughness inverse problem.

The decision vector is ``x = [eps, hN(1), ..., hN(n_m)]`` with ``hN(i)`` the
pressure heads of the unmeasured nodes in set ``i`` (complement order).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .._backend import kernels
from ..friction import TURBULENT_RE, PipeHydraulics
from ..network import Network, SensorConfig, min_measurement_sets
from ..steady_state import MeasurementSet

log = logging.getLogger(__name__)

ZERO_HEADLOSS = 1e-9  # m; below this a pipe is treated as carrying no flow


class SingularJacobianError(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class PhysicalBounds:
    hN_lower: np.ndarray  # (n_m, n_u)
    hN_upper: np.ndarray
    eps_lower: np.ndarray  # (n_pipes,)
    eps_upper: np.ndarray

    def __post_init__(self):
        if np.any(self.hN_lower > self.hN_upper) or np.any(self.eps_lower > self.eps_upper):
            raise ValueError("lower bound above upper bound")

    def heads_within(self, hN, atol=0.0) -> bool:
        hN = np.asarray(hN).reshape(self.hN_lower.shape)
        return bool(np.all(hN >= self.hN_lower - atol) and np.all(hN <= self.hN_upper + atol))


@dataclass
class CalibrationProblem:
    network: Network
    sensors: SensorConfig
    sets: list[MeasurementSet]
    warnings: list[str] = field(default_factory=list, repr=False)

    def __post_init__(self):
        net = self.network
        if not self.sets:
            raise ValueError("at least one measurement set is required")
        for i, m in enumerate(self.sets, start=1):
            if m.demands.shape != (net.n_j,) or m.source_heads.shape != (net.n_s,):
                raise ValueError(f"measurement set {i} does not match the network dimensions")
            if m.sensed_heads.shape != (self.sensors.n_p,):
                raise ValueError(f"measurement set {i} has {m.sensed_heads.size} sensed heads, "
                                 f"expected {self.sensors.n_p}")
        topo = net.topology
        self.A = topo.A.astype(float)
        hyd = PipeHydraulics.from_network(net)
        self.hydraulics = hyd
        self._k = np.asarray(hyd.resistance, dtype=float)
        self._d = net.diameters
        self._c = np.asarray(hyd.viscous_coefficient, dtype=float)
        At = self.A.T
        # dh(i) = base(i) - M @ hN(i)
        self.M = At @ self.sensors.C_h_bar.T.astype(float)
        C_s = topo.C_s.astype(float)
        C_hT = self.sensors.C_h.T.astype(float)
        z = net.elevations
        self.base = np.array([
            C_s @ m.source_heads - At @ (C_hT @ m.sensed_heads) - At @ z for m in self.sets
        ])
        self.demands = np.array([m.demands for m in self.sets])

    @property
    def n_pipes(self) -> int:
        return self.network.n_pipes

    @property
    def n_sets(self) -> int:
        return len(self.sets)

    @property
    def n_unmeasured(self) -> int:
        return self.network.n_j - self.sensors.n_p

    @property
    def n_unknowns(self) -> int:
        return self.n_pipes + self.n_sets * self.n_unmeasured

    @property
    def n_equations(self) -> int:
        return self.n_sets * self.network.n_j

    @property
    def has_enough_sets(self) -> bool:
        return self.n_sets >= min_measurement_sets(self.n_pipes, self.sensors.n_p)

    def split(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_unknowns,):
            raise ValueError(f"decision vector has shape {x.shape}, expected ({self.n_unknowns},)")
        return x[: self.n_pipes], x[self.n_pipes:].reshape(self.n_sets, self.n_unmeasured)

    def join(self, eps, hN) -> np.ndarray:
        return np.concatenate([np.asarray(eps, float).ravel(), np.asarray(hN, float).ravel()])

    def head_losses(self, x) -> np.ndarray:
        """Pipe head losses, one row per measurement set."""
        _, hN = self.split(x)
        return self.base - hN @ self.M.T

    def _note_zero_headloss(self, dh):
        small = np.abs(dh) < ZERO_HEADLOSS
        if np.any(small):
            for i, j in zip(*np.nonzero(small)):
                msg = (f"set {i + 1}, pipe {self.network.pipe_ids[j]}: |dh| < {ZERO_HEADLOSS:g} m, "
                       "flow taken as zero")
                if msg not in self.warnings:
                    self.warnings.append(msg)
                    log.debug(msg)

    def _tile(self, arr):
        return np.tile(arr, self.n_sets)

    def flows(self, x) -> np.ndarray:
        eps, _ = self.split(x)
        dh = self.head_losses(x)
        self._note_zero_headloss(dh)
        q = kernels.turbulent_flow(self._tile(eps), dh.ravel(), self._tile(self._k),
                                   self._tile(self._d), self._tile(self._c), ZERO_HEADLOSS)
        return q.reshape(dh.shape)

    def residual(self, x) -> np.ndarray:
        """Stacked nodal mass-balance errors ``A Q(i) - q(i)`` in m^3/s."""
        return (self.flows(x) @ self.A.T - self.demands).ravel()

    def residual_and_jacobian(self, x) -> tuple[np.ndarray, np.ndarray]:
        eps, _ = self.split(x)
        dh = self.head_losses(x)
        self._note_zero_headloss(dh)
        q, pe, pd = kernels.flow_and_gradient(
            self._tile(eps), dh.ravel(), self._tile(self._k), self._tile(self._d),
            self._tile(self._c), ZERO_HEADLOSS)
        shape = dh.shape
        q, pe, pd = q.reshape(shape), pe.reshape(shape), pd.reshape(shape)
        nj, nl, nu = self.network.n_j, self.n_pipes, self.n_unmeasured
        f = (q @ self.A.T - self.demands).ravel()
        J = np.zeros((self.n_equations, self.n_unknowns))
        for i in range(self.n_sets):
            rows = slice(i * nj, (i + 1) * nj)
            J[rows, :nl] = self.A * pe[i]
            J[rows, nl + i * nu: nl + (i + 1) * nu] = -(self.A * pd[i]) @ self.M
        return f, J

    def jacobian(self, x, strict: bool = False) -> np.ndarray:
        """Thin Jacobian; ``strict`` raises instead of zeroing no-flow pipes."""
        if strict:
            dh = self.head_losses(x)
            bad = np.argwhere(np.abs(dh) < ZERO_HEADLOSS)
            if bad.size:
                i, j = bad[0]
                raise SingularJacobianError(
                    f"head loss of pipe {self.network.pipe_ids[j]} in set {i + 1} is {dh[i, j]:.3g} m; "
                    "flow derivatives are singular there")
        return self.residual_and_jacobian(x)[1]

    def batch_residual(self, X) -> np.ndarray:
        """Residuals for many decision vectors at once, shape ``(n_points, n_equations)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        npts = X.shape[0]
        eps = X[:, : self.n_pipes]
        hN = X[:, self.n_pipes:].reshape(npts, self.n_sets, self.n_unmeasured)
        dh = self.base[None] - hN @ self.M.T  # (npts, n_m, n_pipes)
        e = np.broadcast_to(eps[:, None, :], dh.shape)
        full = lambda a: np.broadcast_to(a, dh.shape).ravel()  # noqa: E731
        q = kernels.turbulent_flow(np.ascontiguousarray(e).ravel(), dh.ravel(), full(self._k),
                                   full(self._d), full(self._c), ZERO_HEADLOSS)
        q = q.reshape(dh.shape)
        return (q @ self.A.T - self.demands[None]).reshape(npts, -1)

    def reynolds(self, x) -> np.ndarray:
        fl = self.network.fluid
        area = np.asarray(self.hydraulics.area)
        return fl.rho * self._d * np.abs(self.flows(x)) / (area * fl.eta)

    def laminar_pipes(self, x) -> list[tuple[int, str]]:
        """(set number, pipe id) of every pipe below Re = 4000 at ``x``."""
        re = self.reynolds(x)
        return [(int(i) + 1, self.network.pipe_ids[j]) for i, j in zip(*np.nonzero(re < TURBULENT_RE))]

    # -- start values and ranges ---------------------------------------------------

    def _known_heads(self, m: MeasurementSet) -> dict[str, float]:
        """Piezometric heads of sensed nodes and sources for one set."""
        net = self.network
        known = dict(zip(net.source_ids, map(float, m.source_heads)))
        for node, y in zip(self.sensors.measured_nodes, m.sensed_heads):
            known[node] = float(y) + float(net.elevations[net.inner_index[node]])
        return known

    def _neighbor_heads(self, m: MeasurementSet, node: str) -> list[float]:
        known = self._known_heads(m)
        vals = [known[n] for n in self.network.neighbors(node) if n in known]
        if not vals:
            msg = f"node {node} has no neighbour with known head; using all known heads"
            if msg not in self.warnings:
                self.warnings.append(msg)
                log.warning(msg)
            vals = list(known.values())
        return vals

    def initial_guess(self) -> np.ndarray:
        """Neighbour-mean heads for unmeasured nodes and 1 % of the diameter as roughness."""
        net = self.network
        hN = np.empty((self.n_sets, self.n_unmeasured))
        for i, m in enumerate(self.sets):
            for j, node in enumerate(self.sensors.unmeasured_nodes):
                z = net.elevations[net.inner_index[node]]
                hN[i, j] = float(np.mean(self._neighbor_heads(m, node))) - z
        return self.join(0.01 * net.diameters, hN)

    def default_bounds(self) -> PhysicalBounds:
        net = self.network
        lo = np.empty((self.n_sets, self.n_unmeasured))
        hi = np.empty_like(lo)
        for i, m in enumerate(self.sets):
            for j, node in enumerate(self.sensors.unmeasured_nodes):
                z = net.elevations[net.inner_index[node]]
                vals = self._neighbor_heads(m, node)
                lo[i, j] = min(vals) - z
                hi[i, j] = max(vals) - z
        return PhysicalBounds(lo, hi, np.zeros(self.n_pipes), 0.05 * net.diameters)

    def column_scaling(self, bounds: PhysicalBounds | None = None) -> np.ndarray:
        """Characteristic size of each unknown: 5 % of d for roughness, bound width (>= 1 m) for heads."""
        bounds = bounds or self.default_bounds()
        width = np.maximum(bounds.hN_upper - bounds.hN_lower, 1.0)
        return np.concatenate([0.05 * self.network.diameters, width.ravel()])

    def conditioning(self, x, scaling=None) -> tuple[int, float]:
        """Numerical rank and condition number of the column-scaled Jacobian at ``x``.

        Purely diagnostic: there is no pass/fail threshold for how independent
        the measurement sets have to be.
        """
        D = self.column_scaling() if scaling is None else np.asarray(scaling, dtype=float)
        s = np.linalg.svd(self.jacobian(x) * D, compute_uv=False)
        rank = int(np.sum(s > s[0] * max(self.n_equations, self.n_unknowns) * np.finfo(float).eps))
        cond = float(s[0] / s[-1]) if s[-1] > 0 and s.size == self.n_unknowns else float("inf")
        return rank, cond


def true_decision_vector(problem: CalibrationProblem, solutions) -> np.ndarray:
    """``x*`` from the network roughness and forward-solved heads of each set."""
    idx = problem.sensors.unmeasured_idx
    hN = np.array([s.pressure_heads[idx] for s in solutions])
    return problem.join(problem.network.roughness, hN)
