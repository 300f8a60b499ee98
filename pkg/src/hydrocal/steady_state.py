"""Forward steady-state solver and synthetic measurement generation."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .friction import TURBULENT_RE, PipeHydraulics, d_flow_d_headloss, headloss_from_flow
from .network import Network, NetworkError, SensorConfig

Q_FLOOR = 1e-8  # m^3/s, keeps the head-loss slope positive at zero flow


class ConvergenceError(RuntimeError):
    pass


class TurbulenceWarning(UserWarning):
    """A pipe runs below Re = 4000 where the turbulent flow law is not valid."""


@dataclass(frozen=True)
class LoadingCondition:
    demands: np.ndarray  # per inner node, m^3/s
    source_heads: np.ndarray  # per source, m (elevation included)

    def __post_init__(self):
        object.__setattr__(self, "demands", np.asarray(self.demands, dtype=float))
        object.__setattr__(self, "source_heads", np.asarray(self.source_heads, dtype=float))
        if np.any(self.demands < 0):
            raise ValueError("demands must be non-negative")
        if np.any(self.source_heads < 0):
            raise ValueError("source heads must be non-negative")

    def check(self, net: Network) -> None:
        if self.demands.shape != (net.n_j,):
            raise ValueError(f"expected {net.n_j} demands, got {self.demands.shape[0]}")
        if self.source_heads.shape != (net.n_s,):
            raise ValueError(f"expected {net.n_s} source heads, got {self.source_heads.shape[0]}")


@dataclass(frozen=True)
class SteadyStateSolution:
    flows: np.ndarray
    pressure_heads: np.ndarray
    piezometric_heads: np.ndarray
    head_losses: np.ndarray
    reynolds: np.ndarray
    iterations: int
    residual_norm: float


def _residual(A, At, C_s, z, load, hyd, rough, x):
    n = A.shape[1]
    Q, h = x[:n], x[n:]
    dh, lam = headloss_from_flow(Q, rough, hyd)
    mass = A @ Q - load.demands
    energy = At @ (h + z) - C_s @ load.source_heads + dh
    return np.concatenate([mass, energy]), dh, lam


def _headloss_slope(Q, dh, lam, rough, hyd):
    re = hyd.fluid.rho * hyd.diameter * np.abs(Q) / (hyd.area * hyd.fluid.eta)
    turbulent = re >= TURBULENT_RE
    slope = 2.0 * lam * hyd.resistance * (np.abs(Q) + Q_FLOOR)
    if np.any(turbulent):
        # inverse-function rule: dh/dQ = 1 / (dQ/dh)
        p = d_flow_d_headloss(rough[turbulent], dh[turbulent], _subset(hyd, turbulent))
        slope = slope.copy()
        slope[turbulent] = 1.0 / p
    return slope


def _subset(hyd: PipeHydraulics, mask) -> PipeHydraulics:
    return PipeHydraulics(
        np.asarray(hyd.length)[mask],
        np.asarray(hyd.diameter)[mask],
        None if hyd.roughness is None else np.asarray(hyd.roughness)[mask],
        hyd.fluid,
    )


def solve_steady_state(
    net: Network, load: LoadingCondition, tol: float = 1e-10, max_iter: int = 200
) -> SteadyStateSolution:
    """Damped Newton on mass balance and head-loss equations in ``(flows, heads)``.

    Convergence is declared when the max-norm of the stacked mass (m^3/s) and
    energy (m) residuals is at most ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    load.check(net)
    topo = net.topology
    A = topo.A.astype(float)
    At = A.T
    C_s = topo.C_s.astype(float)
    z = net.elevations
    hyd = PipeHydraulics.from_network(net)
    rough = net.roughness
    n, nj = net.n_pipes, net.n_j

    Q0 = np.linalg.lstsq(A, load.demands, rcond=None)[0]
    dh0, _ = headloss_from_flow(Q0, rough, hyd)
    H0 = np.linalg.lstsq(At, C_s @ load.source_heads - dh0, rcond=None)[0]
    x = np.concatenate([Q0, H0 - z])

    F, dh, lam = _residual(A, At, C_s, z, load, hyd, rough, x)
    norm = float(np.max(np.abs(F)))
    it = 0
    while norm > tol:
        if it >= max_iter:
            raise ConvergenceError(
                f"steady-state solver did not converge in {max_iter} iterations "
                f"(residual {norm:.3e})"
            )
        it += 1
        Q = x[:n]
        J = np.zeros((nj + n, n + nj))
        J[:nj, :n] = A
        J[nj:, :n] = np.diag(_headloss_slope(Q, dh, lam, rough, hyd))
        J[nj:, n:] = At
        step = np.linalg.solve(J, -F)
        t = 1.0
        l2 = float(np.linalg.norm(F))
        for _ in range(40):
            trial = x + t * step
            F_new, dh_new, lam_new = _residual(A, At, C_s, z, load, hyd, rough, trial)
            if np.linalg.norm(F_new) <= (1.0 - 1e-4 * t) * l2:
                break
            t *= 0.5
        else:
            raise ConvergenceError(f"steady-state line search stalled at residual {norm:.3e}")
        x, F, dh, lam = trial, F_new, dh_new, lam_new
        norm = float(np.max(np.abs(F)))

    Q, h = x[:n], x[n:]
    return SteadyStateSolution(
        flows=Q,
        pressure_heads=h,
        piezometric_heads=h + z,
        head_losses=dh,
        reynolds=hyd.fluid.rho * hyd.diameter * np.abs(Q) / (hyd.area * hyd.fluid.eta),
        iterations=it,
        residual_norm=norm,
    )


def check_turbulence(sol: SteadyStateSolution, net: Network) -> list[dict]:
    """Pipes below Re = 4000; an empty list means every pipe is turbulent."""
    return [
        {"pipe": pid, "reynolds": float(re)}
        for pid, re in zip(net.pipe_ids, sol.reynolds)
        if re < TURBULENT_RE
    ]


@dataclass(frozen=True)
class MeasurementSet:
    """One steady loading condition as seen by the sensors (pressure heads)."""

    demands: np.ndarray
    source_heads: np.ndarray
    sensed_heads: np.ndarray

    def __post_init__(self):
        for name in ("demands", "source_heads", "sensed_heads"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    @property
    def load(self) -> LoadingCondition:
        return LoadingCondition(self.demands, self.source_heads)


def sample_measurements(
    solutions, loads, sensors: SensorConfig, noise_std: float = 0.0, seed: int | None = None
) -> list[MeasurementSet]:
    """Sensor readings from solved loads, optionally with Gaussian noise of ``noise_std`` m."""
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    rng = np.random.default_rng(seed)
    idx = sensors.measured_idx
    out = []
    for sol, load in zip(solutions, loads, strict=True):
        y = sol.pressure_heads[idx].copy()
        if noise_std > 0:
            y = y + rng.normal(0.0, noise_std, size=y.shape)
        out.append(MeasurementSet(load.demands.copy(), load.source_heads.copy(), y))
    return out


def generate_measurement_sets(
    net: Network,
    loads,
    sensors: SensorConfig,
    noise_std: float = 0.0,
    seed: int | None = None,
    tol: float = 1e-10,
) -> list[MeasurementSet]:
    """Solve each load and read the sensor pressure heads."""
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    if set(sensors.measured_nodes) - set(net.inner_ids):
        raise NetworkError("sensor configuration does not belong to this network")
    solutions = []
    for i, load in enumerate(loads):
        sol = solve_steady_state(net, load, tol=tol)
        slow = check_turbulence(sol, net)
        if slow:
            pipes = ", ".join(f"{s['pipe']} (Re={s['reynolds']:.0f})" for s in slow)
            warnings.warn(f"load {i + 1}: non-turbulent pipes {pipes}", TurbulenceWarning,
                          stacklevel=2)
        solutions.append(sol)
    return sample_measurements(solutions, loads, sensors, noise_std, seed)
