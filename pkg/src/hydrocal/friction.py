"""Per-pipe hydraulics: Reynolds number, Colebrook-White, Darcy-Weisbach and
the explicit turbulent flow with its two partial derivatives.

Functions accept scalars or arrays and broadcast like numpy.  Pipe geometry
enters through :class:`PipeHydraulics`, which may itself hold arrays (one
entry per pipe).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .network import FluidProperties, Network, Pipe

TURBULENT_RE = 4000.0

_LN10 = math.log(10.0)


class FlowRegimeError(ValueError):
    """Colebrook-White requested outside the turbulent regime."""


class SingularHeadLossError(ZeroDivisionError):
    """Derivative or log argument requested at zero head loss."""


@dataclass(frozen=True)
class PipeHydraulics:
    """Geometry-derived constants of one pipe (or arrays of pipes)."""

    length: np.ndarray | float
    diameter: np.ndarray | float
    roughness: np.ndarray | float | None
    fluid: FluidProperties

    @property
    def area(self):
        return math.pi * np.square(self.diameter) / 4.0

    @property
    def resistance(self):
        """``k = l / (2 d g Ac^2)`` in s^2/m^5."""
        return self.length / (2.0 * self.diameter * self.fluid.g * np.square(self.area))

    @property
    def viscous_coefficient(self):
        """``2.51 * eta * Ac / (rho * d)``, the second log-argument factor."""
        return 2.51 * self.fluid.eta * self.area / (self.fluid.rho * self.diameter)

    @classmethod
    def from_pipe(cls, pipe: Pipe, fluid: FluidProperties) -> PipeHydraulics:
        return cls(pipe.length, pipe.diameter, pipe.roughness, fluid)

    @classmethod
    def from_network(cls, net: Network) -> PipeHydraulics:
        rough = None
        if all(p.roughness is not None for p in net.pipes):
            rough = net.roughness
        return cls(net.lengths, net.diameters, rough, net.fluid)


def _flat(*arrays):
    b = np.broadcast_arrays(*[np.asarray(a, dtype=float) for a in arrays])
    return b[0].shape, [np.ascontiguousarray(x).ravel() for x in b]


def _unflat(shape, arr):
    arr = arr.reshape(shape)
    return float(arr) if arr.ndim == 0 else arr


def reynolds(Q, pipe: PipeHydraulics):
    fl = pipe.fluid
    return fl.rho * pipe.diameter * np.abs(Q) / (pipe.area * fl.eta)


def colebrook_residual(lam, Re, eps, d):
    """``F_cw(lambda)``; zero at the Colebrook-White friction factor."""
    lam = np.asarray(lam, dtype=float)
    return 1.0 / np.sqrt(lam) + 2.0 / _LN10 * np.log(
        eps / (3.7 * d) + 2.51 / (Re * np.sqrt(lam))
    )


def friction_factor_cw(Re, eps, d, *, start=10.0, tol=1e-14, max_iter=100):
    """Darcy friction factor from Colebrook-White by fixed-point iteration on ``1/sqrt(lambda)``.

    Raises :class:`FlowRegimeError` for ``Re < 4000`` and ``ArithmeticError``
    if the iteration cap is hit.
    """
    shape, (re, e, dd) = _flat(Re, eps, d)
    if np.any(re < TURBULENT_RE):
        raise FlowRegimeError(
            f"Colebrook-White needs Re >= {TURBULENT_RE:g}, got min Re = {re.min():.6g}"
        )
    if np.any(e < 0):
        raise ValueError("roughness must be non-negative")
    w = kernels.colebrook_w(re, e / dd, float(start), float(tol), int(max_iter))
    return _unflat(shape, 1.0 / np.square(w))


def headloss_dw(Q, lam, k):
    """Darcy-Weisbach head loss ``lambda * k * |Q| * Q`` in m."""
    return lam * k * np.abs(Q) * Q


def turbulent_flow(eps, dh, pipe: PipeHydraulics):
    """Explicit turbulent flow for head loss ``dh``; odd in ``dh``, uses ``|eps|``."""
    shape, (e, h, k, d, c) = _flat(
        eps, dh, pipe.resistance, pipe.diameter, pipe.viscous_coefficient
    )
    return _unflat(shape, kernels.turbulent_flow(e, h, k, d, c, 0.0))


def log_argument(eps, dh, pipe: PipeHydraulics):
    """Argument of the logarithm in :func:`turbulent_flow`."""
    dh = np.asarray(dh, dtype=float)
    if np.any(dh == 0):
        raise SingularHeadLossError("log argument is singular at zero head loss")
    out = np.abs(eps) / (3.7 * pipe.diameter) + pipe.viscous_coefficient * np.sqrt(
        pipe.resistance / np.abs(dh)
    )
    return float(out) if np.ndim(out) == 0 else out


def _gradient(eps, dh, pipe):
    dh_arr = np.asarray(dh, dtype=float)
    if np.any(dh_arr == 0):
        raise SingularHeadLossError("flow derivatives are singular at zero head loss")
    shape, (e, h, k, d, c) = _flat(
        eps, dh_arr, pipe.resistance, pipe.diameter, pipe.viscous_coefficient
    )
    _, pe, pd = kernels.flow_and_gradient(e, h, k, d, c, 0.0)
    return _unflat(shape, pe), _unflat(shape, pd)


def d_flow_d_roughness(eps, dh, pipe: PipeHydraulics):
    """``d f_t / d eps``; carries the sign of ``eps`` because ``f_t`` uses ``|eps|``."""
    return _gradient(eps, dh, pipe)[0]


def d_flow_d_headloss(eps, dh, pipe: PipeHydraulics):
    """``d f_t / d dh`` (even in ``dh``)."""
    return _gradient(eps, dh, pipe)[1]


def headloss_from_flow(Q, eps, pipe: PipeHydraulics):
    """Head loss carrying flow ``Q``: Colebrook-White + Darcy-Weisbach.

    Below ``Re = 4000`` the friction factor is frozen at its ``Re = 4000``
    value, which keeps the map continuous, odd and strictly increasing.
    Returns ``(dh, lam)``.
    """
    shape, (q, e, d, k, area) = _flat(Q, eps, pipe.diameter, pipe.resistance, pipe.area)
    fl = pipe.fluid
    re = fl.rho * d * np.abs(q) / (area * fl.eta)
    re_eff = np.maximum(re, TURBULENT_RE)
    w = kernels.colebrook_w(re_eff, np.abs(e) / d, 10.0, 1e-14, 100)
    lam = 1.0 / np.square(w)
    return _unflat(shape, lam * k * np.abs(q) * q), _unflat(shape, lam)
