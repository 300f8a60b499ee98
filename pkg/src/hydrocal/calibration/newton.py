"""Gauss-Newton with left-pseudoinverse direction and L1-merit backtracking."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SUFFICIENT_DECREASE = 1e-4
COND_LIMIT = 1e12


class DegenerateJacobianError(np.linalg.LinAlgError):
    """Scaled Jacobian is numerically rank deficient."""

    def __init__(self, message, condition=None, directions=None):
        super().__init__(message)
        self.condition = condition
        self.directions = directions


class NonFiniteMeritError(ArithmeticError):
    pass


def merit(f, norm: str = "l1") -> float:
    f = np.asarray(f, dtype=float)
    norm = norm.lower()
    if norm == "l1":
        return float(np.sum(np.abs(f)))
    if norm == "l2":
        scale = np.max(np.abs(f)) if f.size else 0.0
        if scale == 0.0 or not np.isfinite(scale):
            return float(scale)
        return float(scale * np.sqrt(np.sum((f / scale) ** 2)))
    if norm in ("linf", "inf"):
        return float(np.max(np.abs(f))) if f.size else 0.0
    raise ValueError(f"unknown norm {norm!r} (expected l1, l2 or linf)")


def descent_rate(f) -> float:
    """Slope of the L1 merit along the Newton direction, ``-sign(f)^T f``."""
    f = np.asarray(f, dtype=float)
    return float(-np.sign(f) @ f)


def newton_direction(J, f, scaling=None, cond_limit: float = COND_LIMIT) -> np.ndarray:
    """Least-squares step ``dx`` minimising ``||J dx + f||_2`` with column scaling.

    Solved through an SVD of ``J D``; raises :class:`DegenerateJacobianError`
    when its condition number exceeds ``cond_limit``.
    """
    J = np.asarray(J, dtype=float)
    f = np.asarray(f, dtype=float)
    D = np.ones(J.shape[1]) if scaling is None else np.asarray(scaling, dtype=float)
    if not np.any(f):
        return np.zeros(J.shape[1])
    U, s, Vt = np.linalg.svd(J * D, full_matrices=False)
    if s.size < J.shape[1] or s[-1] <= 0 or s[0] / s[-1] > cond_limit:
        cond = math.inf if s.size < J.shape[1] or s[-1] <= 0 else float(s[0] / s[-1])
        weakest = Vt[-1] * D if s.size == J.shape[1] else None
        raise DegenerateJacobianError(
            f"Jacobian is rank deficient (condition {cond:.3e}); weakest direction "
            f"dominated by unknown {int(np.argmax(np.abs(Vt[-1])))}",
            condition=cond, directions=weakest,
        )
    return -D * (Vt.T @ ((U.T @ f) / s))


def quadratic_step(v_prev: float, v_trial: float, slope: float) -> float:
    """Minimiser of the parabola through ``g(0)``, ``g'(0)`` and ``g(1)``."""
    return -slope / (2.0 * (v_trial - v_prev - slope))


def cubic_step(v_prev, slope, mu1, v1, mu2, v2) -> float:
    """Minimiser of the cubic through ``g(0)``, ``g'(0)``, ``g(mu1)``, ``g(mu2)``.

    ``mu1`` is the latest trial, ``mu2`` the one before.
    """
    r1 = v1 - v_prev - mu1 * slope
    r2 = v2 - v_prev - mu2 * slope
    a = (r1 / mu1**2 - r2 / mu2**2) / (mu1 - mu2)
    b = (-mu2 * r1 / mu1**2 + mu1 * r2 / mu2**2) / (mu1 - mu2)
    if a == 0:
        if b == 0:
            return 0.5 * mu1
        return -slope / (2.0 * b)
    disc = b * b - 3.0 * a * slope
    if disc < 0:
        return 0.5 * mu1
    if b <= 0:
        return (-b + math.sqrt(disc)) / (3.0 * a)
    # algebraically identical root, no cancellation for b > 0
    return -slope / (b + math.sqrt(disc))


@dataclass
class StepRecord:
    iteration: int
    mu_old: float
    mu: float
    kind: str  # "quadratic" or "cubic"
    quadratic_value: float | None = None


@dataclass
class NewtonResult:
    x: np.ndarray
    f: np.ndarray
    merit: float
    iterations: int
    converged: bool
    accepted_merits: list[float] = field(default_factory=list)
    backtracks: list[StepRecord] = field(default_factory=list)
    evaluations: int = 0


def newton_solve(
    fun,
    x0,
    *,
    n_roughness: int = 0,
    scaling=None,
    eps_f: float = 1e-7,
    eps_x: float = 5e-7,
    max_iter: int = 1000,
    cond_limit: float = COND_LIMIT,
    norm: str = "l1",
) -> NewtonResult:
    """Modified Newton-Raphson with step-length control on the L1 merit.

    ``fun(x)`` returns ``(f, J)``.  The first ``n_roughness`` components are
    replaced by their absolute value after every step.  The loop runs while
    ``|v_k - v_{k-1}| > eps_f`` or ``||mu dx||_2 > eps_x``, for at most
    ``max_iter`` Newton directions.

    ``norm`` selects the merit.  For L1 the slope is :func:`descent_rate`;
    for the other norms it is ``-v``, the directional derivative along an
    exact Newton step.
    """
    if eps_f <= 0 or eps_x <= 0 or max_iter <= 0:
        raise ValueError("eps_f, eps_x and max_iter must be positive")
    x = np.array(x0, dtype=float)
    f, J = fun(x)
    nevals = 1
    v = merit(f, norm)
    if not math.isfinite(v):
        raise NonFiniteMeritError(f"merit is not finite at the start value ({v})")
    slope = descent_rate if norm == "l1" else (lambda g: -merit(g, norm))
    v_prev, x_prev, f_prev = v, x.copy(), f.copy()
    dx = newton_direction(J, f, scaling, cond_limit)
    mu = 1.0
    it = 0
    s = slope(f)
    mu2 = v2 = None
    accepted = [v]
    backtracks: list[StepRecord] = []
    last_accepted = False

    while (abs(v - v_prev) > eps_f or np.linalg.norm(mu * dx) > eps_x) and it < max_iter:
        if mu == 1.0:
            dx = newton_direction(J, f, scaling, cond_limit)
            s = slope(f)
            v = merit(f, norm)
            f_prev, x_prev, v_prev = f, x, v
            it += 1
        x = x_prev + mu * dx
        if n_roughness:
            x[:n_roughness] = np.abs(x[:n_roughness])
        f, J = fun(x)
        nevals += 1
        v = merit(f, norm)
        if not math.isfinite(v):
            raise NonFiniteMeritError(f"merit became {v} at Newton iteration {it} (mu={mu:g})")
        mu_old = mu
        if v > v_prev + SUFFICIENT_DECREASE * mu * s:
            last_accepted = False
            if mu == 1.0:
                mu = quadratic_step(v_prev, v, s)
                rec = StepRecord(it, mu_old, 0.0, "quadratic", quadratic_value=mu)
            else:
                mu = min(cubic_step(v_prev, s, mu_old, v, mu2, v2), 0.5 * mu_old)
                rec = StepRecord(it, mu_old, 0.0, "cubic")
            mu2, v2 = mu_old, v
            mu = max(mu, 0.1 * mu_old)
            rec.mu = mu
            backtracks.append(rec)
        else:
            last_accepted = True
            accepted.append(v)
            mu = 1.0

    if last_accepted:
        # the latest iterate passed the decrease test, keep it rather than its predecessor
        x_out, f_out = x, f
    else:
        x_out, f_out = x_prev, f_prev
    converged = it < max_iter or (abs(v - v_prev) <= eps_f and np.linalg.norm(mu * dx) <= eps_x)
    return NewtonResult(
        x=np.array(x_out), f=np.array(f_out), merit=merit(f_out, norm), iterations=it,
        converged=bool(converged), accepted_merits=accepted, backtracks=backtracks,
        evaluations=nevals,
    )
