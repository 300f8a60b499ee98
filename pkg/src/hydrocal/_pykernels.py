"""Pure numpy per-pipe kernels, used when the compiled extension is unavailable.

Every function takes flat float64 arrays of equal length and works
elementwise.  ``c`` is the viscous coefficient ``2.51 * eta * Ac / (rho * d)``.
Head losses with ``|dh| < cutoff`` (or exactly zero) give zero flow and zero
derivatives.
"""
import math

import numpy as np

BACKEND = "numpy"

_TWO_OVER_LN10 = 2.0 / math.log(10.0)
_ONE_OVER_LN10 = 1.0 / math.log(10.0)


def colebrook_w(re, rel_rough, w0=10.0, tol=1e-14, max_iter=100):
    """Solve ``w = -2/ln10 * ln(eps/(3.7 d) + 2.51 w / Re)`` for ``w = 1/sqrt(lambda)``."""
    re = np.asarray(re, dtype=float)
    a = np.asarray(rel_rough, dtype=float) / 3.7
    w = np.full(re.shape, float(w0))
    done = np.zeros(re.shape, dtype=bool)
    for _ in range(max_iter):
        w_new = -_TWO_OVER_LN10 * np.log(a + 2.51 * w / re)
        step_ok = np.abs(w_new - w) <= tol * np.maximum(np.abs(w_new), 1.0)
        w = np.where(done, w, w_new)
        done |= step_ok
        if done.all():
            return w
    bad = int(np.argmin(done))
    raise ArithmeticError(
        f"Colebrook-White iteration did not converge (Re={re[bad]}, eps/d={rel_rough[bad]})"
    )


def _ell(eps, adh, k, d, c):
    with np.errstate(divide="ignore"):
        return np.abs(eps) / (3.7 * d) + c * np.sqrt(k / adh)


def turbulent_flow(eps, dh, k, d, c, cutoff=0.0):
    dh = np.asarray(dh, dtype=float)
    adh = np.abs(dh)
    live = (adh >= cutoff) & (adh > 0)
    safe = np.where(live, adh, 1.0)
    q = -_TWO_OVER_LN10 * np.sqrt(safe / k) * np.log(_ell(eps, safe, k, d, c))
    return np.where(live, np.sign(dh) * q, 0.0)


def flow_and_gradient(eps, dh, k, d, c, cutoff=0.0):
    eps = np.asarray(eps, dtype=float)
    dh = np.asarray(dh, dtype=float)
    adh = np.abs(dh)
    live = (adh >= cutoff) & (adh > 0)
    safe = np.where(live, adh, 1.0)
    sgn = np.sign(dh)
    sgn_eps = np.where(eps < 0, -1.0, 1.0)
    ell = _ell(eps, safe, k, d, c)
    root = np.sqrt(safe / k)
    lnl = np.log(ell)
    q = -sgn * _TWO_OVER_LN10 * root * lnl
    p_eps = -sgn_eps * sgn * _TWO_OVER_LN10 * root / (3.7 * d * ell)
    p_dh = -_ONE_OVER_LN10 * (lnl / np.sqrt(k * safe) - c / (safe * ell))
    return np.where(live, q, 0.0), np.where(live, p_eps, 0.0), np.where(live, p_dh, 0.0)
