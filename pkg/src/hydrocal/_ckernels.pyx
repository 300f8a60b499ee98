# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-pipe kernels.  Same contract as ``hydrocal._pykernels``."""
import numpy as np

from libc.math cimport fabs, log, sqrt

cdef double TWO_OVER_LN10 = 2.0 / log(10.0)
cdef double ONE_OVER_LN10 = 1.0 / log(10.0)

BACKEND = "cython"


def colebrook_w(const double[::1] re, const double[::1] rel_rough,
                double w0=10.0, double tol=1e-14, int max_iter=100):
    cdef Py_ssize_t i, n = re.shape[0]
    cdef int it
    cdef double w, w_new, a
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] w_out = out
    for i in range(n):
        a = rel_rough[i] / 3.7
        w = w0
        for it in range(max_iter):
            w_new = -TWO_OVER_LN10 * log(a + 2.51 * w / re[i])
            if fabs(w_new - w) <= tol * (1.0 if fabs(w_new) < 1.0 else fabs(w_new)):
                w = w_new
                break
            w = w_new
        else:
            raise ArithmeticError(
                f"Colebrook-White iteration did not converge (Re={re[i]}, eps/d={rel_rough[i]})")
        w_out[i] = w
    return out


def turbulent_flow(const double[::1] eps, const double[::1] dh, const double[::1] k,
                   const double[::1] d, const double[::1] c, double cutoff=0.0):
    cdef Py_ssize_t i, n = dh.shape[0]
    cdef double adh, ell, q
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] q_out = out
    for i in range(n):
        adh = fabs(dh[i])
        if adh < cutoff or adh == 0.0:
            q_out[i] = 0.0
            continue
        ell = fabs(eps[i]) / (3.7 * d[i]) + c[i] * sqrt(k[i] / adh)
        q = -TWO_OVER_LN10 * sqrt(adh / k[i]) * log(ell)
        q_out[i] = q if dh[i] > 0 else -q
    return out


def flow_and_gradient(const double[::1] eps, const double[::1] dh, const double[::1] k,
                      const double[::1] d, const double[::1] c, double cutoff=0.0):
    cdef Py_ssize_t i, n = dh.shape[0]
    cdef double adh, ell, root, lnl, q, sgn, sgn_eps
    q_arr = np.empty(n, dtype=np.float64)
    pe_arr = np.empty(n, dtype=np.float64)
    pd_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] q_out = q_arr
    cdef double[::1] pe_out = pe_arr
    cdef double[::1] pd_out = pd_arr
    for i in range(n):
        adh = fabs(dh[i])
        if adh < cutoff or adh == 0.0:
            q_out[i] = 0.0
            pe_out[i] = 0.0
            pd_out[i] = 0.0
            continue
        sgn = 1.0 if dh[i] > 0 else -1.0
        sgn_eps = -1.0 if eps[i] < 0 else 1.0
        ell = fabs(eps[i]) / (3.7 * d[i]) + c[i] * sqrt(k[i] / adh)
        root = sqrt(adh / k[i])
        lnl = log(ell)
        q_out[i] = -sgn * TWO_OVER_LN10 * root * lnl
        pe_out[i] = -sgn_eps * sgn * TWO_OVER_LN10 * root / (3.7 * d[i] * ell)
        pd_out[i] = -ONE_OVER_LN10 * (lnl / sqrt(k[i] * adh) - c[i] / (adh * ell))
    return q_arr, pe_arr, pd_arr
