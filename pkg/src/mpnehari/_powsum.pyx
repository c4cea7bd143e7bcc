# Compiled power-sum kernels; see kernels.py for the pure-numpy twins.
from libc.math cimport exp, log

import numpy as np


def powsum_moments(const double[::1] coef, const double[::1] expo, const double[::1] t):
    """Rows ``(sum c t^e, sum c e t^e, sum c e^2 t^e)`` for each ``t``."""
    cdef Py_ssize_t nt = t.shape[0], nk = coef.shape[0], i, k
    cdef double lt, w, e, s0, s1, s2
    out = np.zeros((nt, 3))
    cdef double[:, ::1] o = out
    for i in range(nt):
        lt = log(t[i])
        s0 = 0.0
        s1 = 0.0
        s2 = 0.0
        for k in range(nk):
            e = expo[k]
            w = coef[k] * exp(e * lt)
            s0 += w
            s1 += w * e
            s2 += w * e * e
        o[i, 0] = s0
        o[i, 1] = s1
        o[i, 2] = s2
    return out


def powsum(const double[::1] coef, const double[::1] expo, double t):
    """``sum c t^e`` for a single positive ``t``."""
    cdef Py_ssize_t nk = coef.shape[0], k
    cdef double lt = log(t), s = 0.0
    for k in range(nk):
        s += coef[k] * exp(expo[k] * lt)
    return s
