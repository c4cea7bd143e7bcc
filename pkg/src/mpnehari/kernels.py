"""Generalised power sums ``S(t) = sum_k c_k t**e_k`` and their log-derivatives.

Both the fibering map of a fixed direction and the modular of a scaled field
are sums of this form, so every fibering root search and every Luxemburg
bisection runs through here. A compiled kernel (``_powsum``, Cython) is used
when it was built; otherwise the numpy implementations below are used. Set
``MPNEHARI_KERNEL=python`` to force the fallback.

The compiled loop accumulates sequentially while numpy sums pairwise, so the
two backends agree to rounding, not bitwise. Each backend is deterministic.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["BACKEND", "powsum", "powsum_moments", "py_powsum", "py_powsum_moments"]

_CHUNK = 1 << 22


def py_powsum_moments(coef, expo, t) -> np.ndarray:
    coef = np.ascontiguousarray(coef, dtype=float)
    expo = np.ascontiguousarray(expo, dtype=float)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros((t.size, 3))
    rows = max(1, _CHUNK // max(coef.size, 1))
    for start in range(0, t.size, rows):
        lt = np.log(t[start:start + rows])[:, None]
        w = coef * np.exp(expo * lt)
        we = w * expo
        out[start:start + rows, 0] = w.sum(axis=1)
        out[start:start + rows, 1] = we.sum(axis=1)
        out[start:start + rows, 2] = (we * expo).sum(axis=1)
    return out


def py_powsum(coef, expo, t: float) -> float:
    return float(np.sum(coef * np.exp(expo * np.log(t))))


try:
    if os.environ.get("MPNEHARI_KERNEL", "").lower() == "python":
        raise ImportError("fallback forced")
    from ._powsum import powsum as _c_powsum
    from ._powsum import powsum_moments as _c_powsum_moments
except ImportError:
    BACKEND = "python"
    powsum_moments = py_powsum_moments
    powsum = py_powsum
else:
    BACKEND = "cython"

    def powsum_moments(coef, expo, t) -> np.ndarray:
        return _c_powsum_moments(
            np.ascontiguousarray(coef, dtype=float),
            np.ascontiguousarray(expo, dtype=float),
            np.ascontiguousarray(np.atleast_1d(t), dtype=float),
        )

    def powsum(coef, expo, t: float) -> float:
        return _c_powsum(
            np.ascontiguousarray(coef, dtype=float),
            np.ascontiguousarray(expo, dtype=float),
            float(t),
        )
