import subprocess
import sys

import numpy as np
import pytest

from mpnehari import kernels


def sample(k, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=k), rng.uniform(0.1, 6.0, k), np.geomspace(1e-4, 1e3, 37)


def test_fallback_matches_direct_formula():
    c, e, t = sample(50)
    out = kernels.py_powsum_moments(c, e, t)
    w = c[None, :] * t[:, None] ** e[None, :]
    assert np.allclose(out[:, 0], w.sum(1), rtol=1e-12, atol=0)
    assert np.allclose(out[:, 1], (w * e).sum(1), rtol=1e-11, atol=1e-300)
    assert np.allclose(out[:, 2], (w * e * e).sum(1), rtol=1e-11, atol=1e-300)
    assert kernels.py_powsum(c, e, 2.5) == pytest.approx(float(np.sum(c * 2.5 ** e)), rel=1e-12)


def test_moments_are_log_derivatives():
    c, e, _ = sample(20, seed=1)
    c = np.abs(c)
    t, d = 1.7, 1e-5
    f = lambda x: kernels.py_powsum(c, e, x)
    m = kernels.py_powsum_moments(c, e, [t])[0]
    assert m[1] == pytest.approx(t * (f(t * (1 + d)) - f(t * (1 - d))) / (2 * d * t), rel=1e-8)


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernel not built")
@pytest.mark.parametrize("k", [0, 1, 7, 1000])
def test_backends_agree(k):
    c, e, t = sample(k, seed=k)
    fast = kernels.powsum_moments(c, e, t)
    slow = kernels.py_powsum_moments(c, e, t)
    scale = kernels.py_powsum_moments(np.abs(c), e, t)
    assert np.all(np.abs(fast - slow) <= 1e-13 * scale + 1e-300)
    assert kernels.powsum(c, e, 0.3) == pytest.approx(kernels.py_powsum(c, e, 0.3), rel=1e-12, abs=1e-300)


def test_backend_is_known():
    assert kernels.BACKEND in ("cython", "python")


def test_forced_fallback():
    code = "import mpnehari.kernels as k; print(k.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True,
                         env={"MPNEHARI_KERNEL": "python", "PATH": ""})
    assert out.stdout.strip() == "python"
