"""Compiled vs numpy power-sum kernels.

    python3 benchmarks/bench_kernels.py [--n 33] [--repeat 5]

Times ``powsum_moments`` on the fibering terms of the preset problem
(compressed by distinct exponent, and uncompressed node by node), then a
full Nehari projection with each backend.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from mpnehari import kernels
from mpnehari.energy import Functional
from mpnehari.presets import preset_exponent_set


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def projection_time(n, backend, repeat):
    code = (
        "import timeit, numpy as np\n"
        "from mpnehari.presets import preset_exponent_set\n"
        "from mpnehari.energy import Functional\n"
        "from mpnehari.nehari import project_to_nehari\n"
        f"es = preset_exponent_set({n}); g = es.grid\n"
        "u = g.restrict(np.clip(1 - g.radius ** 2, 0, None))\n"
        "f = Functional(es, 1e-4)\n"
        "project_to_nehari(u, es, 1e-4, functional=f)\n"
        f"print(min(timeit.repeat(lambda: project_to_nehari(u, es, 1e-4, functional=f), number=1, repeat={repeat})))\n"
    )
    env = dict(os.environ, MPNEHARI_KERNEL=backend)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=33)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    if kernels.BACKEND != "cython":
        sys.exit("compiled kernel not available; build it with `pip install -e . --no-build-isolation`")

    es = preset_exponent_set(args.n)
    g = es.grid
    u = g.restrict(np.clip(1 - g.radius ** 2, 0, None))
    terms = Functional(es, 1e-4).fiber_terms(u)
    coef, expo = terms.coef, terms.expo
    ts = np.geomspace(1e-6, 1e6, 256)

    # uncompressed: one term per node and group, as before merging exponents
    rng = np.random.default_rng(0)
    big = 108_000
    bc = rng.normal(size=big)
    be = rng.uniform(0.1, 6.0, big)

    print(f"backend available: {kernels.BACKEND}, grid n={args.n}, distinct terms K={coef.size}")
    print(f"{'case':<34}{'cython [ms]':>12}{'numpy [ms]':>12}{'speed-up':>10}")
    cases = [
        ("256 t, compressed terms", coef, expo, ts),
        ("1 t, compressed terms", coef, expo, ts[:1]),
        (f"256 t, {big} node terms", bc, be, ts),
    ]
    for name, c, e, t in cases:
        fast = best(lambda: kernels.powsum_moments(c, e, t), args.repeat)
        slow = best(lambda: kernels.py_powsum_moments(c, e, t), args.repeat)
        print(f"{name:<34}{fast * 1e3:>12.3f}{slow * 1e3:>12.3f}{slow / fast:>10.2f}")

    fast = projection_time(args.n, "cython", args.repeat)
    slow = projection_time(args.n, "python", args.repeat)
    print(f"{'project_to_nehari (bump)':<34}{fast * 1e3:>12.3f}{slow * 1e3:>12.3f}{slow / fast:>10.2f}")


if __name__ == "__main__":
    main()
