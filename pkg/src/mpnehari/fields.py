"""Random smooth Dirichlet-zero test fields."""

from __future__ import annotations

import numpy as np

from .grid import Grid

__all__ = ["domain_envelope", "random_smooth_field", "random_fields"]


def domain_envelope(grid: Grid) -> np.ndarray:
    """Smooth non-negative profile, positive on every interior node and zero elsewhere."""
    x = grid.points
    inner = x[grid.interior]
    centre = inner.mean(axis=0)
    reach = float(np.sqrt(np.sum((inner - centre) ** 2, axis=1)).max()) + grid.h
    rho2 = np.sum((x - centre) ** 2, axis=-1) / reach ** 2
    return grid.restrict(np.clip(1 - rho2, 0, None))


def random_smooth_field(grid: Grid, rng: np.random.Generator, modes: int = 4,
                        positive: bool = False) -> np.ndarray:
    """Envelope times a random low-frequency trigonometric sum, scaled to max |u| = 1."""
    env = domain_envelope(grid)
    x = grid.points
    span = grid.hi - grid.lo
    w = np.zeros(grid.shape)
    for _ in range(modes):
        k = rng.uniform(0.0, 3.0, grid.dim) * np.pi / span
        w += rng.normal() * np.cos(np.sum(k * x, axis=-1) + rng.uniform(0, 2 * np.pi))
    if positive:
        w = np.abs(w) + 0.1 * np.max(np.abs(w))
    u = env * w
    peak = np.max(np.abs(u))
    return u / peak if peak > 0 else env / np.max(env)


def random_fields(grid: Grid, count: int, seed: int = 0, amplitude=(1.0, 1.0),
                  positive: bool = False) -> list:
    """``count`` fields with log-uniform peak amplitudes in ``amplitude``.

    Field ``k`` is drawn from its own stream spawned off ``seed``.
    """
    lo, hi = np.log(amplitude[0]), np.log(amplitude[1])
    out = []
    for child in np.random.SeedSequence(seed).spawn(count):
        rng = np.random.default_rng(child)
        u = random_smooth_field(grid, rng, positive=positive)
        out.append(u * float(np.exp(rng.uniform(lo, hi))))
    return out
