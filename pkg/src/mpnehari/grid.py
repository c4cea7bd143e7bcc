"""Uniform Cartesian grids on a bounded domain with Dirichlet-zero boundary.

Fields are plain ``numpy`` arrays shaped ``grid.shape`` (``"ij"`` indexing,
row-major flattening). A field representing a member of the zero-trace
Sobolev space must vanish at every non-interior node; :meth:`Grid.restrict`
enforces that.

Two difference operators are provided. :func:`gradient` is the node-centred
operator (central differences, one-sided next to the boundary) used for
inspection and export. :func:`forward_gradient` is the edge-based operator the
energy is built on: for ``p = 2`` its Dirichlet form is the standard
5-point/7-point Laplacian form and it has no checkerboard null space.

All reductions go through :func:`integrate` / :meth:`Grid.sum`, which use
``numpy``'s pairwise summation over a fixed node order, so results are
bitwise reproducible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exprlang import Expr, evaluate_grid, parse

__all__ = [
    "Grid", "EmptyDomain", "build_grid", "gradient", "forward_gradient",
    "forward_gradient_adjoint", "integrate", "write_field_csv", "read_field_csv",
]


class EmptyDomain(ValueError):
    """The domain predicate leaves no interior node."""


@dataclass(frozen=True, eq=False)
class Grid:
    dim: int
    n: int
    lo: float
    hi: float
    domain_source: str
    h: float
    points: np.ndarray = field(repr=False)       # (*shape, dim)
    radius: np.ndarray = field(repr=False)       # |x| per node
    domain: np.ndarray = field(repr=False)       # predicate value as bool
    interior: np.ndarray = field(repr=False)
    support: np.ndarray = field(repr=False)      # nodes touched by the edge stencil

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    @property
    def n_interior(self) -> int:
        return int(np.count_nonzero(self.interior))

    def axis(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    def restrict(self, u) -> np.ndarray:
        """Return ``u`` with every non-interior node set to zero."""
        u = np.broadcast_to(np.asarray(u, dtype=float), self.shape)
        return np.where(self.interior, u, 0.0)

    def sum(self, f, where=None) -> float:
        mask = self.interior if where is None else where
        return float(np.sum(np.asarray(f, dtype=float)[mask]))

    def evaluate(self, e: Expr | str) -> np.ndarray:
        if isinstance(e, str):
            e = parse(e, self.dim)
        return evaluate_grid(e, self.points)

    def origin_index(self):
        """Index of the node at the origin, or ``None`` if the origin is not a node."""
        idx = np.argwhere(self.radius == 0.0)
        return tuple(idx[0]) if len(idx) else None


def _neighbours_all(mask: np.ndarray) -> np.ndarray:
    """True where the node and all its 2N axis neighbours are True (False at the box edge)."""
    out = mask.copy()
    for ax in range(mask.ndim):
        fwd = np.zeros_like(mask)
        bwd = np.zeros_like(mask)
        sl_hi = [slice(None)] * mask.ndim
        sl_lo = [slice(None)] * mask.ndim
        sl_hi[ax] = slice(0, -1)
        sl_lo[ax] = slice(1, None)
        fwd[tuple(sl_hi)] = mask[tuple(sl_lo)]
        bwd[tuple(sl_lo)] = mask[tuple(sl_hi)]
        out &= fwd & bwd
    return out


def _stencil_support(interior: np.ndarray) -> np.ndarray:
    """Interior nodes plus every node whose forward edge ends at an interior node."""
    out = interior.copy()
    for ax in range(interior.ndim):
        sl_hi = [slice(None)] * interior.ndim
        sl_lo = [slice(None)] * interior.ndim
        sl_hi[ax] = slice(0, -1)
        sl_lo[ax] = slice(1, None)
        out[tuple(sl_hi)] |= interior[tuple(sl_lo)]
    return out


def build_grid(dim: int, n: int, box=(0.0, 1.0), domain_expr: Expr | str | None = None) -> Grid:
    """Build a uniform grid with ``n`` nodes per axis on ``[lo, hi]^dim``.

    ``domain_expr`` is an indicator expression (for instance
    ``"chi_ball(0,0,0,1)"``); ``None`` means the whole box. A node is interior
    when the indicator is nonzero there and at all 2N axis neighbours.
    """
    if dim not in (1, 2, 3):
        raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
    if n < 3:
        raise ValueError(f"need at least 3 nodes per axis, got {n}")
    lo, hi = float(box[0]), float(box[1])
    if not hi > lo:
        raise ValueError(f"degenerate box [{lo}, {hi}]")
    axis = np.linspace(lo, hi, n)
    points = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1)
    radius = np.sqrt(np.sum(points * points, axis=-1))
    if domain_expr is None:
        source = ""
        domain = np.ones((n,) * dim, dtype=bool)
    else:
        if isinstance(domain_expr, str):
            source = domain_expr
            domain_expr = parse(domain_expr, dim)
        else:
            from .exprlang import to_source
            source = to_source(domain_expr)
        domain = evaluate_grid(domain_expr, points) != 0.0
    interior = _neighbours_all(domain)
    if not interior.any():
        raise EmptyDomain(f"no interior node for domain {source or 'box'!r} at n={n}")
    return Grid(
        dim=dim, n=n, lo=lo, hi=hi, domain_source=source, h=(hi - lo) / (n - 1),
        points=points, radius=radius, domain=domain, interior=interior,
        support=_stencil_support(interior),
    )


def _shift(u: np.ndarray, ax: int, step: int) -> np.ndarray:
    """``u`` shifted so that out[i] = u[i + step] along ``ax``, zero-padded."""
    out = np.zeros_like(u)
    src = [slice(None)] * u.ndim
    dst = [slice(None)] * u.ndim
    if step > 0:
        src[ax] = slice(step, None)
        dst[ax] = slice(0, -step)
    else:
        src[ax] = slice(0, step)
        dst[ax] = slice(-step, None)
    out[tuple(dst)] = u[tuple(src)]
    return out


def gradient(grid: Grid, u, masked: bool = True) -> np.ndarray:
    """Node-centred gradient, shape ``(dim, *grid.shape)``.

    Central differences where both axis neighbours are interior; next to a
    non-interior neighbour, the one-sided difference across that edge (which
    sees the boundary value). With ``masked=False`` every node with two
    in-box neighbours uses central differences and nothing is zeroed, which is
    how smooth test functions are differentiated.
    """
    u = np.asarray(u, dtype=float)
    h = grid.h
    g = np.zeros((grid.dim,) + grid.shape)
    for ax in range(grid.dim):
        up, dn = _shift(u, ax, 1), _shift(u, ax, -1)
        central = (up - dn) / (2 * h)
        if not masked:
            g[ax] = central
            continue
        inner_up = _shift(grid.interior, ax, 1)
        inner_dn = _shift(grid.interior, ax, -1)
        fwd = (up - u) / h
        bwd = (u - dn) / h
        comp = np.where(inner_up & ~inner_dn, bwd, central)
        comp = np.where(~inner_up & inner_dn, fwd, comp)
        g[ax] = np.where(grid.interior, comp, 0.0)
    return g


def forward_gradient(grid: Grid, u) -> np.ndarray:
    """Forward differences ``(u[i+e_k] - u[i]) / h`` with zero padding past the box."""
    u = np.asarray(u, dtype=float)
    return np.stack([(_shift(u, ax, 1) - u) / grid.h for ax in range(grid.dim)])


def forward_gradient_adjoint(grid: Grid, flux: np.ndarray) -> np.ndarray:
    """Transpose of :func:`forward_gradient` (node-sum inner product)."""
    out = np.zeros(grid.shape)
    for ax in range(grid.dim):
        out += (_shift(flux[ax], ax, -1) - flux[ax]) / grid.h
    return out


def integrate(grid: Grid, f, where=None) -> float:
    """Node quadrature: sum over ``where`` (default interior nodes) times ``h**dim``."""
    return grid.sum(f, where) * grid.cell_volume


def write_field_csv(grid: Grid, values, path) -> None:
    """Write ``i1..iN, x1..xN, value`` rows in row-major node order."""
    values = np.asarray(values, dtype=float)
    header = [f"i{k + 1}" for k in range(grid.dim)] + [f"x{k + 1}" for k in range(grid.dim)] + ["value"]
    idx = np.indices(grid.shape).reshape(grid.dim, -1).T
    pts = grid.points.reshape(-1, grid.dim)
    vals = values.reshape(-1)
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, x, v in zip(idx, pts, vals):
            w.writerow([*map(int, i), *(repr(float(c)) for c in x), repr(float(v))])


def read_field_csv(grid: Grid, path) -> np.ndarray:
    out = np.zeros(grid.shape)
    with open(Path(path), newline="") as fh:
        rows = csv.reader(fh)
        next(rows)
        for row in rows:
            idx = tuple(int(v) for v in row[: grid.dim])
            out[idx] = float(row[-1])
    return out
