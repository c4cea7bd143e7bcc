import itertools
import math

import numpy as np
import pytest

from mpnehari.grid import (
    EmptyDomain, build_grid, forward_gradient, forward_gradient_adjoint, gradient, integrate,
    read_field_csv, write_field_csv,
)


def test_smallest_grid():
    g = build_grid(1, 3, (0.0, 1.0))
    assert g.n_interior == 1
    assert g.points[g.interior][0, 0] == 0.5


def test_ball_interior_count_matches_enumeration():
    g = build_grid(3, 33, (-1.0, 1.0), "chi_ball(0,0,0,1)")
    axis = [-1 + 2 * k / 32 for k in range(33)]

    def inside(i, j, k):
        if not all(0 <= v < 33 for v in (i, j, k)):
            return False
        return math.sqrt(axis[i] ** 2 + axis[j] ** 2 + axis[k] ** 2) <= 1

    count = 0
    for i, j, k in itertools.product(range(33), repeat=3):
        nbrs = [(i, j, k)] + [(i + d * (a == 0), j + d * (a == 1), k + d * (a == 2))
                             for a in range(3) for d in (-1, 1)]
        count += all(inside(*n) for n in nbrs)
    assert g.n_interior == count
    # the clipped shell is non-empty: some nodes of the ball are boundary nodes
    assert count < int(np.count_nonzero(g.radius < 1))


def test_empty_domain():
    with pytest.raises(EmptyDomain):
        build_grid(2, 5, (0.0, 1.0), "0")


def test_bad_arguments():
    with pytest.raises(ValueError):
        build_grid(2, 2)
    with pytest.raises(ValueError):
        build_grid(2, 5, (1.0, 1.0))
    with pytest.raises(ValueError):
        build_grid(4, 5)


def test_interior_nodes_have_neighbours_in_box():
    g = build_grid(2, 9, (0.0, 1.0))
    idx = np.argwhere(g.interior)
    assert idx.min() >= 1 and idx.max() <= 7


def test_gradient_zero_field():
    g = build_grid(2, 9)
    assert not np.any(gradient(g, np.zeros(g.shape)))


def test_gradient_linear_field_unmasked():
    g = build_grid(3, 17, (-1.0, 1.0))
    grad = gradient(g, g.points[..., 0], masked=False)
    deep = (slice(1, -1),) * 3
    assert np.allclose(grad[0][deep], 1.0, atol=1e-12)
    assert np.allclose(grad[1][deep], 0.0, atol=1e-12)


def test_gradient_square_at_midpoint():
    g = build_grid(1, 101, (0.0, 1.0))
    grad = gradient(g, g.points[..., 0] ** 2, masked=False)
    assert abs(grad[0][50] - 1.0) < 1e-3


def test_masked_gradient_one_sided_and_zero_outside():
    g = build_grid(1, 6, (0.0, 1.0))
    u = g.restrict(np.arange(6.0))
    grad = gradient(g, u)[0]
    h = g.h
    assert grad[0] == 0 and grad[5] == 0
    # node 1 borders the boundary node 0: backward difference sees u[0] = 0
    assert grad[1] == pytest.approx((u[1] - u[0]) / h)
    assert grad[2] == pytest.approx((u[3] - u[1]) / (2 * h))
    assert grad[4] == pytest.approx((u[5] - u[4]) / h)


def test_gradient_constant_region():
    g = build_grid(2, 15)
    u = g.restrict(np.ones(g.shape))
    grad = gradient(g, u)
    deep = (slice(3, -3),) * 2
    assert not np.any(grad[:, deep[0], deep[1]])


def test_forward_gradient_adjoint_identity(unit_square):
    g = unit_square
    rng = np.random.default_rng(0)
    u = rng.normal(size=g.shape)
    flux = rng.normal(size=(2,) + g.shape)
    lhs = np.sum(forward_gradient(g, u) * flux)
    rhs = np.sum(u * forward_gradient_adjoint(g, flux))
    assert lhs == pytest.approx(rhs, rel=1e-12)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_integrate_unit_box(dim):
    n = 21
    g = build_grid(dim, n, (0.0, 1.0))
    # node quadrature over interior nodes only; the box has measure 1
    full = np.ones(g.shape)
    assert abs(integrate(g, full, where=np.ones(g.shape, bool)) - 1) <= 3 * dim * g.h
    assert abs(integrate(g, full) - 1) <= 3 * dim * g.h


def test_integrate_zero_and_linear():
    g = build_grid(1, 101, (0.0, 1.0))
    assert integrate(g, np.zeros(g.shape)) == 0.0
    assert abs(integrate(g, g.points[..., 0]) - 0.5) < 1e-2


def test_integrate_linear_in_integrand(unit_square):
    rng = np.random.default_rng(1)
    f, k = rng.normal(size=(2,) + unit_square.shape)
    a, b = 2.5, -0.75
    lhs = integrate(unit_square, a * f + b * k)
    rhs = a * integrate(unit_square, f) + b * integrate(unit_square, k)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-14)


def test_integrate_refinement_consistency():
    errs = []
    for n in (11, 21, 41, 81):
        g = build_grid(2, n, (0.0, 1.0))
        f = np.sin(np.pi * g.points[..., 0]) * np.sin(np.pi * g.points[..., 1])
        errs.append(abs(integrate(g, f) - 4 / np.pi ** 2))
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_field_csv_round_trip(tmp_path):
    g = build_grid(2, 4, (0.0, 1.0))
    u = g.restrict(np.arange(16.0).reshape(4, 4) / 7)
    path = tmp_path / "u.csv"
    write_field_csv(g, u, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "i1,i2,x1,x2,value"
    assert lines[1].startswith("0,0,") and lines[2].startswith("0,1,")
    assert len(lines) == 17
    assert np.array_equal(read_field_csv(g, path), u)


def test_restrict_and_origin():
    g = build_grid(3, 5, (-1.0, 1.0), "chi_ball(0,0,0,1)")
    assert g.origin_index() == (2, 2, 2)
    u = g.restrict(1.0)
    assert np.all(u[~g.interior] == 0) and np.all(u[g.interior] == 1)
