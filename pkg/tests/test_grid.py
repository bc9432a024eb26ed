import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cann.grid import (BoundaryCondition, ConfigurationError, EvaluationError, Field, apply_ghost,
                       build_grid, cell_average, flat_index, multi_index)


def test_build_grid_periodic_box():
    g = build_grid((0, 0), (2 * math.pi, 2 * math.pi), (8, 8))
    assert g.dx == pytest.approx((math.pi / 4, math.pi / 4), rel=1e-15)
    assert g.cell_measure == pytest.approx(math.pi ** 2 / 16, rel=1e-14)
    assert g.size == 64


def test_build_grid_unit_box():
    g = build_grid((-1, -1), (1, 1), (4, 4))
    assert g.dx == (0.5, 0.5)
    assert g.cell_measure == 0.25


@pytest.mark.parametrize("lo, hi, counts", [
    ((0, 0), (1, 1), (2, 8)),
    ((0, 1), (1, 1), (4, 4)),
    ((1, 0), (0, 1), (4, 4)),
])
def test_build_grid_rejects_bad_axes(lo, hi, counts):
    with pytest.raises(ConfigurationError):
        build_grid(lo, hi, counts)


def test_cell_measure_is_product_of_widths():
    g = build_grid((0, -1, 2, 0), (1, 3, 7, 0.5), (3, 5, 7, 4))
    assert g.cell_measure == pytest.approx(np.prod(g.dx), rel=1e-14)


def test_flat_index_row_major():
    g = build_grid((0, 0), (1, 1), (4, 4))
    assert flat_index(g, (0, 0)) == 0
    assert flat_index(g, (1, 2)) == 6
    with pytest.raises(IndexError):
        flat_index(g, (4, 0))
    with pytest.raises(IndexError):
        multi_index(g, 16)


@given(st.lists(st.integers(3, 6), min_size=2, max_size=4))
@settings(max_examples=25, deadline=None)
def test_flat_index_round_trip(counts):
    g = build_grid([0] * len(counts), [1] * len(counts), counts)
    seen = set()
    for m in np.ndindex(*counts):
        f = flat_index(g, m)
        assert multi_index(g, f) == m
        seen.add(f)
    assert seen == set(range(g.size))


def test_cell_average_constant():
    g = build_grid((0, 0), (2 * math.pi, 2 * math.pi), (8, 8))
    f = cell_average(g, lambda x: np.full(x.shape[1:], 3.7))
    np.testing.assert_allclose(f.values, 3.7, rtol=0, atol=1e-14)


def test_cell_average_trig_against_antiderivative():
    h = math.pi / 4
    g = build_grid((0, 0), (2 * math.pi, 2 * math.pi), (8, 8))
    # double antiderivative of sin(x+y) is -sin(x+y)
    exact = np.empty(g.shape)
    for i, j in np.ndindex(*g.shape):
        a, b = i * h, j * h
        F = lambda x, y: -math.sin(x + y)
        exact[i, j] = (F(a + h, b + h) - F(a + h, b) - F(a, b + h) + F(a, b)) / h ** 2
    # Gauss-Legendre remainder per axis: h^8 (4!)^4 / (9 (8!)^3) max|f^(8)|, with |f^(8)| <= 1
    bound = 2 * h ** 8 * math.factorial(4) ** 4 / (9 * math.factorial(8) ** 3)
    err4 = np.abs(cell_average(g, lambda x: np.sin(x[0] + x[1]), q=4).as_array() - exact).max()
    assert err4 <= bound
    err5 = np.abs(cell_average(g, lambda x: np.sin(x[0] + x[1]), q=5).as_array() - exact).max()
    assert err5 <= 1e-12


def test_cell_average_two_point_gauss_exact_on_cubics():
    g = build_grid((0, 0), (1, 1), (4, 4))
    f = cell_average(g, lambda x: x[0] ** 2 * x[1] ** 2, q=2)
    h = 0.25
    exact = np.empty(g.shape)
    for i, j in np.ndindex(*g.shape):
        ix = ((i + 1) ** 3 - i ** 3) * h ** 3 / 3 / h
        jy = ((j + 1) ** 3 - j ** 3) * h ** 3 / 3 / h
        exact[i, j] = ix * jy
    np.testing.assert_allclose(f.as_array(), exact, rtol=0, atol=1e-14)


def test_cell_average_quadrature_converges():
    g = build_grid((0, 0), (2 * math.pi, 2 * math.pi), (8, 8))
    fn = lambda x: np.exp(np.sin(x[0]) * np.cos(x[1]))
    diffs = [np.abs(cell_average(g, fn, q).values - cell_average(g, fn, q + 2).values).max()
             for q in (1, 3, 5)]
    assert diffs[0] > diffs[1] > diffs[2]


def test_cell_average_reports_non_finite():
    g = build_grid((-1, -1), (1, 1), (4, 4))
    with pytest.raises(EvaluationError, match="cell centered"), np.errstate(invalid="ignore"):
        cell_average(g, lambda x: np.log(x[0] + 0.75))


def test_periodic_ghosts_wrap():
    g = build_grid((0, 0), (1, 1), (4, 3))
    vals = np.arange(12.0)
    P = apply_ghost(Field(g, vals), BoundaryCondition.periodic())
    inner = vals.reshape(4, 3)
    # one axis, interior [a, b, c, d]: ghosts (left, right) = (d, a)
    np.testing.assert_array_equal(P[0, 1:-1], inner[-1])
    np.testing.assert_array_equal(P[-1, 1:-1], inner[0])
    np.testing.assert_array_equal(P[1:-1, 0], inner[:, -1])
    assert P[0, 0] == inner[-1, -1]
    np.testing.assert_array_equal(P[1:-1, 1:-1], inner)


def test_periodic_padding_idempotent(rng):
    g = build_grid((0, 0, 0), (1, 1, 1), (3, 4, 5))
    f = Field(g, rng.normal(size=g.size))
    a = apply_ghost(f, BoundaryCondition.periodic(), 0.3)
    b = apply_ghost(f, BoundaryCondition.periodic(), 0.3)
    np.testing.assert_array_equal(a, b)


def test_dirichlet_zero_extension():
    g = build_grid((0, 0), (1, 1), (4, 4))
    bc = BoundaryCondition.dirichlet(lambda x, t: np.zeros(x.shape[1:]))
    P = apply_ghost(Field(g, np.ones(16)), bc, 0.0)
    ghost = np.ones(P.shape, bool)
    ghost[1:-1, 1:-1] = False
    assert np.all(P[ghost] == 0)
    assert np.all(P[~ghost] == 1)


def test_dirichlet_pme_ghost_matches_quadrature():
    g = build_grid((0, 0), (1, 1), (16, 16))
    u = lambda x, t: np.sqrt(5 * (x[0] + x[1] + t) + 15)
    P = apply_ghost(Field(g, np.zeros(g.size)), BoundaryCondition.dirichlet(u), 0.0)
    # ghost left of x=0 next to the cell [0, 1/16] x [3/16, 4/16], by 8-point Gauss per axis
    nodes, w = np.polynomial.legendre.leggauss(8)
    xs = -1 / 32 + nodes / 32
    ys = 3.5 / 16 + nodes / 32
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    ref = np.einsum("i,j,ij->", w, w, np.sqrt(5 * (X + Y) + 15)) / 4
    assert P[0, 4] == pytest.approx(ref, abs=1e-12)
