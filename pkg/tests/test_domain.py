import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dwinv.domain import (TimeGrid, build_interval_mesh, build_rectangle_mesh,
                          integrate_gamma1, integrate_sigma1, normal_derivative,
                          trapezoid_weights)
from dwinv.measure import BoundaryTrace


def test_interval_partition():
    m = build_interval_mesh(8)
    assert m.dim == 1 and m.n_nodes == 9
    assert list(m.gamma0) == [0] and list(m.gamma1) == [8]
    assert list(m.dofs) == list(range(1, 9))
    assert m.outward_normal.tolist() == [[1.0]]
    assert m.h == pytest.approx(1 / 8)


def test_rectangle_partition_excludes_corners():
    m = build_rectangle_mesh(4, 5)
    assert m.n_nodes == 5 * 6
    # gamma1 is x = 1 without its corners
    xy = m.nodes[m.gamma1]
    assert np.all(xy[:, 0] == 1.0)
    assert xy[:, 1].min() > 0 and xy[:, 1].max() < 1
    assert len(m.gamma1) == 4
    corners = [i for i in range(m.n_nodes)
               if m.nodes[i, 0] in (0, 1) and m.nodes[i, 1] in (0, 1)]
    assert set(corners) <= set(m.gamma0)
    # unknowns: interior plus gamma1
    assert len(m.dofs) == 4 * 4
    assert set(m.dofs) == set(np.flatnonzero(m.interior_mask)) | set(m.gamma1)
    assert not set(m.gamma0) & set(m.dofs)


def test_node_numbering():
    m = build_rectangle_mesh(3, 4)
    i, j = 2, 3
    assert np.allclose(m.nodes[i * 5 + j], [i / 3, j / 4])


@pytest.mark.parametrize("bad", [1, 0, 2.5, -3])
def test_bad_resolution(bad):
    with pytest.raises(ValueError):
        build_interval_mesh(bad)
    with pytest.raises(ValueError):
        build_rectangle_mesh(bad, 4)


def test_mesh_arrays_are_read_only():
    m = build_interval_mesh(4)
    with pytest.raises(ValueError):
        m.nodes[0, 0] = 3.0


def test_trapezoid_weights_integrate_area():
    assert trapezoid_weights(build_interval_mesh(7)).sum() == pytest.approx(1.0)
    assert trapezoid_weights(build_rectangle_mesh(5, 9)).sum() == pytest.approx(1.0)


def test_integrate_gamma1_second_order():
    errs = []
    for n in (16, 32, 64):
        m = build_rectangle_mesh(4, n)
        y = m.gamma1_coords[:, 0]
        errs.append(abs(integrate_gamma1(np.sin(np.pi * y), m) - 2 / np.pi))
    assert errs[-1] < 1e-3
    assert np.log2(errs[1] / errs[2]) == pytest.approx(2.0, abs=0.1)


def test_integrate_gamma1_shape_check():
    with pytest.raises(ValueError):
        integrate_gamma1(np.ones(3), build_rectangle_mesh(4, 8))


def test_timegrid_from_cfl():
    tg = TimeGrid.from_cfl(2.0, 1 / 64, 0.9)
    assert tg.dt <= 0.9 / 64 + 1e-15
    assert tg.n_steps * tg.dt == pytest.approx(2.0)
    assert tg.times[-1] == pytest.approx(2.0)
    assert tg.weights.sum() == pytest.approx(2.0)


@pytest.mark.parametrize("kw", [dict(tau=0.0, h=0.1, cfl_factor=0.5),
                                dict(tau=1.0, h=0.1, cfl_factor=0.0),
                                dict(tau=1.0, h=0.1, cfl_factor=-1.0)])
def test_timegrid_rejects(kw):
    with pytest.raises(ValueError):
        TimeGrid.from_cfl(**kw)


def test_sigma1_integral_of_constant():
    m = build_interval_mesh(8)
    tg = TimeGrid.from_steps(2.0, 20)
    tr = BoundaryTrace(np.full((21, 1), 3.0), tg, m)
    assert integrate_sigma1(tr) == pytest.approx(9.0 * 2.0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4))
def test_normal_derivative_exact_on_polynomials(c):
    # the 3-point stencil is exact for quadratics, the 4-point one for cubics
    m = build_interval_mesh(10)
    x = m.nodes[:, 0]
    quad = c[0] + c[1] * x + c[2] * x**2
    cubic = quad + c[3] * x**3
    d_quad = c[1] + 2 * c[2]
    d_cubic = d_quad + 3 * c[3]
    assert normal_derivative(quad, m, 3)[0] == pytest.approx(d_quad, abs=1e-9)
    assert normal_derivative(cubic, m, 4)[0] == pytest.approx(d_cubic, abs=1e-9)


def test_normal_derivative_2d_uses_x_direction():
    m = build_rectangle_mesh(8, 6)
    x, y = m.nodes.T
    d = normal_derivative(x**2 * np.sin(np.pi * y), m, 3)
    yy = m.gamma1_coords[:, 0]
    assert np.allclose(d, 2 * np.sin(np.pi * yy), atol=1e-12)
    # stacked time samples keep their leading axis
    stack = np.stack([x, 2 * x])
    assert normal_derivative(stack, m).shape == (2, len(m.gamma1))
