import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dwinv.domain import TimeGrid, build_interval_mesh, build_rectangle_mesh
from dwinv.measure import (BoundaryTrace, add_noise, besov_half_norm,
                           l2_sigma1_norm, read_trace_csv, write_trace_csv)

M2 = build_rectangle_mesh(4, 12)
TG = TimeGrid.from_steps(1.5, 7)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
side = arrays(np.float64, 11, elements=finite)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (8, 11), elements=finite))
def test_csv_round_trip_is_exact(vals):
    tr = BoundaryTrace(vals, TG, M2)
    buf = io.StringIO(newline="")
    write_trace_csv(tr, buf)
    text = buf.getvalue()
    assert text.startswith("# gamma1 nodes:")
    assert "\r\n" in text and "\n" not in text.replace("\r\n", "")
    back = read_trace_csv(io.StringIO(text), M2)
    assert np.array_equal(back.values, tr.values)
    assert np.array_equal(back.time_grid.times, TG.times)


def test_trace_shape_check():
    with pytest.raises(ValueError):
        BoundaryTrace(np.zeros((3, 11)), TG, M2)


def test_trace_arithmetic():
    a = BoundaryTrace.from_function(lambda t, y: t + y, TG, M2)
    b = BoundaryTrace.from_function(lambda t, y: 2 * t, TG, M2)
    assert np.allclose((a - b + b).values, a.values)
    assert np.allclose((-a * 2.0).values, -2 * a.values)
    assert np.allclose((3.0 * a).values, 3 * a.values)
    f = np.arange(11.0)
    assert np.allclose(a.times_field(f).values, a.values * f)


def test_sigma1_norm_closed_form():
    m = build_rectangle_mesh(4, 64)
    tg = TimeGrid.from_steps(np.pi, 400)
    tr = BoundaryTrace.from_function(lambda t, y: np.sin(t) * np.sin(np.pi * y), tg, m)
    # int sin^2 t dt over [0, pi] times int sin^2(pi y) dy = pi/2 * 1/2
    assert l2_sigma1_norm(tr) ** 2 == pytest.approx(np.pi / 4, rel=1e-3)


def test_besov_1d_is_absolute_value():
    m = build_interval_mesh(4)
    assert besov_half_norm(np.array([-0.3]), m) == pytest.approx(0.3)


def test_besov_single_mode_weight():
    # sin(pi k y) sampled on the side has one odd pair of DFT coefficients
    # of size 1/2 each at xi = pi k
    n = 64
    m = build_rectangle_mesh(4, n)
    y = m.gamma1_coords[:, 0]
    for k in (1, 3, 7):
        val = besov_half_norm(np.sin(np.pi * k * y), m)
        assert val == pytest.approx((1 + (np.pi * k) ** 2) ** 0.25, rel=1e-10)


def test_besov_needs_mesh():
    with pytest.raises(ValueError):
        besov_half_norm(np.ones(3))


@settings(max_examples=40, deadline=None)
@given(side, side, st.floats(-100, 100))
def test_besov_is_a_seminorm(a, b, c):
    na, nb = besov_half_norm(a, M2), besov_half_norm(b, M2)
    assert besov_half_norm(c * a, M2) == pytest.approx(abs(c) * na, rel=1e-9, abs=1e-9)
    assert besov_half_norm(a + b, M2) <= na + nb + 1e-9 * (1 + na + nb)
    assert na >= 0


def test_noise_is_seeded_and_bounded():
    tr = BoundaryTrace.from_function(lambda t, y: np.cos(t) * y, TG, M2)
    a = add_noise(tr, 0.1, 7)
    b = add_noise(tr, 0.1, 7)
    c = add_noise(tr, 0.1, 8)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    peak = np.abs(tr.values).max()
    assert np.abs(a.values - tr.values).max() <= 0.1 * peak
    assert np.array_equal(add_noise(tr, 0.0, 1).values, tr.values)
    with pytest.raises(ValueError):
        add_noise(tr, -0.1, 1)
