import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dwinv.domain import TimeGrid, build_interval_mesh, build_rectangle_mesh
from dwinv.elliptic import (assemble_mixed_laplacian, eigen_decompose,
                            extend_time_dependent, harmonic_extend,
                            second_time_derivative, vanishing_set_fraction)
from dwinv.measure import BoundaryTrace

from conftest import observed_order


@pytest.mark.parametrize("mesh", [build_interval_mesh(12), build_rectangle_mesh(6, 5)])
def test_stiffness_symmetric_and_negative_definite(mesh):
    op = assemble_mixed_laplacian(mesh)
    S = op.stiffness.toarray()
    assert np.array_equal(S, S.T)
    assert np.linalg.eigvalsh(S).max() < 0
    assert np.all(op.mass > 0)
    assert op.n_dofs == len(mesh.dofs)


def test_laplacian_consistency_1d():
    errs = []
    for n in (32, 64, 128):
        m = build_interval_mesh(n)
        x = m.nodes[:, 0]
        u = np.sin(0.5 * np.pi * x)  # satisfies both boundary conditions
        Lu = assemble_mixed_laplacian(m).apply_nodes(u)
        errs.append(np.abs(Lu + (0.5 * np.pi) ** 2 * u)[m.dofs].max())
    assert observed_order((32, 64, 128), errs) == pytest.approx(2.0, abs=0.15)


def test_apply_batches():
    m = build_rectangle_mesh(5, 4)
    op = assemble_mixed_laplacian(m)
    rng = np.random.default_rng(0)
    U = rng.standard_normal((3, op.n_dofs))
    assert np.allclose(op.apply(U), np.stack([op.apply(u) for u in U]))
    assert np.allclose(op.apply(U[0]), op.matrix @ U[0])


def test_eigenvalues_1d_closed_form():
    errs = []
    exact = ((np.arange(6) + 0.5) * np.pi) ** 2
    for n in (64, 128, 256):
        lam = eigen_decompose(build_interval_mesh(n), 6).lambdas
        errs.append(np.max(np.abs(lam - exact) / exact))
    assert errs[-1] <= 1e-3
    assert observed_order((64, 128, 256), errs) == pytest.approx(2.0, abs=0.2)


def test_eigenvectors_1d_are_sampled_sines():
    m = build_interval_mesh(40)
    B = eigen_decompose(m, 4)
    x = m.nodes[:, 0]
    for k in range(4):
        ref = np.sqrt(2.0) * np.sin((k + 0.5) * np.pi * x)
        ref /= np.sqrt((ref**2) @ m.weights)
        ref *= np.sign(ref[m.gamma1[0]])  # basis is oriented positive on gamma1
        assert np.allclose(B.phi[k], ref, atol=1e-10)
    assert np.allclose(B.gram(), np.eye(4), atol=1e-12)
    assert B.residuals().max() < 1e-8 * B.lambdas.max()
    assert np.all(B.phi[:, m.gamma1] > 0)


def test_eigen_2d_labels_and_tensor_structure():
    m = build_rectangle_mesh(32, 32)
    B = eigen_decompose(m, 6)
    labels = [tuple(l) for l in B.labels]
    assert labels[:3] == [(0, 1), (1, 1), (0, 2)]
    exact = np.array([((a + 0.5) * np.pi) ** 2 + (b * np.pi) ** 2 for a, b in labels])
    assert np.max(np.abs(B.lambdas - exact) / exact) < 1e-2
    assert np.all(np.diff(B.lambdas) >= 0)
    assert np.allclose(B.gram(), np.eye(6), atol=1e-12)
    x, y = m.nodes.T
    ref = np.sin(0.5 * np.pi * x) * np.sin(np.pi * y)
    ref /= np.sqrt((ref**2) @ m.weights)
    assert np.allclose(B.phi[0], ref, atol=1e-10)


def test_eigen_count_bounds():
    m = build_interval_mesh(8)
    with pytest.raises(ValueError):
        eigen_decompose(m, 9)
    with pytest.raises(ValueError):
        eigen_decompose(m, 0)
    assert eigen_decompose(m, 8).count == 8


def test_harmonic_extension_1d_is_linear():
    m = build_interval_mesh(16)
    ext = harmonic_extend(m, np.array([2.5]))
    assert np.allclose(ext.w, 2.5 * m.nodes[:, 0], atol=1e-12)
    assert ext.residual < 1e-10


def test_harmonic_extension_2d_closed_form():
    # w = sinh(pi x) sin(pi y) / (pi cosh pi) has dw/dx = sin(pi y) at x = 1
    errs = []
    for n in (16, 32, 64):
        m = build_rectangle_mesh(n, n)
        y1 = m.gamma1_coords[:, 0]
        w = harmonic_extend(m, np.sin(np.pi * y1)).w
        x, y = m.nodes.T
        exact = np.sinh(np.pi * x) * np.sin(np.pi * y) / (np.pi * np.cosh(np.pi))
        errs.append(np.abs(w - exact).max())
    assert errs[-1] < 1e-3
    assert observed_order((16, 32, 64), errs) > 1.8


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=5, max_size=5),
       st.lists(st.floats(-3, 3), min_size=5, max_size=5), st.floats(-2, 2))
def test_harmonic_extension_linear(a, b, alpha):
    m = build_rectangle_mesh(4, 6)
    a, b = np.array(a), np.array(b)
    wa = harmonic_extend(m, a).w
    wb = harmonic_extend(m, b).w
    wab = harmonic_extend(m, alpha * a + b).w
    assert np.allclose(wab, alpha * wa + wb, atol=1e-9)


def test_time_lift_matches_closed_form():
    m = build_interval_mesh(16)
    om = 3.0
    errs = []
    for steps in (50, 100, 200):
        tg = TimeGrid.from_steps(2.0, steps)
        g = BoundaryTrace.from_function(lambda t, y: np.sin(om * t), tg, m)
        lift = extend_time_dependent(m, g)
        t, x = tg.times[:, None], m.nodes[:, 0]
        assert np.allclose(lift.G, x * np.sin(om * t), atol=1e-12)
        errs.append(np.abs(lift.d2G + om**2 * x * np.sin(om * t)).max())
    assert observed_order((50, 100, 200), errs) > 1.8


def test_second_derivative_commutes_with_lift():
    # differencing the lift equals lifting the differenced trace
    m = build_rectangle_mesh(6, 6)
    tg = TimeGrid.from_steps(1.0, 30)
    g = BoundaryTrace.from_function(lambda t, y: np.cos(2 * t) * y * (1 - y), tg, m)
    lift = extend_time_dependent(m, g)
    d2g = second_time_derivative(g.values, tg.dt)
    direct = np.stack([harmonic_extend(m, row).w for row in d2g])
    assert np.allclose(lift.d2G, direct, atol=1e-9)


def test_zero_trace_lifts_to_zero():
    m = build_interval_mesh(8)
    tg = TimeGrid.from_steps(1.0, 10)
    lift = extend_time_dependent(m, BoundaryTrace.zeros(tg, m))
    assert not lift.G.any() and not lift.d2G.any()


def test_vanishing_fraction_counts_zero_nodes():
    m = build_rectangle_mesh(8, 12)
    x, y = m.nodes.T
    for n in (1, 2, 3, 4):
        phi = np.sin(0.5 * np.pi * x) * np.sin(n * np.pi * y)
        # zeros of sin(n pi y) at j/n fall on nodes because 12 is divisible by n
        assert vanishing_set_fraction(phi, m, 1e-3) == pytest.approx((n - 1) / 11)


def test_vanishing_length_scales_with_eps():
    m = build_rectangle_mesh(8, 64)
    x, y = m.nodes.T
    phi = np.sin(0.5 * np.pi * x) * np.sin(3 * np.pi * y)
    fr = [vanishing_set_fraction(phi, m, e, "length") for e in (1e-2, 1e-3, 1e-4)]
    # continuum value 2 eps / pi for sin-type traces with simple zeros
    for e, f in zip((1e-2, 1e-3, 1e-4), fr):
        assert 0 < f <= e
    assert observed_order((1e-2, 1e-3, 1e-4), fr) == pytest.approx(-1.0, abs=0.05)


def test_vanishing_identically_zero_warns():
    m = build_interval_mesh(4)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        assert vanishing_set_fraction(np.zeros(5), m) == 1.0
    assert rec and issubclass(rec[0].category, RuntimeWarning)


def test_vanishing_rejects_bad_eps():
    with pytest.raises(ValueError):
        vanishing_set_fraction(np.ones(5), build_interval_mesh(4), 0.0)
