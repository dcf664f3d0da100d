import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dwinv.domain import TimeGrid, build_interval_mesh, build_rectangle_mesh
from dwinv.elliptic import eigen_decompose
from dwinv.experiments import reconstruction_run, relative_l2_gamma1
from dwinv.inverse import (SAFETY, geometric_rho_grid, loglog_slope,
                           make_admissible, noise_floor, reconstruct_b,
                           reference_solution_u0, remainder_z, sensitivity_w0,
                           stability_sweep, uniqueness_experiment)
from dwinv.measure import BoundaryTrace, velocity_trace
from dwinv.wave import DampingField, solve_damped


def two_kappa_closed_form(b, om, tau):
    # ||b * d/dt cos(om t) phi(1)||, phi(1)^2 = 2 for the normalized 1-D mode
    return b * om * math.sqrt(tau - math.sin(2 * om * tau) / (2 * om))


def _inadmissible(mesh):
    # trace sin(3 pi y) vanishes at two of 23 side nodes, above the 5% cap
    B = eigen_decompose(mesh, 8)
    k = [tuple(l) for l in B.labels].index((0, 3))
    init = make_admissible(B, k)
    assert not init.admissible
    return init


def test_rho_grid():
    g = np.array(geometric_rho_grid(0.1, 1e-3, 0.5))
    assert g[0] == 0.1 and g[-1] >= 1e-3
    assert np.allclose(g[1:] / g[:-1], 0.5)
    with pytest.raises(ValueError):
        geometric_rho_grid(0.1, 1e-3, 1.5)


def test_loglog_slope():
    x = np.array([1.0, 2.0, 4.0])
    assert loglog_slope(x, 3 * x**2) == pytest.approx(2.0)
    assert math.isnan(loglog_slope([1.0], [1.0]))


def test_make_admissible_flags_vanishing_trace():
    m = build_rectangle_mesh(8, 8)
    B = eigen_decompose(m, 4)
    # mode 2 is labelled (0, 2): its trace sin(2 pi y) vanishes at y = 1/2
    assert tuple(B.labels[0]) == (0, 1)
    ok = make_admissible(B, 0)
    assert ok.admissible and ok.vanishing_fraction == 0.0
    bad = make_admissible(B, 2)
    assert bad.labels == (0, 2)
    assert bad.vanishing_fraction == pytest.approx(1 / 7)
    assert not bad.admissible
    with pytest.raises(IndexError):
        make_admissible(B, 4)


def test_reference_solution_is_closed_form(setup1d):
    mesh, tg, init, _ = setup1d
    u0 = reference_solution_u0(init, mesh, tg)
    om = math.sqrt(init.lam)
    assert np.allclose(u0.u[7], math.cos(om * tg.times[7]) * init.u0)
    assert np.allclose(u0.v[7], -om * math.sin(om * tg.times[7]) * init.u0)


def test_two_kappa_reference_matches_closed_form():
    m = build_interval_mesh(256)
    tg = TimeGrid.from_cfl(2.0, m.h, 0.9)
    init = make_admissible(eigen_decompose(m, 1), 0)
    b = DampingField.constant(m, 0.5)
    rep = stability_sweep(m, tg, b, init, rho_grid=[0.1, 0.05, 0.025, 0.0125])
    exact = two_kappa_closed_form(0.5, 0.5 * math.pi, 2.0)
    assert rep.two_kappa_ref == pytest.approx(exact, rel=2e-3)
    assert rep.kappa_hat == pytest.approx(rep.kappa_ref, rel=2e-2)
    assert rep.certificate_holds
    assert rep.rho0_hat > 0


def test_sweep_rejects_bad_input(setup1d, setup2d):
    mesh, tg, init, b = setup1d
    with pytest.raises(ValueError, match="vanish"):
        stability_sweep(mesh, tg, DampingField.constant(mesh, 0.0), init)
    for grid in ([0.1, 0.2], [0.1, 0.1], [2.0, 0.5], [0.1, -0.1], []):
        with pytest.raises(ValueError):
            stability_sweep(mesh, tg, b, init, rho_grid=grid)
    m2, tg2, _, b2 = setup2d
    bad = _inadmissible(m2)
    with pytest.raises(ValueError, match="admissible"):
        stability_sweep(m2, tg2, b2, bad)


def test_single_rho_disables_extrapolation(setup1d):
    mesh, tg, init, b = setup1d
    rep = stability_sweep(mesh, tg, b, init, rho_grid=[0.01])
    assert not rep.extrapolated
    assert rep.warnings


def test_remainder_is_second_order(setup1d):
    mesh, tg, init, b = setup1d
    u0 = reference_solution_u0(init, mesh, tg)
    w0 = sensitivity_w0(mesh, tg, b, u0)
    rhos = [0.08, 0.04, 0.02]
    norms = [remainder_z(mesh, tg, b, r, u0, w0).norm for r in rhos]
    assert loglog_slope(rhos, norms) == pytest.approx(2.0, abs=0.2)
    assert remainder_z(mesh, tg, b, 0.0, u0, w0).norm == 0.0


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.05, 2.0), min_size=11, max_size=11), st.floats(1e-3, 0.5))
def test_reconstruct_recovers_linear_data(bvals, rho):
    # data generated exactly by the linear model gap = -rho b du0/dt
    m = build_rectangle_mesh(6, 12)
    tg = TimeGrid.from_steps(2.0, 60)
    init = make_admissible(eigen_decompose(m, 1), 0)
    u0 = reference_solution_u0(init, m, tg)
    b = np.array(bvals)
    gap = velocity_trace(u0, m).times_field(-rho * b)
    rec = reconstruct_b(m, tg, gap, rho, u0)
    assert np.allclose(rec.estimate.values, b, rtol=1e-10)
    assert not rec.clamped.any() and not rec.unreliable.any()


def test_reconstruct_clamps_negative_and_rejects_rho(setup1d):
    mesh, tg, init, _ = setup1d
    u0 = reference_solution_u0(init, mesh, tg)
    gap = velocity_trace(u0, mesh) * 0.3  # corresponds to b = -0.3
    rec = reconstruct_b(mesh, tg, gap, 1.0, u0)
    assert rec.clamped.all() and rec.estimate.values[0] == 0.0
    assert rec.raw[0] == pytest.approx(-0.3)
    with pytest.raises(ValueError):
        reconstruct_b(mesh, tg, gap, 0.0, u0)


def test_reconstruct_scale_equivariance(setup2d):
    mesh, tg, init, b = setup2d
    r1 = reconstruction_run(mesh, tg, b, init, 0.01)
    r2 = reconstruction_run(mesh, tg, b, init.scaled(3.0), 0.01)
    assert np.allclose(r1.clean.estimate.values, r2.clean.estimate.values, rtol=1e-8)


def test_reconstruction_accuracy_2d(setup2d):
    mesh, tg, init, b = setup2d
    run = reconstruction_run(mesh, tg, b, init, 0.01, noise_level=0.01, seed=3)
    assert run.error < 0.03
    assert abs(run.noisy_error - run.error) <= 5 * run.noise_floor_rel + 1e-12
    assert run.summary()["clamped_nodes"] == 0


def test_noise_floor_shrinks_with_rho(setup1d):
    mesh, tg, init, _ = setup1d
    u0 = reference_solution_u0(init, mesh, tg)
    a = noise_floor(0.01, 1.0, 0.01, tg, u0, mesh)
    b = noise_floor(0.01, 1.0, 0.02, tg, u0, mesh)
    assert np.allclose(a, 2 * b)
    assert np.allclose(noise_floor(0.02, 1.0, 0.01, tg, u0, mesh), 2 * a)


def test_uniqueness_1d(setup1d):
    mesh, tg, init, b = setup1d
    v = uniqueness_experiment(mesh, tg, init, b.scaled(0.02))
    assert v.passed, v.record
    assert v.record["zero_branch_pass"]


def test_uniqueness_2d(setup2d):
    mesh, tg, init, b = setup2d
    v = uniqueness_experiment(mesh, tg, init, b.scaled(0.01))
    assert v.passed, v.record


def test_uniqueness_refuses_inadmissible(setup2d):
    mesh, tg, _, b = setup2d
    bad = _inadmissible(mesh)
    v = uniqueness_experiment(mesh, tg, bad, b)
    assert not v.passed and "admissible" in v.record["reason"]


def test_reconstruction_run_rejects_inadmissible(setup2d):
    mesh, tg, _, b = setup2d
    bad = _inadmissible(mesh)
    with pytest.raises(ValueError):
        reconstruction_run(mesh, tg, b, bad, 0.01)


def test_relative_l2():
    m = build_rectangle_mesh(4, 8)
    ref = np.ones(7)
    assert relative_l2_gamma1(1.1 * ref, ref, m) == pytest.approx(0.1)
