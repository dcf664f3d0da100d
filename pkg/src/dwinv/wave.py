"""Forward solvers for the wave equation on a :class:`DomainMesh`.

Two explicit leapfrog solvers share one interior scheme and differ only in
the gamma1 ghost relation: ``du/dnu = -b du/dt`` (damped) or
``du/dnu = g`` (Neumann forced).  :func:`duhamel_spectral_solve` is an
independent eigen-expansion solver for the forced problem.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .domain import DomainMesh, TimeGrid, normal_derivative
from .elliptic import EigenBasis, assemble_mixed_laplacian, extend_time_dependent

__all__ = [
    "WaveState",
    "DampingField",
    "WaveTrajectory",
    "CFLError",
    "BlowUpError",
    "CompatibilityError",
    "solve_damped",
    "solve_neumann_forced",
    "duhamel_spectral_solve",
    "energy",
    "energy_series",
    "dissipation_identity_residual",
    "check_cfl",
]

log = logging.getLogger(__name__)


class CFLError(ValueError):
    """Time step outside the leapfrog stability region."""


class BlowUpError(FloatingPointError):
    def __init__(self, step, msg):
        super().__init__(f"step {step}: {msg}")
        self.step = step


class CompatibilityError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WaveState:
    """Displacement and velocity as nodal vectors."""

    u: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, mesh):
        return cls(np.zeros(mesh.n_nodes), np.zeros(mesh.n_nodes))

    def check(self, mesh, atol=0.0):
        u, v = np.asarray(self.u), np.asarray(self.v)
        if u.shape != (mesh.n_nodes,) or v.shape != (mesh.n_nodes,):
            raise ValueError("state arrays must hold one value per mesh node")
        if np.abs(u[mesh.gamma0]).max(initial=0.0) > atol:
            raise ValueError("displacement must vanish on gamma0")

    def scaled(self, alpha):
        return WaveState(alpha * np.asarray(self.u), alpha * np.asarray(self.v))


@dataclass(frozen=True, eq=False)
class DampingField:
    """Nonnegative damping coefficient sampled on gamma1 nodes."""

    mesh: DomainMesh
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        if vals.shape != (len(self.mesh.gamma1),):
            raise ValueError(
                f"damping needs {len(self.mesh.gamma1)} values, got {vals.size}")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError("damping values must be finite and >= 0")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, mesh, value):
        return cls(mesh, np.full(len(mesh.gamma1), float(value)))

    def scaled(self, rho):
        return DampingField(self.mesh, rho * self.values)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)


@dataclass(frozen=True, eq=False)
class WaveTrajectory:
    mesh: DomainMesh
    time_grid: TimeGrid
    u: np.ndarray  # (n_samples, n_nodes)
    v: np.ndarray
    energy: np.ndarray

    @property
    def times(self):
        return self.time_grid.times

    def state(self, n):
        return WaveState(self.u[n], self.v[n])

    def to_csv_rows(self, field="u"):
        data = getattr(self, field)
        for t, row in zip(self.times, data):
            yield [t, *row]


def check_cfl(mesh: DomainMesh, tg: TimeGrid):
    """Leapfrog stability: ``dt^2 * sum(1/h_i^2) <= 1``.

    The spectral radius of the discrete Laplacian, ghost rows included,
    stays below ``4 * sum(1/h_i^2)``.
    """
    limit = 1.0 / math.sqrt(sum(1.0 / h**2 for h in mesh.spacing))
    if tg.dt > limit * (1.0 + 1e-12):
        raise CFLError(
            f"dt={tg.dt:.6g} exceeds the stability limit {limit:.6g} "
            f"(cfl_factor={tg.cfl_factor:g}, h={mesh.h:.6g})")


def _velocity(u, v0, dt):
    """Centered differences inside, exact start, second-order backward end."""
    v = np.empty_like(u)
    v[0] = v0
    v[1:-1] = (u[2:] - u[:-2]) / (2.0 * dt)
    if u.shape[0] > 2:
        v[-1] = (3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * dt)
    else:
        v[-1] = (u[-1] - u[-2]) / dt
    return v


def _leapfrog(mesh, tg, init, damping=None, forcing=None):
    check_cfl(mesh, tg)
    init.check(mesh)
    op = assemble_mixed_laplacian(mesh)
    L = op.matrix.tocsr()
    dt = tg.dt
    nd = op.n_dofs

    c = np.zeros(nd)
    if damping is not None:
        c[op.gamma1_pos] = damping.values * mesh.gamma1_weights / op.mass[op.gamma1_pos]
    f = None
    if forcing is not None:
        f = op.boundary_load(forcing) / op.mass

    u0 = op.restrict(init.u).astype(float)
    v0 = op.restrict(init.v).astype(float)
    U = np.empty((tg.n_samples, nd))
    U[0] = u0
    acc = L @ u0 - c * v0 + (f[0] if f is not None else 0.0)
    U[1] = u0 + dt * v0 + 0.5 * dt**2 * acc

    half = 0.5 * dt * c
    denom = 1.0 + half
    scale = max(np.abs(u0).max(initial=0.0), dt * np.abs(v0).max(initial=0.0), 1e-300)
    if f is not None:
        scale = max(scale, dt**2 * np.abs(f).max(initial=0.0) * tg.n_steps**2)
    ceiling = 1e8 * scale
    for n in range(1, tg.n_steps):
        rhs = 2.0 * U[n] - U[n - 1] + dt**2 * (L @ U[n]) + half * U[n - 1]
        if f is not None:
            rhs += dt**2 * f[n]
        U[n + 1] = rhs / denom
        peak = np.abs(U[n + 1]).max()
        if not np.isfinite(peak) or peak > ceiling:
            raise BlowUpError(n + 1, f"solution blew up (max |u| = {peak:.3g})")

    u = op.prolong(U)
    v = _velocity(u, np.asarray(init.v, dtype=float), dt)
    v[0, mesh.gamma0] = 0.0
    return WaveTrajectory(mesh=mesh, time_grid=tg, u=u, v=v,
                          energy=energy_series(u, v, mesh))


def solve_damped(mesh: DomainMesh, tg: TimeGrid, b: DampingField,
                 init: WaveState) -> WaveTrajectory:
    """Leapfrog for the wave equation with ``du/dnu + b du/dt = 0`` on gamma1.

    The boundary velocity is the centered difference
    ``(u^{n+1} - u^{n-1}) / (2 dt)``, so each gamma1 value is found by one
    division per step.
    """
    return _leapfrog(mesh, tg, init, damping=b)


def _compat_defect(mesh, init, g0):
    """Return ``(defect, allowance)`` for ``du0/dnu = g(0)`` on gamma1.

    The allowance is the gap between the 3- and 4-point one-sided
    derivatives, an estimate of the stencil truncation error.
    """
    d3 = normal_derivative(init.u, mesh, 3)
    d4 = normal_derivative(init.u, mesh, 4)
    w = mesh.gamma1_weights
    defect = math.sqrt(((d4 - g0) ** 2) @ w)
    trunc = math.sqrt(((d3 - d4) ** 2) @ w)
    allow = 1e-8 * (1.0 + math.sqrt((g0**2) @ w)) + 10.0 * trunc
    return defect, allow


def solve_neumann_forced(mesh: DomainMesh, tg: TimeGrid, g, init: WaveState,
                         compat: str = "error") -> WaveTrajectory:
    """Leapfrog for the wave equation with ``du/dnu = g`` on gamma1.

    ``g`` is a :class:`~dwinv.measure.BoundaryTrace` on ``tg``.
    ``compat`` controls the initial compatibility check: ``"error"``,
    ``"warn"`` or ``"off"``.
    """
    vals = np.asarray(g.values, dtype=float)
    if vals.shape != (tg.n_samples, len(mesh.gamma1)):
        raise ValueError(f"forcing has shape {vals.shape}, expected "
                         f"{(tg.n_samples, len(mesh.gamma1))}")
    if compat != "off":
        defect, allow = _compat_defect(mesh, init, vals[0])
        if defect > allow:
            msg = (f"initial data incompatible with forcing: "
                   f"|du0/dnu - g(0)| = {defect:.3e} > {allow:.3e}")
            if compat == "error":
                raise CompatibilityError(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            log.warning(msg)
    return _leapfrog(mesh, tg, init, forcing=vals)


def duhamel_spectral_solve(basis: EigenBasis, tg: TimeGrid, g, init: WaveState,
                           mesh: DomainMesh | None = None) -> WaveTrajectory:
    """Eigen-expansion solution of the Neumann-forced problem.

    With ``G`` the harmonic lift of ``g`` and ``v = u - G``, ``v`` satisfies
    the homogeneous boundary condition and ``v'' - Lap v = -G''``, started
    from ``(u0 - G(0), v0 - G'(0))``.  Each mode is advanced exactly in time;
    the convolution with the source uses the trapezoid rule on ``tg``.
    """
    mesh = basis.mesh if mesh is None else mesh
    lift = extend_time_dependent(mesh, g)
    u1 = np.asarray(init.u, dtype=float) - lift.G[0]
    v1 = np.asarray(init.v, dtype=float) - lift.dG[0]
    source = -lift.d2G

    w = mesh.weights
    for name, f in (("initial displacement", u1), ("initial velocity", v1)):
        total = float((f**2) @ w)
        if total > 0:
            kept = float(np.sum(basis.project(f) ** 2)) / total
            if kept < 0.999:
                log.warning("basis captures %.4f of the %s norm", kept, name)

    a0 = basis.project(u1)
    a1 = basis.project(v1)
    Fk = basis.project(source)  # (n_samples, K)
    om = np.sqrt(np.maximum(basis.lambdas, 0.0))
    t = tg.times[:, None]
    small = om < 1e-12
    safe = np.where(small, 1.0, om)
    cos, sin = np.cos(t * om), np.sin(t * om)
    sinc = np.where(small, t, sin / safe)

    Cs = _cumtrapz(cos * Fk, tg.dt)
    Ss = _cumtrapz(sin * Fk, tg.dt)
    # int_0^t sin(om (t-s)) F(s) ds = sin(om t) C(t) - cos(om t) S(t)
    conv = (sin * Cs - cos * Ss) / safe
    if small.any():
        conv[:, small] = (t * _cumtrapz(Fk[:, small], tg.dt)
                          - _cumtrapz(t * Fk[:, small], tg.dt))
    a = cos * a0 + sinc * a1 + conv
    da = -om * sin * a0 + cos * a1 + cos * Cs + sin * Ss

    u = basis.synthesize(a) + lift.G
    v = basis.synthesize(da) + lift.dG
    return WaveTrajectory(mesh=mesh, time_grid=tg, u=u, v=v,
                          energy=energy_series(u, v, mesh))


def _cumtrapz(f, dt):
    out = np.zeros_like(f)
    out[1:] = np.cumsum(0.5 * dt * (f[1:] + f[:-1]), axis=0)
    return out


def _gradient_sq(u, mesh):
    g = mesh.grid(u)
    lead = g.ndim - mesh.dim
    total = 0.0
    for ax, h in enumerate(mesh.spacing):
        d = np.gradient(g, h, axis=lead + ax, edge_order=2)
        total = total + d**2
    return total.reshape(u.shape)


def energy_series(u, v, mesh: DomainMesh) -> np.ndarray:
    """``0.5 * int (v^2 + |grad u|^2)`` for each row of ``u`` and ``v``."""
    u = np.atleast_2d(u)
    v = np.atleast_2d(v)
    dens = v**2 + _gradient_sq(u, mesh)
    return 0.5 * dens @ mesh.weights


def energy(state: WaveState, mesh: DomainMesh) -> float:
    """Discrete energy of one state (trapezoid rule, second-order gradient)."""
    return float(energy_series(state.u, state.v, mesh)[0])


def dissipation_identity_residual(traj: WaveTrajectory, b: DampingField,
                                  mesh: DomainMesh | None = None) -> float:
    """``max_t |E(t) - E(0) + int_0^t int_gamma1 b v^2| / E(0)``."""
    mesh = traj.mesh if mesh is None else mesh
    vb = traj.v[:, mesh.gamma1]
    flux = (vb**2 * b.values) @ mesh.gamma1_weights
    dt = traj.time_grid.dt
    lost = np.concatenate([[0.0], np.cumsum(0.5 * dt * (flux[1:] + flux[:-1]))])
    E = traj.energy
    if E[0] == 0:
        return 0.0
    return float(np.abs(E - E[0] + lost).max() / E[0])
