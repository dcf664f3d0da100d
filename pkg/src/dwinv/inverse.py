"""Linearized identification of the boundary damping coefficient.

The reference field is the undamped eigen-solution
``u0(t) = cos(sqrt(lam_k) t) phi_k``.  Along the ray ``rho -> rho * b`` the
measured Neumann trace moves by ``-rho * b * du0/dt + O(rho^2)``.  The sweep
below measures that rate against the quadratic remainder, and
:func:`reconstruct_b` inverts the first-order term node by node.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .domain import DomainMesh, TimeGrid
from .elliptic import EigenBasis, vanishing_set_fraction
from .measure import (BoundaryTrace, besov_half_norm, l2_sigma1_norm,
                      neumann_trace, velocity_trace)
from .wave import (DampingField, WaveState, WaveTrajectory, energy_series,
                   solve_damped, solve_neumann_forced)

__all__ = [
    "AdmissibleInitialData",
    "StabilityReport",
    "Reconstruction",
    "UniquenessVerdict",
    "DEFAULT_RHO_GRID",
    "SAFETY",
    "make_admissible",
    "reference_solution_u0",
    "sensitivity_w0",
    "remainder_z",
    "stability_sweep",
    "reconstruct_b",
    "uniqueness_experiment",
    "geometric_rho_grid",
    "loglog_slope",
]

log = logging.getLogger(__name__)

SAFETY = 0.9
VANISHING_EPS = 1e-3
VANISHING_THRESHOLD = 0.05


def geometric_rho_grid(rho_max=0.1, rho_min=1e-3, ratio=0.5):
    """``rho_max * ratio**i`` for all terms ``>= rho_min`` (inclusive)."""
    if not (0 < rho_min <= rho_max <= 1 and 0 < ratio < 1):
        raise ValueError("need 0 < rho_min <= rho_max <= 1 and 0 < ratio < 1")
    n = int(math.floor(math.log(rho_min / rho_max) / math.log(ratio) + 1e-9)) + 1
    return tuple(rho_max * ratio**i for i in range(n))


DEFAULT_RHO_GRID = geometric_rho_grid()


def loglog_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x``."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.size < 2:
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


@dataclass(frozen=True, eq=False)
class AdmissibleInitialData:
    """``(phi_k, 0)`` together with its gamma1 vanishing diagnostics."""

    u0: np.ndarray
    v0: np.ndarray
    mode: int
    lam: float
    labels: tuple
    vanishing_fraction: float
    admissible: bool
    mesh: DomainMesh

    @property
    def state(self) -> WaveState:
        return WaveState(self.u0, self.v0)

    def scaled(self, alpha):
        return AdmissibleInitialData(
            u0=alpha * self.u0, v0=alpha * self.v0, mode=self.mode, lam=self.lam,
            labels=self.labels, vanishing_fraction=self.vanishing_fraction,
            admissible=self.admissible, mesh=self.mesh)


def make_admissible(basis: EigenBasis, k: int, mesh: DomainMesh | None = None,
                    eps: float = VANISHING_EPS,
                    threshold: float = VANISHING_THRESHOLD) -> AdmissibleInitialData:
    """Take ``(phi_k, 0)`` and flag it when its gamma1 trace vanishes on too
    large a fraction of the damped boundary."""
    mesh = basis.mesh if mesh is None else mesh
    if not 0 <= k < basis.count:
        raise IndexError(f"mode {k} outside basis of {basis.count} modes")
    phi = basis.phi[k]
    if np.abs(phi[mesh.gamma1]).max() == 0.0:
        frac = 1.0
    else:
        frac = vanishing_set_fraction(phi, mesh, eps)
    return AdmissibleInitialData(
        u0=phi.copy(), v0=np.zeros_like(phi), mode=int(k),
        lam=float(basis.lambdas[k]), labels=tuple(int(i) for i in basis.labels[k]),
        vanishing_fraction=frac, admissible=frac < threshold, mesh=mesh)


def reference_solution_u0(init: AdmissibleInitialData, mesh: DomainMesh | None,
                          tg: TimeGrid) -> WaveTrajectory:
    """Closed-form undamped solution ``cos(sqrt(lam) t) u0`` (no stepping)."""
    mesh = init.mesh if mesh is None else mesh
    om = math.sqrt(init.lam)
    t = tg.times[:, None]
    u = np.cos(om * t) * init.u0
    v = -om * np.sin(om * t) * init.u0
    return WaveTrajectory(mesh=mesh, time_grid=tg, u=u, v=v,
                          energy=energy_series(u, v, mesh))


def sensitivity_w0(mesh: DomainMesh, tg: TimeGrid, b: DampingField,
                   u0_traj: WaveTrajectory) -> WaveTrajectory:
    """First-order response: zero data, Neumann forcing ``-b du0/dt``."""
    g = -velocity_trace(u0_traj, mesh).times_field(b.values)
    return solve_neumann_forced(mesh, tg, g, WaveState.zeros(mesh))


@dataclass(frozen=True, eq=False)
class Remainder:
    z: np.ndarray
    trace: BoundaryTrace
    norm: float


def remainder_z(mesh: DomainMesh, tg: TimeGrid, b: DampingField, rho: float,
                u0_traj: WaveTrajectory, w0_traj: WaveTrajectory,
                u_rho: WaveTrajectory | None = None) -> Remainder:
    """``z = u_{rho b} - u0 - rho w0`` by direct subtraction of full solves.

    Returns the field and the L2(Sigma1) norm of its measured Neumann trace.
    """
    if rho == 0 or b.is_zero:
        # u_{rho b} is u0 itself
        return Remainder(z=np.zeros_like(u0_traj.u),
                         trace=BoundaryTrace.zeros(tg, mesh), norm=0.0)
    if u_rho is None:
        u_rho = solve_damped(mesh, tg, b.scaled(rho), u0_traj.state(0))
    z = u_rho.u - u0_traj.u - rho * w0_traj.u
    tr = (neumann_trace(u_rho, mesh) - neumann_trace(u0_traj, mesh)
          - rho * neumann_trace(w0_traj, mesh))
    return Remainder(z=z, trace=tr, norm=l2_sigma1_norm(tr))


@dataclass(frozen=True, eq=False)
class StabilityReport:
    rho_values: np.ndarray
    gap_norms: np.ndarray
    ratios: np.ndarray
    remainder_norms: np.ndarray
    kappa_hat: float
    kappa_ref: float
    kappa_tilde: float
    besov_b: float
    floor: float
    rho0_hat: float
    certificate: np.ndarray  # kappa_cert * besov(rho b) per rho
    certified: np.ndarray  # certificate <= gap, per rho
    slope_directional: float
    slope_remainder: float
    extrapolated: bool
    warnings: list = field(default_factory=list)

    @property
    def two_kappa_ref(self) -> float:
        return 2.0 * self.kappa_ref

    @property
    def certificate_holds(self) -> bool:
        mask = self.rho_values <= self.rho0_hat
        return bool(self.rho0_hat > 0 and np.all(self.certified[mask]))

    def records(self):
        for i, rho in enumerate(self.rho_values):
            yield {
                "rho": float(rho),
                "gap_norm": float(self.gap_norms[i]),
                "ratio": float(self.ratios[i]),
                "ratio_minus_2kappa_ref": float(self.ratios[i] - self.two_kappa_ref),
                "remainder_norm": float(self.remainder_norms[i]),
                "certificate": float(self.certificate[i]),
                "certified": bool(self.certified[i]),
                "below_rho0": bool(rho <= self.rho0_hat),
            }

    def summary(self) -> dict:
        return {
            "kappa_hat": self.kappa_hat,
            "kappa_ref": self.kappa_ref,
            "kappa_tilde": self.kappa_tilde,
            "besov_b": self.besov_b,
            "rho0_hat": self.rho0_hat,
            "floor": self.floor,
            "slope_directional": self.slope_directional,
            "slope_remainder": self.slope_remainder,
            "extrapolated": self.extrapolated,
            "certificate_holds": self.certificate_holds,
        }


def _fit_window(rho, y, lo, hi):
    sel = (rho >= lo * (1 - 1e-12)) & (rho <= hi * (1 + 1e-12)) & (y > 0)
    return loglog_slope(rho[sel], y[sel])


def stability_sweep(mesh: DomainMesh, tg: TimeGrid, b: DampingField,
                    init: AdmissibleInitialData, rho_grid=DEFAULT_RHO_GRID,
                    directional_window=(1.25e-2, 1e-1),
                    remainder_window=(6.25e-3, 1e-1)) -> StabilityReport:
    """Measure ``gap(rho) = ||dnu u_{rho b} - dnu u0||_{L2(Sigma1)}`` along a
    decreasing rho grid.

    The limit ``2 kappa`` of ``gap / rho`` is extrapolated linearly from the
    two smallest rho whose gap clears the discretization floor by 100x.  The
    lower bound checked is ``SAFETY * kappa_hat * rho <= gap(rho)`` written as
    ``kappa_tilde * besov(rho b)`` with ``kappa_tilde = SAFETY * kappa_hat /
    besov(b)``; ``rho0_hat`` is the largest grid rho below which every ratio
    stays above ``SAFETY * 2 kappa_hat``.
    """
    if b.is_zero:
        raise ValueError("damping direction b must not vanish identically "
                         "(the stability estimate is stated for b != 0)")
    if not init.admissible:
        raise ValueError(
            f"initial data not admissible: vanishing fraction "
            f"{init.vanishing_fraction:.3g} on gamma1")
    rho = np.asarray(rho_grid, dtype=float)
    if rho.size == 0 or np.any(rho <= 0) or np.any(rho > 1) or np.any(np.diff(rho) >= 0):
        raise ValueError("rho grid must be strictly decreasing inside (0, 1]")

    u0 = reference_solution_u0(init, mesh, tg)
    nt0 = neumann_trace(u0, mesh)
    vel = velocity_trace(u0, mesh)
    two_kappa_ref = l2_sigma1_norm(vel.times_field(b.values))
    if two_kappa_ref == 0.0:
        raise ValueError("b * du0/dt vanishes on Sigma1; no directional bound")
    w0 = sensitivity_w0(mesh, tg, b, u0)
    nt_w0 = neumann_trace(w0, mesh)

    u_zero = solve_damped(mesh, tg, b.scaled(0.0), init.state)
    floor = l2_sigma1_norm(neumann_trace(u_zero, mesh) - nt0)

    gaps, rems = np.empty(rho.size), np.empty(rho.size)
    for i, r in enumerate(rho):
        ur = solve_damped(mesh, tg, b.scaled(r), init.state)
        ntr = neumann_trace(ur, mesh)
        gaps[i] = l2_sigma1_norm(ntr - nt0)
        rems[i] = l2_sigma1_norm(ntr - nt0 - r * nt_w0)
        log.debug("rho=%.4g gap=%.6g remainder=%.3g", r, gaps[i], rems[i])
    ratios = gaps / rho

    notes = []
    usable = np.flatnonzero(gaps >= 100.0 * floor)
    if usable.size >= 2:
        i1, i2 = usable[-2], usable[-1]
        r1, r2 = rho[i1], rho[i2]
        two_kappa_hat = (r1 * ratios[i2] - r2 * ratios[i1]) / (r1 - r2)
        extrapolated = True
    else:
        two_kappa_hat = ratios[usable[-1] if usable.size else -1]
        extrapolated = False
        notes.append("fewer than two usable rho values; extrapolation disabled")
        log.warning(notes[-1])
    kappa_hat = 0.5 * two_kappa_hat

    ok = ratios >= SAFETY * two_kappa_hat
    rho0 = 0.0
    for i in range(rho.size - 1, -1, -1):
        if not ok[i]:
            break
        rho0 = float(rho[i])

    besov_b = besov_half_norm(b)
    kappa_tilde = SAFETY * kappa_hat / besov_b
    cert = np.array([kappa_tilde * besov_half_norm(b.scaled(r)) for r in rho])

    return StabilityReport(
        rho_values=rho, gap_norms=gaps, ratios=ratios, remainder_norms=rems,
        kappa_hat=float(kappa_hat), kappa_ref=0.5 * two_kappa_ref,
        kappa_tilde=float(kappa_tilde), besov_b=besov_b, floor=floor,
        rho0_hat=rho0, certificate=cert, certified=cert <= gaps,
        slope_directional=_fit_window(rho, np.abs(ratios - two_kappa_ref),
                                      *directional_window),
        slope_remainder=_fit_window(rho, rems, *remainder_window),
        extrapolated=extrapolated, warnings=notes)


@dataclass(frozen=True, eq=False)
class Reconstruction:
    estimate: DampingField
    raw: np.ndarray
    clamped: np.ndarray
    unreliable: np.ndarray
    noise_floor: float = float("nan")


def reconstruct_b(mesh: DomainMesh, tg: TimeGrid, measured_gap: BoundaryTrace,
                  rho: float, u0_traj: WaveTrajectory, ridge: float = 0.0,
                  reliability: float = 1e-8) -> Reconstruction:
    """Per-node least squares in time for ``gap = -rho * b * du0/dt``.

    Nodes whose ``int (du0/dt)^2 dt`` falls below ``reliability`` times the
    largest one are marked unreliable and set to zero; negative estimates
    are clamped to zero and flagged.
    """
    if not rho > 0:
        raise ValueError(f"rho must be > 0, got {rho}")
    vel = velocity_trace(u0_traj, mesh).values
    w = tg.weights
    num = w @ (measured_gap.values * vel)
    den = w @ (vel**2)
    unreliable = den <= reliability * den.max(initial=0.0)
    if np.all(unreliable):
        raise ValueError("reference velocity vanishes on every gamma1 node")
    raw = np.where(unreliable, 0.0, -num / (rho * (den + ridge)))
    clamped = raw < 0
    est = np.where(clamped | unreliable, 0.0, raw)
    if clamped.any():
        log.info("clamped %d negative estimates to zero", int(clamped.sum()))
    return Reconstruction(estimate=DampingField(mesh, est), raw=raw,
                          clamped=clamped, unreliable=unreliable)


def noise_floor(level: float, peak: float, rho: float, tg: TimeGrid,
                u0_traj: WaveTrajectory, mesh: DomainMesh) -> np.ndarray:
    """Standard deviation of the per-node estimate under uniform noise of
    amplitude ``level * peak``."""
    vel = velocity_trace(u0_traj, mesh).values
    w = tg.weights
    sigma = level * peak / math.sqrt(3.0)
    return sigma * np.sqrt((w**2) @ vel**2) / (rho * (w @ vel**2))


@dataclass(frozen=True, eq=False)
class UniquenessVerdict:
    passed: bool
    certified: bool
    record: dict


def uniqueness_experiment(mesh: DomainMesh, tg: TimeGrid,
                          init: AdmissibleInitialData, b_true: DampingField,
                          tol: float = 1e-3, kappa_hat: float | None = None,
                          rho: float | None = None,
                          floor_factor: float = 10.0,
                          recon_tol: float = 0.1,
                          kappa_tilde: float | None = None) -> UniquenessVerdict:
    """Equal measurements force ``b = 0``; distinct ``b`` give distinct data.

    Zero branch: with ``b = 0`` the measured gap must sit at the
    discretization floor (``<= tol`` relative to ``||du0/dt||``) and the
    raw reconstruction must satisfy ``besov(b_hat) <= floor_factor *
    floor_b``.  ``floor_b = gap / kappa_tilde`` is the largest B-norm the
    Lipschitz bound lets a gap of the floor's size certify; ``kappa_tilde``
    defaults to ``SAFETY * ||b_true du0/dt|| / (2 besov(b_true))``, and to
    ``||du0/dt||`` when ``b_true`` vanishes.  Nonzero branch: the gap of
    ``b_true`` must exceed the lower bound ``kappa_hat * rho`` (or
    ``SAFETY * ||b_true du0/dt|| / 2`` without a sweep) and the
    reconstruction must match ``b_true`` within ``recon_tol`` in relative
    L2(gamma1).
    """
    rec = {"mode": init.mode, "vanishing_fraction": init.vanishing_fraction}
    if not init.admissible:
        rec["reason"] = "initial data not admissible on gamma1"
        return UniquenessVerdict(passed=False, certified=False, record=rec)

    u0 = reference_solution_u0(init, mesh, tg)
    nt0 = neumann_trace(u0, mesh)
    vel = velocity_trace(u0, mesh)
    scale = l2_sigma1_norm(vel)
    two_kappa_true = l2_sigma1_norm(vel.times_field(b_true.values))
    if kappa_tilde is None:
        kappa_tilde = (SAFETY * 0.5 * two_kappa_true / besov_half_norm(b_true)
                       if not b_true.is_zero else scale)

    gap0 = neumann_trace(solve_damped(mesh, tg, b_true.scaled(0.0), init.state), mesh) - nt0
    gap0_norm = l2_sigma1_norm(gap0)
    b0 = reconstruct_b(mesh, tg, gap0, 1.0, u0)
    floor_b = gap0_norm / kappa_tilde
    # raw estimate: clamping would hide a spurious negative b_hat
    b0_norm = besov_half_norm(b0.raw, mesh)
    zero_ok = gap0_norm <= tol * scale and b0_norm <= floor_factor * floor_b
    rec.update({
        "zero_gap_norm": gap0_norm,
        "zero_gap_relative": gap0_norm / scale,
        "kappa_tilde": kappa_tilde,
        "floor_b": floor_b,
        "zero_bhat_besov": b0_norm,
        "zero_bhat_bound": floor_factor * floor_b,
        "zero_branch_pass": bool(zero_ok),
    })

    nonzero_ok = True
    if not b_true.is_zero:
        gap = neumann_trace(solve_damped(mesh, tg, b_true, init.state), mesh) - nt0
        gap_norm = l2_sigma1_norm(gap)
        if kappa_hat is not None and rho is not None:
            bound = kappa_hat * rho
        else:
            bound = SAFETY * 0.5 * two_kappa_true
        bh = reconstruct_b(mesh, tg, gap, 1.0, u0)
        w = mesh.gamma1_weights
        err = math.sqrt(((bh.estimate.values - b_true.values) ** 2) @ w
                        / ((b_true.values**2) @ w))
        nonzero_ok = gap_norm > bound and err <= recon_tol
        rec.update({
            "gap_norm": gap_norm,
            "lower_bound": bound,
            "bhat_relative_error": err,
            "bhat_besov": besov_half_norm(bh.estimate),
            "b_true_besov": besov_half_norm(b_true),
            "nonzero_branch_pass": bool(nonzero_ok),
        })
    passed = bool(zero_ok and nonzero_ok)
    rec["passed"] = passed
    return UniquenessVerdict(passed=passed, certified=True, record=rec)
