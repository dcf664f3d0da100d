"""The acceptance checklist, one function per criterion.

Each check returns a :class:`CriterionResult` with the measured values and
the requirement they were held to.  ``quick=True`` swaps in coarse grids;
the coarse tolerances follow from the fine ones by the observed O(h^2)
scaling (a factor 4 per halving of n) and are listed in ``QUICK``.
"""
from __future__ import annotations

import filecmp
import logging
import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import TimeGrid, build_interval_mesh, build_rectangle_mesh
from .elliptic import eigen_decompose, vanishing_set_fraction
from .experiments import admissible_mode, reconstruction_run, smooth_bump
from .inverse import (loglog_slope, stability_sweep, uniqueness_experiment)
from .measure import BoundaryTrace
from .wave import (DampingField, WaveState, dissipation_identity_residual,
                   duhamel_spectral_solve, solve_damped, solve_neumann_forced)

__all__ = ["CriterionResult", "run_acceptance", "CRITERIA", "FULL", "QUICK",
           "RECON_2D_THRESHOLD"]

log = logging.getLogger(__name__)

TAU = 2.0
B_SCALAR = 0.5
TWO_KAPPA_1D = B_SCALAR * math.pi / math.sqrt(2.0)

# 2-D reconstruction thresholds, keyed by mesh size: twice the error of the
# same run on the 2x finer mesh (see CALIBRATION.md, scripts/calibrate_2d.py)
RECON_2D_THRESHOLD = {64: 1.1e-2, 32: 1.1e-2}

FULL = {
    "label": "full",
    "eig_ns": (64, 128, 256), "eig_tol": 1e-3,
    "fwd_n": 256, "fwd_ns": (64, 128, 256),
    "cross_ns": (64, 128, 256), "cross_tol": 1e-3,
    "sweep_n": 512,
    "uniq_n1": 256, "uniq_n2": 32,
    "rec_n1": 256, "rec_n2": 64,
    "van_n1": 256, "van_n2": 64, "van_modes": 6,
    "budget_s": 300.0,
}
QUICK = {
    "label": "quick",
    "eig_ns": (32, 64, 128), "eig_tol": 4e-3,
    "fwd_n": 128, "fwd_ns": (64, 128, 256),
    "cross_ns": (32, 64, 128), "cross_tol": 4e-3,
    "sweep_n": 128,
    "uniq_n1": 64, "uniq_n2": 16,
    "rec_n1": 64, "rec_n2": 32,
    "van_n1": 64, "van_n2": 32, "van_modes": 6,
    "budget_s": 30.0,
}

ENERGY_STEP_C = 0.05  # allowed per-step energy rise, in units of dt^2 E(0)
VANISHING_C = 1.0  # continuum bound for sin-type traces is 2/pi


@dataclass
class CriterionResult:
    id: int
    name: str
    passed: bool
    measured: dict
    required: str
    runtime_s: float = 0.0
    error: str | None = None
    timing: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        parts = ", ".join(f"{k}={_short(v)}" for k, v in self.measured.items())
        if self.error:
            parts = f"error: {self.error}" + (f"; {parts}" if parts else "")
        return f"[{status}] {self.id:>2} {self.name}: {parts} (required: {self.required})"


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return str(v)


def _slope_vs_n(ns, errs):
    """Observed order: slope of log err against log h."""
    return -loglog_slope(np.asarray(ns, dtype=float), np.asarray(errs))


# --- criteria ---------------------------------------------------------------

def c1_eigen(s, cfl):
    errs = []
    for n in s["eig_ns"]:
        basis = eigen_decompose(build_interval_mesh(n), 6)
        exact = ((np.arange(6) + 0.5) * np.pi) ** 2
        errs.append(float(np.max(np.abs(basis.lambdas - exact) / exact)))
    slope = _slope_vs_n(s["eig_ns"], errs)
    ok = errs[-1] <= s["eig_tol"] and abs(slope - 2.0) <= 0.2
    return ok, {"n": list(s["eig_ns"]), "max_rel_err": errs, "slope": slope}, \
        f"rel err <= {s['eig_tol']:g} at n={s['eig_ns'][-1]}, slope 2.0 +- 0.2, < 5 s"


def _forward_case(n, cfl, b):
    mesh = build_interval_mesh(n)
    tg = TimeGrid.from_cfl(TAU, mesh.h, cfl)
    init = admissible_mode(mesh, 0).state
    return mesh, tg, solve_damped(mesh, tg, DampingField.constant(mesh, b), init)


def c2_forward(s, cfl):
    _, tg, tr0 = _forward_case(s["fwd_n"], cfl, 0.0)
    drift = float(np.max(np.abs(tr0.energy / tr0.energy[0] - 1.0)))
    mesh, tg, tr = _forward_case(s["fwd_n"], cfl, B_SCALAR)
    rise = float(np.max(np.diff(tr.energy)) / (tg.dt**2 * tr.energy[0]))
    res = []
    for n in s["fwd_ns"]:
        m, _, t = _forward_case(n, cfl, B_SCALAR)
        res.append(dissipation_identity_residual(t, DampingField.constant(m, B_SCALAR)))
    order = _slope_vs_n(s["fwd_ns"], res)
    ok = drift <= 1e-4 and rise <= ENERGY_STEP_C and order >= 1.8
    return ok, {"drift_b0": drift, "max_step_rise_over_dt2E0": rise,
                "dissipation_residual": res, "residual_order": order}, \
        f"drift <= 1e-4, step rise <= {ENERGY_STEP_C:g} dt^2 E0, order >= 1.8, < 30 s"


def _cross_gaps(n, cfl):
    """Max-in-time L2 gaps FD vs spectral: forced, multi-mode free, bump free."""
    mesh = build_interval_mesh(n)
    tg = TimeGrid.from_cfl(TAU, mesh.h, cfl)
    basis = eigen_decompose(mesh, n)  # every discrete mode
    w = mesh.weights

    def gap(a, b):
        return float(np.sqrt(np.max(((a.u - b.u) ** 2) @ w)))

    zero = WaveState.zeros(mesh)
    g = BoundaryTrace.from_function(lambda t, y: np.sin(3.0 * t), tg, mesh)
    forced = gap(solve_neumann_forced(mesh, tg, g, zero),
                 duhamel_spectral_solve(basis, tg, g, zero))

    g0 = BoundaryTrace.zeros(tg, mesh)
    x = mesh.nodes[:, 0]
    out = [forced]
    for u0 in (basis.phi[0] + 0.5 * basis.phi[1] + 0.25 * basis.phi[2], smooth_bump(x)):
        init = WaveState(u0, np.zeros_like(x))
        out.append(gap(solve_damped(mesh, tg, DampingField.constant(mesh, 0.0), init),
                       duhamel_spectral_solve(basis, tg, g0, init)))
    return out


def c3_cross_oracle(s, cfl):
    gaps = np.array([_cross_gaps(n, cfl) for n in s["cross_ns"]])
    slopes = [_slope_vs_n(s["cross_ns"], gaps[:, j]) for j in range(3)]
    tol = s["cross_tol"]
    # the steep bump is a diagnostic: its order is gated, its size is not
    ok = min(slopes) >= 1.8 and gaps[-1, :2].max() <= tol
    return ok, {"gap_forced": gaps[:, 0].tolist(), "gap_zero_forcing": gaps[:, 1].tolist(),
                "gap_bump": gaps[:, 2].tolist(), "slope_forced": slopes[0],
                "slope_zero_forcing": slopes[1], "slope_bump": slopes[2]}, \
        f"slopes >= 1.8; forced and multi-mode gaps <= {tol:g} at n={s['cross_ns'][-1]}"


class _SweepCache:
    def __init__(self):
        self.store = {}

    def get(self, n, cfl):
        key = (n, cfl)
        if key not in self.store:
            mesh = build_interval_mesh(n)
            tg = TimeGrid.from_cfl(TAU, mesh.h, cfl)
            b = DampingField.constant(mesh, B_SCALAR)
            self.store[key] = stability_sweep(mesh, tg, b, admissible_mode(mesh, 0))
        return self.store[key]


def c4_directional(s, cfl, cache):
    rep = cache.get(s["sweep_n"], cfl)
    rel = abs(2.0 * rep.kappa_hat - TWO_KAPPA_1D) / TWO_KAPPA_1D
    ok = abs(rep.slope_directional - 1.0) <= 0.2 and rel <= 0.02
    return ok, {"n": s["sweep_n"], "slope": rep.slope_directional,
                "two_kappa_hat": 2.0 * rep.kappa_hat, "two_kappa_closed_form": TWO_KAPPA_1D,
                "rel_err": rel}, "slope 1.0 +- 0.2, 2 kappa_hat within 2% of b pi / sqrt 2"


def c5_remainder(s, cfl, cache):
    rep = cache.get(s["sweep_n"], cfl)
    sel = rep.rho_values >= 6.25e-3 * (1 - 1e-12)
    span = math.log10(rep.rho_values[sel].max() / rep.rho_values[sel].min())
    above = bool(np.all(rep.remainder_norms[sel] > 10.0 * rep.floor))
    ok = rep.slope_remainder >= 1.8 and span >= 1.0 and above
    return ok, {"slope": rep.slope_remainder, "decades": span, "floor": rep.floor,
                "min_remainder_in_window": float(rep.remainder_norms[sel].min())}, \
        "slope >= 1.8 over >= 1 decade, every point > 10x floor"


def c6_certificate(s, cfl, cache):
    rep = cache.get(s["sweep_n"], cfl)
    ok = rep.certificate_holds and rep.rho0_hat > 0
    margin = float(np.min(rep.gap_norms / rep.certificate))
    return ok, {"rho0_hat": rep.rho0_hat, "kappa_tilde": rep.kappa_tilde,
                "min_gap_over_bound": margin}, \
        "kappa_tilde besov(rho b) <= gap for all rho <= rho0_hat, rho0_hat > 0"


def _uniqueness(mesh, cfl, b):
    tg = TimeGrid.from_cfl(TAU, mesh.h, cfl)
    init = admissible_mode(mesh, 0)
    rep = stability_sweep(mesh, tg, b, init)
    rho = 0.01
    return uniqueness_experiment(mesh, tg, init, b.scaled(rho),
                                 kappa_hat=rep.kappa_hat, rho=rho,
                                 kappa_tilde=rep.kappa_tilde)


def c7_uniqueness(s, cfl):
    m1 = build_interval_mesh(s["uniq_n1"])
    v1 = _uniqueness(m1, cfl, DampingField.constant(m1, B_SCALAR))
    m2 = build_rectangle_mesh(s["uniq_n2"], s["uniq_n2"])
    y = m2.gamma1_coords[:, 0]
    v2 = _uniqueness(m2, _cfl_2d(cfl), DampingField(m2, 0.3 + 0.2 * np.sin(np.pi * y)))
    meas = {}
    for tag, v in (("1d", v1), ("2d", v2)):
        r = v.record
        meas.update({f"{tag}_zero_bhat": r["zero_bhat_besov"],
                     f"{tag}_zero_bound": r["zero_bhat_bound"],
                     f"{tag}_gap": r["gap_norm"], f"{tag}_kappa_rho": r["lower_bound"]})
    return v1.passed and v2.passed, meas, \
        "b=0: besov(b_hat) <= 10x floor; b!=0: gap > kappa_hat rho (both domains)"


def _cfl_2d(cfl):
    # same ratio as the config defaults (0.9 in 1-D, 0.6 in 2-D)
    return cfl * 2.0 / 3.0


def c8_reconstruction(s, cfl, noise_level, seed):
    m1 = build_interval_mesh(s["rec_n1"])
    tg1 = TimeGrid.from_cfl(TAU, m1.h, cfl)
    r1 = reconstruction_run(m1, tg1, DampingField.constant(m1, B_SCALAR),
                            admissible_mode(m1, 0), 0.01, noise_level, seed)
    n2 = s["rec_n2"]
    m2 = build_rectangle_mesh(n2, n2)
    tg2 = TimeGrid.from_cfl(TAU, m2.h, _cfl_2d(cfl))
    y = m2.gamma1_coords[:, 0]
    r2 = reconstruction_run(m2, tg2, DampingField(m2, 0.3 + 0.2 * np.sin(np.pi * y)),
                            admissible_mode(m2, 0), 0.01, noise_level, seed)
    thr = RECON_2D_THRESHOLD[n2]
    noise_ok = all(
        r.noisy is None or abs(r.noisy_error - r.error) <= 5.0 * r.noise_floor_rel
        for r in (r1, r2))
    ok = r1.error <= 0.05 and r2.error <= thr and noise_ok
    return ok, {"err_1d": r1.error, "err_2d": r2.error, "threshold_2d": thr,
                "noisy_err_1d": r1.noisy_error, "noise_factor_1d": r1.noise_factor,
                "noise_floor_1d": r1.noise_floor_rel,
                "noisy_err_2d": r2.noisy_error, "noise_factor_2d": r2.noise_factor,
                "noise_floor_2d": r2.noise_floor_rel}, \
        f"1-D err <= 0.05; 2-D err <= {thr:g}; |noisy - clean| <= 5 noise floor"


def c9_vanishing(s, cfl):
    meas, ok = {}, True
    eps_list = (1e-2, 1e-3, 1e-4)
    for tag, mesh in (("1d", build_interval_mesh(s["van_n1"])),
                      ("2d", build_rectangle_mesh(s["van_n2"], s["van_n2"]))):
        basis = eigen_decompose(mesh, s["van_modes"])
        fr = [vanishing_set_fraction(p, mesh, 1e-3) for p in basis.phi]
        worst = max(max(vanishing_set_fraction(p, mesh, e, "length") / e for e in eps_list)
                    for p in basis.phi)
        meas[f"{tag}_max_node_fraction"] = max(fr)
        meas[f"{tag}_max_length_fraction_over_eps"] = worst
        ok = ok and max(fr) <= 0.05 and worst <= VANISHING_C
    return ok, meas, f"node fraction <= 0.05 at eps=1e-3; length fraction <= {VANISHING_C:g} eps"


def c10_determinism(s, cfl, elapsed):
    """Run the numeric commands twice and compare every output byte."""
    from .cli import run_command
    from .config import parse_config
    from .report import MANIFEST

    cfg = parse_config({"domain": {"dim": 1, "n": 64}, "time": {"cfl_factor": min(cfl, 0.9)},
                        "sweep": {"rho": [0.1, 0.05, 0.025, 0.0125]},
                        "reconstruct": {"rho_scan": [0.05, 0.01, 0.002]}})
    same, checked = True, 0
    with tempfile.TemporaryDirectory() as tmp:
        for cmd in ("eigen", "forward", "sweep", "reconstruct"):
            dirs = [Path(tmp) / f"{cmd}{i}" for i in (0, 1)]
            for d in dirs:
                run_command(cmd, cfg.with_output(d), oracle=True)
            names = sorted(p.name for p in dirs[0].iterdir() if p.name != MANIFEST)
            other = sorted(p.name for p in dirs[1].iterdir() if p.name != MANIFEST)
            _, mismatch, errors = filecmp.cmpfiles(dirs[0], dirs[1], names, shallow=False)
            same = same and names == other and not mismatch and not errors
            checked += len(names)
    return same, {"files_compared": checked, "identical": same}, \
        f"byte-identical reruns; suite < {s['budget_s']:g} s"


CRITERIA = {
    1: "eigen-oracle",
    2: "forward conservation/dissipation",
    3: "cross-oracle equivalence",
    4: "directional derivative",
    5: "remainder order",
    6: "Lipschitz lower bound",
    7: "uniqueness",
    8: "reconstruction",
    9: "admissibility / vanishing set",
    10: "determinism and runtime",
}

_RUNTIME_LIMIT = {1: 5.0, 2: 30.0}


def run_acceptance(quick: bool = False, cfl: float = 0.9, noise_level: float = 0.01,
                   seed: int = 20240611, only=None, echo=None) -> list[CriterionResult]:
    """Run the checklist; ``echo`` (e.g. ``print``) gets one line per criterion."""
    s = QUICK if quick else FULL
    cache = _SweepCache()
    calls = {
        1: lambda: c1_eigen(s, cfl),
        2: lambda: c2_forward(s, cfl),
        3: lambda: c3_cross_oracle(s, cfl),
        4: lambda: c4_directional(s, cfl, cache),
        5: lambda: c5_remainder(s, cfl, cache),
        6: lambda: c6_certificate(s, cfl, cache),
        7: lambda: c7_uniqueness(s, cfl),
        8: lambda: c8_reconstruction(s, cfl, noise_level, seed),
        9: lambda: c9_vanishing(s, cfl),
    }
    results = []
    t_suite = time.perf_counter()
    ids = sorted(CRITERIA) if only is None else sorted(only)
    for cid in ids:
        t0 = time.perf_counter()
        try:
            if cid == 10:
                ok, meas, req = c10_determinism(s, cfl, None)
            else:
                ok, meas, req = calls[cid]()
            err = None
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            ok, meas, req, err = False, {}, "runs without numerical failure", \
                f"{type(exc).__name__}: {exc}"
        dt = time.perf_counter() - t0
        timing = {"runtime_s": dt}
        if cid in _RUNTIME_LIMIT:
            ok = ok and dt < _RUNTIME_LIMIT[cid]
        if cid == 10:
            total = time.perf_counter() - t_suite
            timing["suite_s"] = total
            ok = ok and total < s["budget_s"]
        res = CriterionResult(cid, CRITERIA[cid], bool(ok), meas, req, dt, err, timing)
        results.append(res)
        if echo is not None:
            echo(res.line() + f" [{dt:.2f} s]")
    return results
