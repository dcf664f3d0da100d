"""Mixed Dirichlet/Neumann Laplacian: assembly, eigenpairs, harmonic lifting.

The Neumann side is closed with a reflected ghost node.  Written in weighted
form ``W u'' = S u + P^T (omega * g)`` the stiffness ``S`` is exactly
symmetric, ``W`` holds the trapezoid weights of the unknowns, and
``omega`` the gamma1 quadrature weights.  The plain finite-difference
operator is ``L = W^{-1} S``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain import DomainMesh

__all__ = [
    "MixedLaplacian",
    "EigenBasis",
    "HarmonicExtension",
    "TimeLift",
    "EigenSolverError",
    "assemble_mixed_laplacian",
    "eigen_decompose",
    "harmonic_extend",
    "extend_time_dependent",
    "vanishing_set_fraction",
    "second_time_derivative",
]

log = logging.getLogger(__name__)


class EigenSolverError(RuntimeError):
    pass


def _mixed_1d(n, h):
    """Integer stencil for ``u(0) = 0, u'(1) = 0`` on nodes 1..n, plus weights."""
    main = np.full(n, -2.0)
    main[-1] = -1.0
    T = sp.diags([np.ones(n - 1), main, np.ones(n - 1)], [-1, 0, 1], format="csr")
    w = np.full(n, h)
    w[-1] = 0.5 * h
    return T / h, w


def _dirichlet_1d(n, h):
    """Stencil for ``u(0) = u(1) = 0`` on nodes 1..n-1."""
    m = n - 1
    T = sp.diags([np.ones(m - 1), np.full(m, -2.0), np.ones(m - 1)], [-1, 0, 1],
                 format="csr")
    return T / h, np.full(m, h)


@dataclass(frozen=True, eq=False)
class MixedLaplacian:
    """Discrete Laplacian on the unknowns (interior and gamma1 nodes)."""

    mesh: DomainMesh
    stiffness: sp.csr_matrix  # symmetric S
    mass: np.ndarray  # trapezoid weights W of the unknowns
    gamma1_pos: np.ndarray  # positions of gamma1 nodes within the unknowns
    factors: tuple  # 1-D factors (S_axis, w_axis) per axis

    @property
    def n_dofs(self) -> int:
        return self.mass.size

    @property
    def matrix(self) -> sp.csr_matrix:
        """The finite-difference operator ``L = W^{-1} S``."""
        return sp.diags(1.0 / self.mass) @ self.stiffness

    def apply(self, u_dofs):
        """``L u`` for one or more vectors (unknowns on the last axis)."""
        u = np.asarray(u_dofs, dtype=float)
        flat = u.reshape(-1, self.n_dofs)
        return ((self.stiffness @ flat.T).T / self.mass).reshape(u.shape)

    def boundary_load(self, g):
        """Weighted load ``P^T (omega * g)`` of Neumann data ``g`` on gamma1."""
        g = np.asarray(g, dtype=float)
        out = np.zeros(g.shape[:-1] + (self.n_dofs,))
        out[..., self.gamma1_pos] = g * self.mesh.gamma1_weights
        return out

    def restrict(self, values):
        return np.asarray(values)[..., self.mesh.dofs]

    def prolong(self, u_dofs):
        u_dofs = np.asarray(u_dofs)
        out = np.zeros(u_dofs.shape[:-1] + (self.mesh.n_nodes,))
        out[..., self.mesh.dofs] = u_dofs
        return out

    def apply_nodes(self, values):
        """Apply ``L`` to a nodal vector (gamma0 values are ignored)."""
        return self.prolong(self.apply(self.restrict(values)))


@lru_cache(maxsize=32)
def assemble_mixed_laplacian(mesh: DomainMesh) -> MixedLaplacian:
    """Second-order 3-/5-point Laplacian with Dirichlet rows eliminated and
    the Neumann side closed by ghost-node reflection."""
    if mesh.dim == 1:
        (n,), (h,) = (mesh.shape[0] - 1,), mesh.spacing
        Sx, wx = _mixed_1d(n, h)
        factors = ((Sx, wx),)
        S, w = Sx, wx
        gpos = np.array([n - 1])
    else:
        nx, ny = mesh.shape[0] - 1, mesh.shape[1] - 1
        hx, hy = mesh.spacing
        Sx, wx = _mixed_1d(nx, hx)
        Sy, wy = _dirichlet_1d(ny, hy)
        factors = ((Sx, wx), (Sy, wy))
        S = (sp.kron(Sx, sp.diags(wy)) + sp.kron(sp.diags(wx), Sy)).tocsr()
        w = np.kron(wx, wy)
        gpos = (nx - 1) * (ny - 1) + np.arange(ny - 1)
    S.sort_indices()
    return MixedLaplacian(mesh=mesh, stiffness=S.tocsr(), mass=w,
                          gamma1_pos=gpos, factors=factors)


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Eigenpairs of ``-L`` sorted ascending, orthonormal in the trapezoid
    inner product.  ``phi`` rows are nodal vectors (zero on gamma0)."""

    mesh: DomainMesh
    lambdas: np.ndarray
    phi: np.ndarray
    labels: np.ndarray  # per-axis mode numbers, shape (K, dim)

    @property
    def count(self) -> int:
        return self.lambdas.size

    def gram(self) -> np.ndarray:
        return (self.phi * self.mesh.weights) @ self.phi.T

    def project(self, f):
        """Expansion coefficients of nodal vector(s) ``f``."""
        return (np.asarray(f) * self.mesh.weights) @ self.phi.T

    def synthesize(self, coeffs):
        return np.asarray(coeffs) @ self.phi

    def residuals(self) -> np.ndarray:
        """Max-norm of ``L phi_k + lambda_k phi_k`` over the unknowns."""
        op = assemble_mixed_laplacian(self.mesh)
        r = op.apply_nodes(self.phi) + self.lambdas[:, None] * self.phi
        return np.abs(r).max(axis=1)

    def to_csv_rows(self):
        for k in range(self.count):
            yield [k, self.lambdas[k], *self.phi[k]]


def _tridiag_eigs(S, w, count):
    """Eigenpairs of ``-S phi = lam W phi`` via the symmetrized tridiagonal."""
    d = -S.diagonal() / w
    e = -S.diagonal(1) / np.sqrt(w[:-1] * w[1:])
    try:
        lam, psi = sla.eigh_tridiagonal(d, e, select="i",
                                        select_range=(0, count - 1))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenSolverError(
            f"tridiagonal eigensolver failed (size {d.size}, {count} pairs): {exc}"
        ) from exc
    return lam, psi / np.sqrt(w)[:, None]


def eigen_decompose(mesh: DomainMesh, K: int) -> EigenBasis:
    """First ``K`` eigenpairs of the mixed Laplacian.

    Signs are fixed so the x-factor is positive on gamma1 and, in 2-D, the
    y-factor is positive at the first interior node.
    """
    op = assemble_mixed_laplacian(mesh)
    if not 1 <= K <= op.n_dofs:
        raise ValueError(f"K must lie in [1, {op.n_dofs}], got {K}")

    if mesh.dim == 1:
        (Sx, wx), = op.factors
        lam, vecs = _tridiag_eigs(Sx, wx, K)
        vecs = vecs * np.sign(vecs[-1])
        labels = np.arange(K)[:, None]
        dof_vecs = vecs.T
    else:
        (Sx, wx), (Sy, wy) = op.factors
        mx, my = min(K, wx.size), min(K, wy.size)
        lx, vx = _tridiag_eigs(Sx, wx, mx)
        ly, vy = _tridiag_eigs(Sy, wy, my)
        vx = vx * np.sign(vx[-1])
        vy = vy * np.sign(vy[0])
        total = np.add.outer(lx, ly).ravel()
        order = np.argsort(total, kind="stable")[:K]
        im, jn = np.unravel_index(order, (mx, my))
        lam = total[order]
        labels = np.column_stack([im, jn + 1])
        dof_vecs = np.einsum("ak,bk->kab", vx[:, im], vy[:, jn]).reshape(K, -1)

    phi = op.prolong(dof_vecs)
    basis = EigenBasis(mesh=mesh, lambdas=lam, phi=phi, labels=labels)
    log.debug("eigen_decompose %s K=%d lambda_0=%.6g", mesh.describe(), K, lam[0])
    return basis


@dataclass(frozen=True, eq=False)
class HarmonicExtension:
    boundary_data: np.ndarray
    w: np.ndarray
    residual: float


@lru_cache(maxsize=32)
def _stiffness_solver(mesh):
    op = assemble_mixed_laplacian(mesh)
    return spla.factorized(op.stiffness.tocsc())


def harmonic_extend(mesh: DomainMesh, h) -> HarmonicExtension:
    """Solve ``Lap w = 0``, ``w = 0`` on gamma0, ``dw/dnu = h`` on gamma1."""
    h = np.asarray(h, dtype=float)
    if h.shape != (len(mesh.gamma1),):
        raise ValueError(f"expected {len(mesh.gamma1)} gamma1 values, got {h.shape}")
    op = assemble_mixed_laplacian(mesh)
    load = op.boundary_load(h)
    w = _stiffness_solver(mesh)(-load)
    if not np.all(np.isfinite(w)):
        raise np.linalg.LinAlgError("harmonic extension solve produced non-finite values")
    resid = float(np.abs(op.stiffness @ w + load).max())
    return HarmonicExtension(boundary_data=h, w=op.prolong(w), residual=resid)


@dataclass(frozen=True, eq=False)
class TimeLift:
    """Lifted boundary data ``G(t)`` with its first two time derivatives."""

    G: np.ndarray
    dG: np.ndarray
    d2G: np.ndarray


def second_time_derivative(f, dt):
    """Centered second difference along axis 0, second-order one-sided ends."""
    f = np.asarray(f, dtype=float)
    out = np.empty_like(f)
    if f.shape[0] < 4:
        raise ValueError("need at least 4 time samples")
    out[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / dt**2
    out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / dt**2
    out[-1] = (2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]) / dt**2
    return out


def extend_time_dependent(mesh: DomainMesh, g) -> TimeLift:
    """Lift a boundary trace to ``G(t)`` sample by sample.

    Time derivatives are taken on the lifted field, which commutes with the
    (linear, time-independent) lifting up to round-off.
    """
    vals = np.asarray(g.values, dtype=float)
    op = assemble_mixed_laplacian(mesh)
    solve = _stiffness_solver(mesh)
    load = op.boundary_load(vals)
    G = np.empty((vals.shape[0], op.n_dofs))
    for n in range(vals.shape[0]):
        G[n] = solve(-load[n])
    G = op.prolong(G)
    dt = g.time_grid.dt
    dG = np.gradient(G, dt, axis=0, edge_order=2)
    return TimeLift(G=G, dG=dG, d2G=second_time_derivative(G, dt))


def _sub_threshold_length(p, thr):
    """Length of ``{s : |p(s)| < thr}`` for piecewise-linear ``p`` on unit spacing."""
    a, b = p[:-1], p[1:]
    total = 0.0
    for pa, pb in zip(a, b):
        if pa == pb:
            total += 1.0 if abs(pa) < thr else 0.0
            continue
        s1 = (-thr - pa) / (pb - pa)
        s2 = (thr - pa) / (pb - pa)
        lo, hi = max(0.0, min(s1, s2)), min(1.0, max(s1, s2))
        total += max(0.0, hi - lo)
    return total


def vanishing_set_fraction(phi, mesh: DomainMesh, eps: float = 1e-3,
                           measure: str = "nodes") -> float:
    """Fraction of gamma1 on which ``|phi| < eps * max_gamma1 |phi|``.

    ``measure="nodes"`` counts gamma1 nodes.  ``measure="length"`` measures
    the sub-threshold set of the piecewise-linear interpolant along the
    closed side (corner values included), which resolves sets narrower than
    one cell.  Returns 1.0 with a warning when ``phi`` vanishes on gamma1.
    """
    if not eps > 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    phi = np.asarray(phi, dtype=float)
    trace = phi[mesh.gamma1]
    peak = np.abs(trace).max()
    if peak == 0.0:
        warnings.warn("phi vanishes identically on gamma1", RuntimeWarning,
                      stacklevel=2)
        return 1.0
    thr = eps * peak
    if measure == "nodes" or mesh.dim == 1:
        return float(np.mean(np.abs(trace) < thr))
    if measure != "length":
        raise ValueError(f"unknown measure {measure!r}")
    # corners belong to gamma0, where phi is zero
    full = np.concatenate([[0.0], trace, [0.0]])
    return _sub_threshold_length(full, thr) / (full.size - 1)
