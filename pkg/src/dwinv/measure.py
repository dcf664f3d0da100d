"""Boundary measurements on gamma1 x (0, tau) and the norms used to size them."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .domain import DomainMesh, TimeGrid, integrate_sigma1, normal_derivative

__all__ = [
    "BoundaryTrace",
    "neumann_trace",
    "velocity_trace",
    "l2_sigma1_norm",
    "besov_half_norm",
    "add_noise",
    "write_trace_csv",
    "read_trace_csv",
    "FLOAT_FMT",
]

FLOAT_FMT = ".17g"


@dataclass(frozen=True, eq=False)
class BoundaryTrace:
    """Values on gamma1 nodes at every sample of a time grid.

    ``values`` has shape ``(n_steps + 1, n_gamma1)``.
    """

    values: np.ndarray
    time_grid: TimeGrid
    mesh: DomainMesh

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        expected = (self.time_grid.n_samples, len(self.mesh.gamma1))
        if vals.shape != expected:
            raise ValueError(f"trace shape {vals.shape}, expected {expected}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, func, time_grid, mesh):
        """Sample ``func(t, y)`` (``y`` = tangential coordinate, ``None`` in 1-D)."""
        t = time_grid.times[:, None]
        y = None if mesh.dim == 1 else mesh.gamma1_coords[:, 0][None, :]
        vals = np.broadcast_to(func(t, y), (t.size, len(mesh.gamma1)))
        return cls(np.array(vals, dtype=float), time_grid, mesh)

    @classmethod
    def zeros(cls, time_grid, mesh):
        return cls(np.zeros((time_grid.n_samples, len(mesh.gamma1))), time_grid, mesh)

    def _like(self, values):
        return BoundaryTrace(values, self.time_grid, self.mesh)

    def __add__(self, other):
        return self._like(self.values + other.values)

    def __sub__(self, other):
        return self._like(self.values - other.values)

    def __mul__(self, alpha):
        return self._like(alpha * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return self._like(-self.values)

    def times_field(self, field):
        """Pointwise product with a per-node field (e.g. a damping profile)."""
        return self._like(self.values * np.asarray(field)[None, :])


def neumann_trace(traj, mesh: DomainMesh | None = None) -> BoundaryTrace:
    """Measured ``du/dnu`` on gamma1 from the 3-point one-sided stencil.

    Uses interior values only, never the boundary condition the solver
    imposed.
    """
    mesh = traj.mesh if mesh is None else mesh
    return BoundaryTrace(normal_derivative(traj.u, mesh, 3), traj.time_grid, mesh)


def velocity_trace(traj, mesh: DomainMesh | None = None) -> BoundaryTrace:
    mesh = traj.mesh if mesh is None else mesh
    return BoundaryTrace(np.asarray(traj.v)[:, mesh.gamma1], traj.time_grid, mesh)


def l2_sigma1_norm(trace: BoundaryTrace) -> float:
    return math.sqrt(integrate_sigma1(trace))


def besov_half_norm(b, mesh: DomainMesh | None = None) -> float:
    """Discrete surrogate of the B_{1/2,1}(gamma1) norm.

    In 1-D gamma1 is a point and the norm is ``|b|``.  In 2-D the side
    values are extended by zero at the corners and oddly reflected to a
    sequence of period 2; the result is ``sum (1 + xi^2)^{1/4} |c_n|`` over
    normalized DFT coefficients ``c_n`` at angular frequencies ``xi = pi n``.
    """
    vals = np.asarray(getattr(b, "values", b), dtype=float)
    mesh = getattr(b, "mesh", mesh)
    if mesh is None:
        raise ValueError("mesh required for raw damping values")
    if mesh.dim == 1:
        return float(np.abs(vals).sum())
    ext = np.concatenate([[0.0], vals, [0.0], -vals[::-1]])
    N = ext.size
    coeffs = np.fft.fft(ext) / N
    xi = 2.0 * np.pi * np.fft.fftfreq(N, d=2.0 / N)
    return float(np.sum((1.0 + xi**2) ** 0.25 * np.abs(coeffs)))


def add_noise(trace: BoundaryTrace, level: float, seed: int) -> BoundaryTrace:
    """Add i.i.d. uniform noise of amplitude ``level * max|trace|``."""
    if level < 0:
        raise ValueError(f"noise level must be >= 0, got {level}")
    if level == 0:
        return trace._like(trace.values.copy())
    rng = np.random.default_rng(seed)
    amp = level * np.abs(trace.values).max(initial=0.0)
    return trace._like(trace.values + rng.uniform(-amp, amp, trace.values.shape))


def write_trace_csv(trace: BoundaryTrace, fh) -> None:
    """RFC-4180 CSV: a ``#`` comment with node coordinates, header, rows."""
    coords = trace.mesh.nodes[trace.mesh.gamma1]
    fh.write("# gamma1 nodes: " + " ".join(
        "(" + ",".join(format(c, FLOAT_FMT) for c in row) + ")" for row in coords) + "\r\n")
    w = csv.writer(fh, lineterminator="\r\n")
    w.writerow(["t"] + [f"node{j}" for j in range(coords.shape[0])])
    for t, row in zip(trace.time_grid.times, trace.values):
        w.writerow([format(t, FLOAT_FMT)] + [format(x, FLOAT_FMT) for x in row])


def read_trace_csv(fh, mesh: DomainMesh, time_grid: TimeGrid | None = None) -> BoundaryTrace:
    """Inverse of :func:`write_trace_csv`; the time grid is rebuilt from ``t``."""
    text = fh.read() if hasattr(fh, "read") else str(fh)
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(io.StringIO("\n".join(lines))))
    data = np.array([[float(x) for x in r] for r in rows[1:]])
    if time_grid is None:
        t = data[:, 0]
        time_grid = TimeGrid.from_steps(t[-1], t.size - 1)
    return BoundaryTrace(data[:, 1:], time_grid, mesh)
