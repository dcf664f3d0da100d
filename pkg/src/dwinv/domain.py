"""Uniform grids on the unit interval and unit square, with the boundary
split into a clamped part (``gamma0``) and a damped part (``gamma1``).

Node numbering in 2-D is ``idx = i * (ny + 1) + j`` with ``x = i * hx`` and
``y = j * hy``.  The damped side is ``x = 1`` without its two corners.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DomainMesh",
    "TimeGrid",
    "build_interval_mesh",
    "build_rectangle_mesh",
    "trapezoid_weights",
    "integrate_gamma1",
    "integrate_sigma1",
    "normal_derivative",
]


def _frozen(a):
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DomainMesh:
    """Discretized domain with its boundary partition.

    ``dofs`` lists the nodes carrying unknowns (interior and ``gamma1``);
    ``gamma0`` nodes are pinned to zero.
    """

    dim: int
    shape: tuple  # nodes per axis, e.g. (n+1,) or (nx+1, ny+1)
    spacing: tuple  # (h,) or (hx, hy)
    nodes: np.ndarray
    interior_mask: np.ndarray
    gamma0: np.ndarray
    gamma1: np.ndarray
    outward_normal: np.ndarray  # one row per gamma1 node
    dofs: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        return min(self.spacing)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def boundary(self) -> np.ndarray:
        return np.flatnonzero(~self.interior_mask)

    @property
    def gamma1_coords(self) -> np.ndarray:
        """Tangential coordinate of each damped node (empty columns in 1-D)."""
        if self.dim == 1:
            return np.zeros((len(self.gamma1), 0))
        return self.nodes[self.gamma1, 1:2]

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid weights for integrals over the whole domain."""
        return trapezoid_weights(self)

    @property
    def gamma1_weights(self) -> np.ndarray:
        """Quadrature weights on gamma1; corner values count as zero."""
        if self.dim == 1:
            return np.ones(1)
        return np.full(len(self.gamma1), self.spacing[1])

    def grid(self, values):
        """Reshape a nodal vector onto the tensor grid (last axis = nodes)."""
        values = np.asarray(values)
        return values.reshape(values.shape[:-1] + self.shape)

    def describe(self) -> str:
        if self.dim == 1:
            return f"interval n_cells={self.shape[0] - 1}"
        return f"rectangle nx={self.shape[0] - 1} ny={self.shape[1] - 1}"


def build_interval_mesh(n_cells: int) -> DomainMesh:
    """Mesh of ``[0, 1]`` with ``x = 0`` clamped and ``x = 1`` damped."""
    if int(n_cells) != n_cells or n_cells < 2:
        raise ValueError(f"n_cells must be an integer >= 2, got {n_cells!r}")
    n = int(n_cells)
    x = np.linspace(0.0, 1.0, n + 1)
    interior = np.ones(n + 1, dtype=bool)
    interior[[0, n]] = False
    return DomainMesh(
        dim=1,
        shape=(n + 1,),
        spacing=(1.0 / n,),
        nodes=_frozen(x[:, None]),
        interior_mask=_frozen(interior),
        gamma0=_frozen(np.array([0])),
        gamma1=_frozen(np.array([n])),
        outward_normal=_frozen(np.array([[1.0]])),
        dofs=_frozen(np.arange(1, n + 1)),
    )


def build_rectangle_mesh(nx: int, ny: int) -> DomainMesh:
    """Tensor grid of ``[0, 1]^2``; gamma1 is the open side ``x = 1``."""
    for name, val in (("nx", nx), ("ny", ny)):
        if int(val) != val or val < 2:
            raise ValueError(f"{name} must be an integer >= 2, got {val!r}")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(0.0, 1.0, nx + 1)
    ys = np.linspace(0.0, 1.0, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)

    interior = np.zeros((nx + 1, ny + 1), dtype=bool)
    interior[1:-1, 1:-1] = True
    gamma1 = idx[nx, 1:ny]
    on_boundary = ~interior.ravel()
    g1 = np.zeros_like(on_boundary)
    g1[gamma1] = True
    gamma0 = np.flatnonzero(on_boundary & ~g1)
    dofs = idx[1:, 1:ny].ravel()
    normals = np.tile([1.0, 0.0], (len(gamma1), 1))
    return DomainMesh(
        dim=2,
        shape=(nx + 1, ny + 1),
        spacing=(1.0 / nx, 1.0 / ny),
        nodes=_frozen(nodes),
        interior_mask=_frozen(interior.ravel()),
        gamma0=_frozen(gamma0),
        gamma1=_frozen(gamma1),
        outward_normal=_frozen(normals),
        dofs=_frozen(dofs),
    )


def _axis_weights(n_nodes, h):
    w = np.full(n_nodes, h)
    w[[0, -1]] = 0.5 * h
    return w


def trapezoid_weights(mesh: DomainMesh) -> np.ndarray:
    """Composite-trapezoid weights over the domain, one per node."""
    parts = [_axis_weights(n, h) for n, h in zip(mesh.shape, mesh.spacing)]
    w = parts[0]
    for p in parts[1:]:
        w = np.multiply.outer(w, p)
    return w.ravel()


def integrate_gamma1(f, mesh: DomainMesh) -> float:
    """Trapezoid approximation of the integral of ``f`` over gamma1."""
    f = np.asarray(f, dtype=float)
    if f.shape[-1:] != (len(mesh.gamma1),):
        raise ValueError(
            f"expected {len(mesh.gamma1)} gamma1 values, got shape {f.shape}"
        )
    return f @ mesh.gamma1_weights


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time samples ``t_n = n * dt`` on ``[0, tau]``."""

    tau: float
    dt: float
    n_steps: int
    cfl_factor: float = float("nan")

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.n_steps < 1 or not self.dt > 0:
            raise ValueError("need n_steps >= 1 and dt > 0")
        if not math.isclose(self.n_steps * self.dt, self.tau, rel_tol=1e-12):
            raise ValueError("n_steps * dt must equal tau")

    @classmethod
    def from_cfl(cls, tau: float, h: float, cfl_factor: float) -> "TimeGrid":
        """Largest uniform step with ``dt <= cfl_factor * h`` hitting ``tau``."""
        if not cfl_factor > 0:
            raise ValueError(f"cfl_factor must be > 0, got {cfl_factor}")
        if not tau > 0:
            raise ValueError(f"tau must be > 0, got {tau}")
        n_steps = math.ceil(tau / (cfl_factor * h) - 1e-9)
        return cls(tau=float(tau), dt=tau / n_steps, n_steps=n_steps,
                   cfl_factor=float(cfl_factor))

    @classmethod
    def from_steps(cls, tau: float, n_steps: int) -> "TimeGrid":
        return cls(tau=float(tau), dt=tau / n_steps, n_steps=int(n_steps))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def n_samples(self) -> int:
        return self.n_steps + 1

    @property
    def weights(self) -> np.ndarray:
        return _axis_weights(self.n_samples, self.dt)


def integrate_sigma1(trace) -> float:
    """Squared L2 norm of a boundary trace over gamma1 x (0, tau).

    Accepts a :class:`~dwinv.measure.BoundaryTrace`.
    """
    vals = np.asarray(trace.values, dtype=float)
    if vals.size == 0 or vals.shape[0] < 2:
        raise ValueError("trace needs at least two time samples")
    wt = trace.time_grid.weights
    ws = trace.mesh.gamma1_weights
    return float(wt @ (vals**2) @ ws)


# one-sided coefficients for d/dx at the last node, keyed by stencil width
_ONE_SIDED = {
    3: (np.array([3.0, -4.0, 1.0]), 2.0),
    4: (np.array([11.0, -18.0, 9.0, -2.0]), 6.0),
}


def normal_derivative(values, mesh: DomainMesh, points: int = 3) -> np.ndarray:
    """Outward normal derivative on gamma1 from interior values only.

    ``values`` has nodes on its last axis; the result has one column per
    gamma1 node.  ``points`` selects the 3- or 4-point one-sided stencil.
    """
    coef, denom = _ONE_SIDED[points]
    values = np.asarray(values, dtype=float)
    hx = mesh.spacing[0]
    if mesh.dim == 1:
        n = mesh.shape[0] - 1
        cols = values[..., [n - k for k in range(points)]]
        return (cols @ coef)[..., None] / (denom * hx)
    g = mesh.grid(values)
    nx = mesh.shape[0] - 1
    out = sum(c * g[..., nx - k, 1:-1] for k, c in enumerate(coef))
    return out / (denom * hx)
