"""Boundary damping identification for the wave equation from one Neumann
measurement, with forward solvers checked against spectral oracles.
"""
from .domain import (DomainMesh, TimeGrid, build_interval_mesh,
                     build_rectangle_mesh)
from .elliptic import (EigenBasis, assemble_mixed_laplacian, eigen_decompose,
                       harmonic_extend, vanishing_set_fraction)
from .inverse import (make_admissible, reconstruct_b, stability_sweep,
                      uniqueness_experiment)
from .measure import BoundaryTrace, besov_half_norm, neumann_trace, velocity_trace
from .wave import (DampingField, WaveState, duhamel_spectral_solve, solve_damped,
                   solve_neumann_forced)

__version__ = "0.1.0"
