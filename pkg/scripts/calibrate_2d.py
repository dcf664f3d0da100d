"""One-time calibration of the 2-D reconstruction threshold.

For each acceptance mesh size n the run is repeated on the 2n x 2n mesh;
the threshold is twice that finer error, rounded up to two significant
digits.  The printed table is what CALIBRATION.md records and what
``dwinv.acceptance.RECON_2D_THRESHOLD`` freezes.

    python3 scripts/calibrate_2d.py
"""
import math

import numpy as np

from dwinv.domain import TimeGrid, build_rectangle_mesh
from dwinv.experiments import admissible_mode, reconstruction_run
from dwinv.wave import DampingField

CFL = 0.6
RHO = 0.01


def error_2d(n):
    mesh = build_rectangle_mesh(n, n)
    tg = TimeGrid.from_cfl(2.0, mesh.h, CFL)
    y = mesh.gamma1_coords[:, 0]
    b = DampingField(mesh, 0.3 + 0.2 * np.sin(np.pi * y))
    return reconstruction_run(mesh, tg, b, admissible_mode(mesh, 0), RHO).error


def ceil_2sig(x):
    e = math.floor(math.log10(x)) - 1
    return math.ceil(x / 10**e) * 10**e


if __name__ == "__main__":
    print("n, error(n), error(2n), threshold(n)")
    for n in (32, 64):
        e, fine = error_2d(n), error_2d(2 * n)
        print(f"{n}, {e:.6g}, {fine:.6g}, {ceil_2sig(2 * fine):.2g}")
