import numpy as np
import pytest

from dwinv.domain import TimeGrid, build_interval_mesh, build_rectangle_mesh
from dwinv.elliptic import eigen_decompose
from dwinv.inverse import make_admissible
from dwinv.wave import DampingField


@pytest.fixture(scope="session")
def mesh1d():
    return build_interval_mesh(128)


@pytest.fixture(scope="session")
def mesh2d():
    return build_rectangle_mesh(24, 24)


@pytest.fixture(scope="session")
def setup1d(mesh1d):
    tg = TimeGrid.from_cfl(2.0, mesh1d.h, 0.9)
    init = make_admissible(eigen_decompose(mesh1d, 5), 0)
    return mesh1d, tg, init, DampingField.constant(mesh1d, 0.5)


@pytest.fixture(scope="session")
def setup2d(mesh2d):
    tg = TimeGrid.from_cfl(2.0, mesh2d.h, 0.6)
    init = make_admissible(eigen_decompose(mesh2d, 4), 0)
    y = mesh2d.gamma1_coords[:, 0]
    return mesh2d, tg, init, DampingField(mesh2d, 0.3 + 0.2 * np.sin(np.pi * y))


def observed_order(ns, errs):
    return -np.polyfit(np.log(ns), np.log(errs), 1)[0]
