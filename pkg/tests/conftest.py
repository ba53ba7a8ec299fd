import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tricontinuum.geometry import Fracture, FractureNetwork, build_coarse_grid, build_fine_mesh
from tricontinuum.physics import FluidProperties, make_model

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"


def one_fracture(points, aperture=1e-2, permeability=1.0):
    return FractureNetwork((Fracture(np.asarray(points, float), aperture, permeability),))


@pytest.fixture
def unit_mesh():
    return build_fine_mesh((1.0, 1.0), 8, 8)


@pytest.fixture
def toy_fractured():
    """8x8 fine, 2x2 coarse, one diagonal fracture; O(1) coefficients."""
    net = one_fracture([[0.1, 0.2], [0.8, 0.7]])
    mesh = build_fine_mesh((1.0, 1.0), 8, 8, net)
    grid = build_coarse_grid(mesh, 2, 2)
    rng = np.random.default_rng(0)
    km = 10 ** rng.uniform(-1, 1, mesh.n_triangles)
    model = make_model(mesh, (km, 0.5, 0.1), fluid=FluidProperties(c=1e-3, mu=1.0, B0=1.0, u0=0.0))
    return mesh, grid, model


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
