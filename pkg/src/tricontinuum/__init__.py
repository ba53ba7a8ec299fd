"""Triple-continuum flow with discrete fractures: fine FEM and GMsFEM solvers."""
from .config import ConfigError, Scenario, ScenarioConfig, load_config, parse_config
from .geometry import Fracture, FractureNetwork, MeshError, build_coarse_grid, build_fine_mesh
from .physics import FluidProperties, Model, make_model
from .report import ErrorReport, compare, l2_relative_error
from .timestepper import TimeControls, run

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ErrorReport", "Fracture", "FractureNetwork", "FluidProperties", "MeshError",
    "Model", "Scenario", "ScenarioConfig", "TimeControls", "build_coarse_grid", "build_fine_mesh",
    "compare", "l2_relative_error", "load_config", "make_model", "parse_config", "run",
]
