"""Numerical continuation for a current-carrying elastic rod in an axial magnetic field."""

__version__ = "0.1.0"

from .bvp import BvpSolution, ConvergenceError, Mesh, SingularJacobianError, make_mesh, solve_newton
from .codim2 import Codim2Curve, trace_codim2
from .config import ConfigError, Scenario, parse_config, write_config
from .continuation import Branch, Event, StepControl, continue_branch, switch_branch
from .eigen import EigenPair, EigenPath, eigen_init, track_eigenvalues
from .linearized import CompositeSystem
from .model import DimensionalParams, ParameterError, RodParams, nondimensionalize, set_dimensional, set_preset
from .stationary import StationarySystem, measure1, measure2, swap_ends, trivial_solution

__all__ = [
    "Branch",
    "BvpSolution",
    "Codim2Curve",
    "CompositeSystem",
    "ConfigError",
    "ConvergenceError",
    "DimensionalParams",
    "EigenPair",
    "EigenPath",
    "Event",
    "Mesh",
    "ParameterError",
    "RodParams",
    "Scenario",
    "SingularJacobianError",
    "StationarySystem",
    "StepControl",
    "continue_branch",
    "eigen_init",
    "make_mesh",
    "measure1",
    "measure2",
    "nondimensionalize",
    "parse_config",
    "set_dimensional",
    "set_preset",
    "solve_newton",
    "swap_ends",
    "switch_branch",
    "trace_codim2",
    "track_eigenvalues",
    "trivial_solution",
    "write_config",
]
