"""Homogenized energy densities for magnetoelastic composites with rigid inclusions."""

from .cell_problem import CellProblemSpec, SolverOpts, f_hom, solve_cell
from .errors import (ConfigError, MagnetohomError, NonConvergence, SeparationViolated)
from .geometry import Ball, Box, InclusionSpec, build_mask
from .materials import ModelParams, make_example1, make_example2, make_example3, make_laminate
from .surface import audit_growth_coercivity, audit_lipschitz, gamma_check, tabulate

__version__ = "0.1.0"

__all__ = [
    "Ball", "Box", "CellProblemSpec", "ConfigError", "InclusionSpec", "MagnetohomError",
    "ModelParams", "NonConvergence", "SeparationViolated", "SolverOpts", "audit_growth_coercivity",
    "audit_lipschitz", "build_mask", "f_hom", "gamma_check", "make_example1", "make_example2",
    "make_example3", "make_laminate", "solve_cell", "tabulate",
]
