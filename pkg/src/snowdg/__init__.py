"""Symmetric interior penalty DG on the Koch snowflake with self-similar meshes."""
from .assembly import DGSpace, assemble_M, assemble_system
from .geometry import Similarity, boundary_distance, koch_ifs, snowflake_ifs
from .linsolve import NumericalFailure, condition_estimate, smallest_generalized_eigs, solve_spd
from .mesh import MeshError, build_boundary_refined, build_quasi_uniform, build_uniform, lqu_check
from .moments import koch_moments, snowflake_moments, wedge_moments

__version__ = "0.1.0"
