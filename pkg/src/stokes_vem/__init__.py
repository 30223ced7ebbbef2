"""Virtual element discretization of the 2D Stokes problem on polygonal meshes."""
from .errors import (AssemblyError, ConditioningError, ConfigurationError, GeometryError,
                     MeshGenerationError, MeshParseError, SolverError, VemError)
from .mesh import PolyMesh, build_mesh, generate, mesh_diameter, read_mesh, write_mesh
from .vemspace import SchemeConfig, dof_count
from .system import apply_dirichlet, assemble, infsup_estimate, solve
from .harness import MANUFACTURED, compute_errors, divergence_norms, run_study, solve_case

__version__ = "0.1.0"

__all__ = [
    "AssemblyError", "ConditioningError", "ConfigurationError", "GeometryError",
    "MeshGenerationError", "MeshParseError", "SolverError", "VemError",
    "PolyMesh", "build_mesh", "generate", "mesh_diameter", "read_mesh", "write_mesh",
    "SchemeConfig", "dof_count",
    "apply_dirichlet", "assemble", "infsup_estimate", "solve",
    "MANUFACTURED", "compute_errors", "divergence_norms", "run_study", "solve_case",
]
