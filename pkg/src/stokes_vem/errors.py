"""Exception hierarchy shared across the package."""


class VemError(Exception):
    """Base class for all errors raised by stokes_vem."""


class ConfigurationError(VemError, ValueError):
    """Invalid user-supplied parameters (family, level, degree, ...)."""


class GeometryError(VemError):
    """Degenerate or otherwise unusable polygon or edge."""


class ConditioningError(VemError):
    """A local Gram/mass matrix is too ill-conditioned to factor."""

    def __init__(self, message, element=None):
        if element is not None:
            message = f"element {element}: {message}"
        super().__init__(message)
        self.element = element


class MeshGenerationError(VemError):
    """A generator produced a mesh that violates the mesh invariants."""


class MeshParseError(VemError):
    """Malformed mesh file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class AssemblyError(VemError):
    """Inconsistent local-to-global index data during assembly."""


class SolverError(VemError):
    """Factorization failed or the solve did not meet its residual target."""
