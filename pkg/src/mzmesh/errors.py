"""Exception types raised across the package."""


class MZMeshError(Exception):
    """Base class for all package errors."""


class DomainMembershipError(MZMeshError, ValueError):
    """A point lies outside the region an operation requires."""


class GeometryError(MZMeshError, ValueError):
    """Geometric parameters are inconsistent (boxes, smoothing radius, ...)."""


class ParameterError(MZMeshError, ValueError):
    """A numeric parameter is outside its admissible range."""


class ConvergenceError(MZMeshError, RuntimeError):
    """An iterative solver failed to reach its tolerance."""


class ConfigurationError(MZMeshError, ValueError):
    """An experiment or mesh was configured inconsistently."""
