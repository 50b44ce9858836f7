"""Exception hierarchy shared by all modules."""


class SteklovError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(SteklovError, ValueError):
    """Invalid argument values or ranges."""


class SizeError(ParameterError):
    """Problem exceeds a stated size limit (e.g. brute-force boundary cap)."""


class MeshFormatError(SteklovError, ValueError):
    """Malformed mesh file; message carries line/field context."""


class AssemblyError(SteklovError, RuntimeError):
    """Finite-element assembly failed (names the offending triangle)."""


class SolveError(SteklovError, RuntimeError):
    """Linear solve failed or did not reach the required residual."""


class SpectralError(SteklovError, RuntimeError):
    """Eigensolver failure; message carries residual context."""


class ConfigError(SteklovError, ValueError):
    """Invalid scenario configuration (unknown keys, missing sections...)."""
