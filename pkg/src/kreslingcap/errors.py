"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid design, material or configuration parameter."""


class GeometryError(ValueError):
    """Degenerate or otherwise unusable geometry."""


class TopologyError(GeometryError):
    """Mesh connectivity does not satisfy the expected structure."""


class InterpenetrationError(GeometryError):
    """Two electrode patches cross each other."""


class SolverError(RuntimeError):
    """Equilibrium iteration failed to converge."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations


class CountOverflowError(OverflowError):
    """Frequency at or above the converter reference clock."""
