"""Exception types shared across the package."""


class MhdflowError(Exception):
    """Base class for all package-specific failures."""


class GridMismatchError(MhdflowError):
    """Operands live on different grids."""


class RankError(MhdflowError):
    """Operation applied to a field of the wrong rank (scalar vs vector)."""


class SolvabilityError(MhdflowError):
    """Poisson right-hand side has a nonzero mean, so no periodic solution exists."""


class DegenerateGeometryError(MhdflowError):
    """Flow-map Jacobian dropped below the invertibility floor.

    Attributes:
        min_det: smallest pointwise value of det(grad zeta).
        location: (y1, y2) collocation point where the minimum occurred.
    """

    def __init__(self, min_det, location):
        self.min_det = float(min_det)
        self.location = tuple(float(x) for x in location)
        super().__init__(
            f"flow map degenerate: min det(grad zeta) = {self.min_det:.6g} "
            f"at y = ({self.location[0]:.4f}, {self.location[1]:.4f})"
        )


class FlowMapInversionError(MhdflowError):
    """Newton inversion of the flow map failed to converge."""


class EllipticDivergenceError(MhdflowError):
    """Pressure iteration residual grew over several consecutive sweeps."""


class EllipticIterationError(MhdflowError):
    """Pressure iteration hit its iteration cap before reaching tolerance.

    Attributes:
        report: the EllipticSolveReport accumulated up to the failure.
    """

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


class StabilityError(MhdflowError):
    """Requested time step exceeds the advective stability bound."""


class DataGenerationError(MhdflowError):
    """Initial-data fixed point failed (amplitude outside the contraction regime)."""


class DivergenceFreeError(MhdflowError):
    """Input that must be divergence-free is not; apply the correctors first."""


class CheckpointFormatError(MhdflowError):
    """Checkpoint bytes do not match the expected layout."""


class ConfigError(MhdflowError):
    """Malformed or inconsistent run configuration."""
