"""Exception types shared across the package."""


class HeatLayerError(Exception):
    """Base class for all package-specific errors."""


class DomainValidationError(HeatLayerError, ValueError):
    """A manifold/domain description violates its invariants."""


class BoundaryMembershipError(HeatLayerError, ValueError):
    """A point required to lie on the boundary does not."""


class TimeDomainError(HeatLayerError, ValueError):
    """Evaluation time below the admissible floor (or nonpositive)."""


class NonConvergenceError(HeatLayerError, RuntimeError):
    """A series or iteration hit its cap before reaching tolerance."""

    def __init__(self, msg, achieved=None):
        super().__init__(msg)
        self.achieved = achieved


class AccuracyError(HeatLayerError, RuntimeError):
    """Quadrature refinement failed to reach the requested accuracy."""

    def __init__(self, msg, estimate=None):
        super().__init__(msg)
        self.estimate = estimate


class ConfigurationError(HeatLayerError, ValueError):
    """Invalid run / grid configuration."""


class GridShapeError(HeatLayerError, ValueError):
    """Mismatched discretization shapes."""
