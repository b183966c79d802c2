"""Exception and warning types raised across the package."""


class DynbnError(Exception):
    """Base class for all package errors."""


class StructuralError(DynbnError, ValueError):
    """Invalid graph structure (cycle, dangling edge, duplicate id)."""


class DomainError(DynbnError, ValueError):
    """Parameters outside the domain where a formula is defined."""


class DegenerateDesignError(DomainError):
    """Design vector carries (numerically) zero prior variance."""


class ConditioningError(DynbnError, ArithmeticError):
    """Covariance too ill-conditioned for a stable update."""


class ModelMismatchError(DynbnError):
    """An observation cannot be assimilated under the current beliefs."""

    def __init__(self, message, step=None, obs_index=None):
        super().__init__(message)
        self.step = step
        self.obs_index = obs_index


class ScenarioError(DynbnError, ValueError):
    """Scenario file fails validation."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class AccuracyError(DynbnError):
    """Numerical integration could not reach the requested accuracy."""


class AccuracyWarning(UserWarning):
    """Quadrature refinement stopped at its cap before converging."""
