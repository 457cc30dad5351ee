"""Exception types shared across the package."""


class BudgetError(RuntimeError):
    """An enumeration would exceed the configured size budget."""


class NonconvergenceError(RuntimeError):
    """Cone iteration failed to reach the requested projective tolerance."""

    def __init__(self, message, theta=None, diameter=None):
        super().__init__(message)
        self.theta = theta
        self.diameter = diameter


class NondegeneracyError(RuntimeError):
    """The sampled nondegeneracy constant is numerically zero."""

    def __init__(self, message, gamma=None, witness=None):
        super().__init__(message)
        self.gamma = gamma
        self.witness = witness


class DegenerateCylinderError(RuntimeError):
    """A cylinder mass or density vanished where a ratio was required."""


class NumericRangeError(RuntimeError):
    """A renormalized product left the representable floating-point range."""


class ConfigError(ValueError):
    """A run configuration failed validation."""
