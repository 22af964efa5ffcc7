"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """Bad input: empty sample, non-finite threshold, nonpositive parameter."""


class ConstructionInfeasibleError(ValueError):
    """A hard-pair construction violates one of its defining bounds."""

    def __init__(self, message, violated=None):
        super().__init__(message)
        self.violated = violated


class RegimeError(ValueError):
    """A bound was requested outside the regime in which it is claimed."""


class NumericError(RuntimeError):
    """Quadrature or root finding failed to reach the requested tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class ConfigurationError(ValueError):
    """A sampler or simulator configuration cannot be executed."""
