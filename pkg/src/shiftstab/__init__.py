"""Estimate how far a cost distribution can shift, in KL divergence, before
its expected cost crosses a threshold."""
from __future__ import annotations

from .core import (
    Boundary,
    CostSample,
    DualSolution,
    estimate_stability,
    exponential_tilt,
    stability_chi_squared,
    stability_exponential,
    stability_gamma,
)
from .errors import (
    ConfigurationError,
    ConstructionInfeasibleError,
    InvalidArgumentError,
    NumericError,
    RegimeError,
)

__version__ = "0.1.0"

__all__ = [
    "Boundary",
    "CostSample",
    "DualSolution",
    "estimate_stability",
    "exponential_tilt",
    "stability_exponential",
    "stability_gamma",
    "stability_chi_squared",
    "ConfigurationError",
    "ConstructionInfeasibleError",
    "InvalidArgumentError",
    "NumericError",
    "RegimeError",
    "__version__",
]
