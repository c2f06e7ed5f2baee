"""Exception types shared across the package."""


class EcomDemandError(Exception):
    """Base class for all package errors."""


class InvalidInputError(EcomDemandError, ValueError):
    """A numeric input violated a precondition (empty, non-finite, misaligned)."""


class ScenarioError(EcomDemandError, ValueError):
    """A scenario definition is structurally invalid."""


class PopulationError(EcomDemandError, ValueError):
    """A population file or synthetic spec is invalid."""


class ConfigError(EcomDemandError, ValueError):
    """A run/category configuration value is invalid."""


class EstimationError(EcomDemandError, RuntimeError):
    """Estimation cannot proceed (e.g. unidentifiable coefficients)."""
