"""
Exception hierarchy for the offgrid toolkit.

The CLI maps ConfigError to exit 2 and NumericalViolation subclasses to exit 3.
"""


class OffgridError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(OffgridError):
    """Scenario file or override could not be parsed or validated."""


class StructuralError(OffgridError, ValueError):
    """Objects that must share a measure, kind or dimension do not."""


class DomainError(OffgridError, ValueError):
    """Argument outside the domain of the operation."""


class InputError(OffgridError, ValueError):
    """Observation data is not usable (e.g. non-finite samples)."""


class NumericalViolation(OffgridError):
    """A standing numerical assumption does not hold for the given inputs."""


class DegenerateFeatureError(NumericalViolation):
    """A feature has zero empirical norm on the observation measure."""


class PositivityError(NumericalViolation):
    """The metric function g_T is not positive."""


class AssumptionViolation(NumericalViolation):
    """A property required of F or of the kernel approximation fails."""


class SeparationViolation(NumericalViolation):
    """Locations are too close for the requested linear system."""


class PreconditionError(NumericalViolation):
    """An operation precondition on its numeric arguments fails."""
