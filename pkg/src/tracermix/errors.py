"""Exception and warning types used across the package.

Validation errors signal bad user input (CLI exit code 1); everything else
derived from :class:`TracermixError` is a runtime failure (CLI exit code 2).
"""


class TracermixError(Exception):
    """Base class for all package errors."""


class ValidationError(TracermixError):
    """Invalid user input (bad data file, inconsistent shapes, bad targets)."""


class DimensionMismatchError(ValidationError):
    """Matrices in a dataset disagree on the number of sources/tracers/rows."""


class NegativeSpreadError(ValidationError):
    """A source/correction standard deviation is negative."""


class ConcentrationRangeError(ValidationError):
    """A concentration value is outside (0, 1]."""


class UnknownTracerError(ValidationError):
    """A file references a tracer column unknown to the mixture file."""


class UnknownSourceError(ValidationError):
    """A name does not match any source in the dataset or fit."""


class UnknownGroupError(ValidationError):
    """A group label does not exist in the dataset or fit."""


class EmptyGroupError(ValidationError):
    """A group label is empty, or a group filter selects nothing."""


class InfeasibleTargetError(ValidationError):
    """Prior elicitation targets violate mean/sd feasibility bounds."""


class UnsupportedForBackendError(ValidationError):
    """Operation requested on a fit whose backend cannot support it."""


class SamplerInitError(TracermixError):
    """Could not find a finite starting point for an MCMC chain."""


class FfvbDivergenceError(TracermixError):
    """Variational lower bound diverged; usually cured by a smaller step size."""


class ArtifactError(TracermixError):
    """Problem reading or writing a saved run artifact."""


class ArtifactParseError(ArtifactError):
    """Run artifact is not parseable JSON; carries the failing byte offset."""

    def __init__(self, message, byte_offset=None):
        super().__init__(message)
        self.byte_offset = byte_offset


class VersionMismatchError(ArtifactError):
    """Run artifact was written with an incompatible schema version."""


class NonIdentifiableWarning(UserWarning):
    """All sources coincide in tracer space; proportions are not identifiable."""


class AcceptanceRateWarning(UserWarning):
    """An MCMC proposal block mixed poorly after adaptation."""


class DegeneratePolygonWarning(UserWarning):
    """Corrected sources do not span a 2-D polygon; containment test degraded."""


class SoloGroupWarning(UserWarning):
    """A group holds a single mixture observation; near-zero residual prior used."""


class ElicitationWarning(UserWarning):
    """Prior elicitation stopped before meeting its convergence tolerance."""
