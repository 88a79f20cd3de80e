"""Exception hierarchy.

Every failure mode that callers are expected to handle gets its own class;
plain ValueError/RuntimeError never escape the public API for contract
violations.
"""


class SpikedFisherError(Exception):
    """Base class for all library errors."""


class DomainError(SpikedFisherError, ValueError):
    """Input outside the mathematical domain of an operation."""


class UnsupportedModelError(SpikedFisherError):
    """Base spectrum not supported by the requested backend."""


class SpikeInsideBulkError(SpikedFisherError):
    """Evaluation point falls inside (or too close to) the bulk spectrum."""


class PoleError(SpikedFisherError):
    """Denominator of the phase map vanishes at the requested point."""


class ClassificationError(SpikedFisherError):
    """Root finding for a non-distant spike failed; carries diagnostics."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class MismatchError(SpikedFisherError):
    """Bundle evaluated at a different point than the one supplied."""


class DegenerateError(SpikedFisherError):
    """A formula degenerates (vanishing denominator, zero variance)."""


class UnsupportedSpikeError(SpikedFisherError):
    """No limiting law is available for the requested spike."""


class ConfigError(SpikedFisherError, ValueError):
    """Invalid or inconsistent configuration."""


class DegenerateTruncationError(SpikedFisherError):
    """Truncation removed (almost) all mass; variance below tolerance."""


class SingularityError(SpikedFisherError):
    """A matrix that must be invertible is numerically singular."""


class ResolventError(SpikedFisherError):
    """Resolvent requested too close to the spectrum (ill-conditioned)."""


class HarnessError(SpikedFisherError):
    """Too many Monte Carlo replications failed."""


class GeometryError(SpikedFisherError):
    """Two configurations that must share geometry do not."""
