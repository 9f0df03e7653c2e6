"""Exception hierarchy shared across the engine."""


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(EngineError):
    """An input file does not match its documented format."""


class SchemaError(EngineError):
    """Structurally invalid data: duplicate keys, bad identifiers, bad columns."""


class MalformedGeocodeError(SchemaError):
    """A census block geocode is not a 15-digit string."""


class ValidationError(EngineError):
    """A row violates a count invariant (negative count or category-sum mismatch)."""


class DegenerateGeometryError(EngineError):
    """A polygon ring has fewer than 3 distinct vertices or zero area."""


class EmptyPopulationError(EngineError):
    """A weighted statistic was requested over zero total weight."""


class InsufficientGroupsError(EngineError):
    """A between-group metric needs at least two groups."""


class InsufficientTractsError(EngineError):
    """A binning needs more tracts than were supplied."""


class DomainError(EngineError):
    """An input is outside the mathematical domain of a metric."""


class DegenerateVarianceError(DomainError):
    """The reference exposure has zero variance; moments are undefined."""


class ContractError(EngineError):
    """An internal contract was violated (wrong bin count, empty samples)."""


class ConfigError(EngineError):
    """A run configuration is invalid or references missing inputs."""
