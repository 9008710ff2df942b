"""Exception hierarchy shared across the package.

Every error carries a short machine-parsable ``category`` used by the CLI
for its single-line failure output and exit codes.
"""


class ParityForecastError(Exception):
    """Base class for all package errors."""

    category = "internal-error"


class ConfigError(ParityForecastError):
    """Bad or unknown configuration key/value."""

    category = "config-error"


class ParseError(ParityForecastError):
    """Malformed input file (missing column, non-numeric cell, bad date)."""

    category = "parse-error"


class ReferentialError(ParityForecastError):
    """Cross-file reference violated, e.g. a unit without demographics."""

    category = "referential-error"


class GapError(ParityForecastError):
    """Non-contiguous daily dates in a unit's series."""

    category = "gap-error"


class EmptyInputError(ParityForecastError):
    """An operation received an empty sequence it cannot handle."""

    category = "empty-input-error"


class DomainError(ParityForecastError):
    """Argument outside the mathematical domain of an operation."""

    category = "domain-error"


class DimensionError(ParityForecastError):
    """Mismatched array shapes or lengths."""

    category = "dimension-error"


class SampleSizeError(ParityForecastError):
    """Too few observations for the requested statistic."""

    category = "sample-size-error"


class SingularDesignError(ParityForecastError):
    """Design matrix is rank deficient or numerically singular."""

    category = "singular-design-error"


class DivergenceError(ParityForecastError):
    """Training produced a non-finite loss."""

    category = "divergence-error"

    def __init__(self, message: str, epoch: int | None = None, batch: int | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class KinkError(ParityForecastError):
    """Gradient check attempted too close to a pinball-loss kink."""

    category = "kink-error"


class MissingUnitError(ParityForecastError):
    """A unit expected in the audit has no forecasts."""

    category = "missing-unit-error"


class DegenerateGroupError(ParityForecastError):
    """A group statistic is undefined (e.g. zero reference-group mean)."""

    category = "degenerate-group-error"
