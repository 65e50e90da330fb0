"""Error taxonomy shared across the pipeline.

Every failure mode maps onto one of four process exit codes so that shell
callers can branch on what went wrong:

    1  usage / configuration problems
    2  data problems (schema, integrity, missing stage inputs)
    3  numeric problems (non-convergence, iteration caps)
    4  validation-suite failures
"""

from __future__ import annotations

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3
EXIT_VALIDATION = 4


class PipelineError(Exception):
    """Base class for all errors raised deliberately by this package."""

    exit_code = EXIT_DATA


class UsageError(PipelineError):
    """Bad command line or configuration input."""

    exit_code = EXIT_USAGE


class ConfigError(UsageError):
    """Configuration file is missing keys or holds out-of-range values."""


class DataError(PipelineError):
    """Problems with the content of an input table."""

    exit_code = EXIT_DATA


class SchemaError(DataError):
    """A required column is absent or a file does not match its contract."""


class IntegrityError(DataError):
    """Duplicate keys or broken cross-record references."""


class HarmonizationError(DataError):
    """A record cannot be harmonized under the documented survey rules."""


class RangeError(DataError):
    """A value falls outside the supported coverage (e.g. price index years)."""


class DomainError(DataError):
    """A mathematical argument is outside the function's domain."""


class JoinError(DataError):
    """Rows failed to match during a required merge."""


class DependencyError(DataError):
    """A pipeline stage ran before the stage that produces its inputs."""


class NumericError(PipelineError):
    """Iteration caps or non-convergence in the numeric kernels."""

    exit_code = EXIT_NUMERIC


class ValidationFailure(PipelineError):
    """The self-check suite found a disagreement with an oracle."""

    exit_code = EXIT_VALIDATION
