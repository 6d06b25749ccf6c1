"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
anything else -> 4.
"""


class SeqMasksError(Exception):
    """Base class for errors raised by this package."""


class InvalidInputError(SeqMasksError, ValueError):
    """An argument violates an operation's preconditions."""


class ConfigError(SeqMasksError):
    """A configuration value or file is invalid."""


class DataError(SeqMasksError):
    """On-disk data is missing, malformed, or inconsistent with its manifest."""
