"""Exception hierarchy; each class carries the CLI exit code it maps to."""


class OmegaRaterError(Exception):
    exit_code = 1


class ConfigError(OmegaRaterError):
    """Bad flags, missing files or columns the user declared."""

    exit_code = 1


class DataError(OmegaRaterError):
    """Input data that cannot be processed at all (row-level problems are skipped instead)."""

    exit_code = 2


class InvariantError(OmegaRaterError):
    """A computed value broke an internal guarantee. Always a bug."""

    exit_code = 3
