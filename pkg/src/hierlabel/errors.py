"""Exception hierarchy shared by all hierlabel modules.

The CLI maps these onto exit codes: ConfigError -> 2, ParseError and
ValidationError -> 3, NumericalError -> 4.
"""


class HierlabelError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(HierlabelError):
    """Bad run configuration (missing paths, invalid parameter values)."""


class ParseError(HierlabelError):
    """Malformed input file; message carries the file and line number."""


class ValidationError(HierlabelError):
    """Structurally well-formed input that violates an invariant."""


class NumericalError(HierlabelError):
    """A numerical routine failed (rank deficiency, non-convergence)."""
