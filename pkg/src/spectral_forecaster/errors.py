"""Error taxonomy shared across the package.

Three failure families map onto distinct CLI exit codes: bad configuration,
bad data, and numeric trouble at runtime. Plain ``ValueError`` is reserved
for programming-contract violations (shape mismatches, invalid arguments).
"""


class ConfigError(Exception):
    """Experiment or model configuration is invalid or unreadable."""


class DataError(Exception):
    """Input data is missing, malformed, or inconsistent with the config."""


class NumericError(ArithmeticError):
    """A numeric-range failure: non-finite values where finite ones are required."""
