"""Exception types shared across the toolkit.

Exit-code mapping used by the CLI: ConfigError -> 1 (usage),
DataError -> 2 (bad or missing data), DivergenceError -> 3 (numerical failure).
"""


class RuleKGError(Exception):
    """Base class for toolkit errors."""


class ConfigError(RuleKGError):
    """Invalid configuration or command usage."""


class DataError(RuleKGError):
    """Malformed input data, missing files, or incompatible artifacts."""


class DivergenceError(RuleKGError):
    """Training produced a non-finite loss."""
