"""Exception types shared across the package.

The split matters for the CLI exit codes: bad user input (configs, CSV
files, argument values) exits with 2, numeric trouble at runtime exits
with 3, and internal contract violations are plain bugs.
"""


class InputError(ValueError):
    """Caller handed in something invalid (bad shape, bad label, bad config)."""


class ContractError(RuntimeError):
    """Internal invariant broken: stale tape, mismatched state, version skew."""


class NumericError(ArithmeticError):
    """Non-finite values or degenerate numerics encountered mid-computation."""


class CsvParseError(InputError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class ConfigError(InputError):
    """Invalid experiment config; carries the offending field path."""

    def __init__(self, field, message):
        super().__init__(f"config field '{field}': {message}")
        self.field = field


class DegenerateRepresentation(NumericError):
    """A representation was constant across samples, so CKA is undefined.

    Report builders catch this and flag the entry instead of writing 0.
    """
