"""Exception types shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, :class:`DataError`
and :class:`ConfigError` exit 2, :class:`ContractViolation` exits 3.
"""


class ContractViolation(ValueError):
    """An argument broke an operation's precondition (shape, range, index)."""


class ConfigError(ValueError):
    """A configuration value is missing, malformed or inconsistent."""


class DataError(ValueError):
    """Input data (annotations, images, detection files, weights) is unusable."""


class ParseError(DataError):
    """Malformed line in a text file.  ``lineno`` is 1-based."""

    def __init__(self, lineno, message, source=None):
        self.lineno = lineno
        self.source = source
        where = f"{source}:{lineno}" if source else f"line {lineno}"
        super().__init__(f"{where}: {message}")
