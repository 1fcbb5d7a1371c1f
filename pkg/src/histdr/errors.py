"""Exception hierarchy shared by the library and the CLI.

Each exception carries the process exit code the CLI maps it to.
"""


class HistdrError(Exception):
    exit_code = 1


class ValidationError(HistdrError):
    """Input data violates a documented invariant."""


class ParseError(ValidationError):
    """A line of an input file could not be parsed."""

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{self.path}:{lineno}: {message}")


class ConfigError(HistdrError):
    """Inconsistent or unknown configuration."""


class MissingArtifactError(HistdrError):
    exit_code = 2


class StaleArtifactError(HistdrError):
    """An upstream artifact changed since the dependent step last ran."""


class NumericalError(HistdrError):
    exit_code = 3
