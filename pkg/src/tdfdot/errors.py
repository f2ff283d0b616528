"""Exception types; the CLI maps them to exit codes."""


class ConfigurationError(ValueError):
    """Bad grid, shapes, or run settings (exit code 2)."""

    exit_code = 2


class NumericalError(RuntimeError):
    """A solve diverged, failed to converge, or produced non-finite values (exit code 3)."""

    exit_code = 3


class DiagnosticFailure(AssertionError):
    """A diagnostic check ran but did not pass (exit code 4)."""

    exit_code = 4
