"""Exception types shared across the package.

The CLI maps these onto process exit codes, so anything that should abort a
run with a distinct code must raise one of them.
"""


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration (exit code 2)."""


class PropertyViolation(RuntimeError):
    """A structural invariant failed on a trace (exit code 3).

    Carries the offending trace window, when available, in ``window``.
    """

    def __init__(self, message, window=None):
        super().__init__(message)
        self.window = window


class NumericAbort(RuntimeError):
    """Numerical safety limit hit, e.g. step-size search overflow (exit code 4)."""
