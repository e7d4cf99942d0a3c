"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class RegTreeError(Exception):
    """Base class for every error raised by this package."""


class TopologyError(RegTreeError, ValueError):
    pass


class ConfigError(RegTreeError, ValueError):
    """Invalid weight configuration.

    ``line`` and ``field`` are filled in when the error comes from a
    config file, so the CLI can point at the offending entry.
    """

    def __init__(self, message: str, *, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.message = message


class NonRadialError(ConfigError):
    """Raised when a radial-only quantity is requested for a config with overrides."""


class QuadratureError(RegTreeError, ArithmeticError):
    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved relative error {achieved:.3e})")
        self.achieved = achieved


class ConvergenceError(RegTreeError, ArithmeticError):
    """Solver hit its iteration budget.

    Carries the best iterate so callers can inspect or reuse it.
    """

    def __init__(self, message: str, residual: float, field=None):
        super().__init__(f"{message} (best residual {residual:.3e})")
        self.residual = residual
        self.field = field


class PreconditionError(RegTreeError, ValueError):
    pass
