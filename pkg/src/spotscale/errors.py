class SpotScaleError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(SpotScaleError, ValueError):
    """Invalid configuration or parameter combination."""


class CatalogError(SpotScaleError, KeyError):
    """Unknown or malformed instance type."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class PlanError(SpotScaleError, ValueError):
    """A provision plan cannot be formed (e.g. s <= f)."""


class ModeError(SpotScaleError, RuntimeError):
    """Operation invoked in the wrong provisioning mode."""


class MoveError(SpotScaleError, ValueError):
    """Illegal orphan or member move."""


class TraceError(SpotScaleError, ValueError):
    """A trace file or in-memory trace failed validation."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
