"""Exception hierarchy shared across the package.

The CLI maps each family to an exit code (see ``avvp.cli``).
"""


class AvvpError(Exception):
    pass


class DimensionError(AvvpError, ValueError):
    """Operand shapes do not agree."""


class ContractError(AvvpError):
    """A precondition of an operation was violated by the caller."""


class ConfigError(AvvpError, ValueError):
    """Invalid configuration value (smoothing delta, fractions, variant name...)."""


class DataError(AvvpError):
    """Malformed, missing or inconsistent data on disk."""

    def __init__(self, message: str, *, video_id: str | None = None, path: str | None = None):
        parts = [message]
        if video_id is not None:
            parts.append(f"video={video_id}")
        if path is not None:
            parts.append(f"file={path}")
        super().__init__(" | ".join(parts))
        self.video_id = video_id
        self.path = path


class InvariantError(AvvpError):
    """An internal invariant failed (non-finite values, broken normalization)."""
