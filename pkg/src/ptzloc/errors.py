"""Exception types raised across the package."""


class PtzLocError(Exception):
    """Base class for all package errors."""


class PoseBehindCamera(PtzLocError, ValueError):
    pass


class DegenerateConic(PtzLocError, ValueError):
    pass


class NonPositiveDiameter(PtzLocError, ValueError):
    pass


class OffsetOutOfRange(PtzLocError, ValueError):
    pass


class FrameTooSmall(PtzLocError, ValueError):
    pass


class InvalidNormalisation(PtzLocError, ValueError):
    pass


class InvalidCutoff(PtzLocError, ValueError):
    pass


class NoBackgrounds(PtzLocError, ValueError):
    pass


class BackgroundUnreadable(PtzLocError, OSError):
    pass


class EmptyLog(PtzLocError, ValueError):
    pass


class SchemaMismatch(PtzLocError, ValueError):
    pass


class ConfigError(PtzLocError, ValueError):
    """Invalid configuration; ``path`` is the dotted field path at fault."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class TrackingLost(PtzLocError):
    """Marker missing from every window for longer than the grace period.

    The simulator records this as an event rather than raising it.
    """
