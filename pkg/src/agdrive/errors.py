"""Exception types shared across the package."""


class DrivelineError(Exception):
    """Base class for all errors raised by agdrive."""


class ConfigError(DrivelineError, ValueError):
    """Invalid configuration. ``path`` names the offending field, ``line`` the source line."""

    def __init__(self, message, path=None, line=None, source=None):
        self.message = message
        self.path = path
        self.line = line
        self.source = source
        super().__init__(message)

    def __str__(self):
        where = ''
        if self.source:
            where += f'{self.source}:'
            if self.line is not None:
                where += f'{self.line}:'
            where += ' '
        elif self.line is not None:
            where += f'line {self.line}: '
        if self.path:
            where += f'{self.path}: '
        return where + self.message


class RadiusTooSmall(DrivelineError, ValueError):
    pass


class InconsistentSteering(DrivelineError, ValueError):
    pass


class InvalidToothCounts(DrivelineError, ValueError):
    pass


class NoSolution(DrivelineError):
    pass


class BrakeOverload(DrivelineError):
    pass


class SpeedOutOfRange(DrivelineError, ValueError):
    pass


class OutOfEnvelope(DrivelineError, ValueError):
    def __init__(self, message, segment=None):
        self.segment = segment
        if segment is not None:
            message = f'segment {segment}: {message}'
        super().__init__(message)


class TipOver(DrivelineError):
    pass


class InfeasibleDuty(DrivelineError):
    pass


class BusUnderrun(DrivelineError):
    def __init__(self, message, deficit=0.0):
        self.deficit = deficit
        super().__init__(message)


class ShiftRejected(DrivelineError):
    pass
