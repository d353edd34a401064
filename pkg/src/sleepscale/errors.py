"""
Exception hierarchy for sleepscale.

Everything raised on purpose by the package derives from SleepScaleError. ConfigError covers bad input (files,
flags, specs) and maps to exit code 2 on the command line; ModelError covers requests the queueing model cannot
answer.
"""


class SleepScaleError(Exception):
    """Base class for every error raised on purpose by sleepscale."""
    pass


class ConfigError(SleepScaleError):
    pass


class ModelError(SleepScaleError):
    pass


class PowerTableError(ConfigError):
    """The power table file is missing, malformed, or internally inconsistent."""
    pass


class IncompatiblePair(ConfigError):
    """A CPU state was combined with a platform state that does not support it."""
    pass


class LatencyOutOfRange(ConfigError):
    pass


class InvalidSleepSequence(ConfigError):
    pass


class ParseError(ConfigError):
    """
    A record in a trace, job log or command-line expression could not be parsed.

    Parameters
    ----------
    message : str
        What went wrong.
    line : int, optional
        1-based line number of the offending record, when it came from a file.
    """
    def __init__(self, message, line=None):
        if line is not None:
            message = f'line {line}: {message}'
        super().__init__(message)
        self.line = line


class RangeError(ConfigError):
    pass


class UnstableTarget(ConfigError):
    pass


class EmptyGrid(ConfigError):
    pass


class TraceTooShort(ConfigError):
    pass


class UnknownStrategy(ConfigError):
    pass


class Unstable(ModelError):
    """The arrival rate is at or above the service rate at the requested frequency."""
    pass


class SingularParameter(ModelError):
    pass


class NoClosedForm(ModelError):
    pass


class EmptyStream(ModelError):
    pass


class EmptyOutcomes(ModelError):
    pass


class OutOfOrderUpdate(ModelError):
    pass
