"""Exception hierarchy shared by every module."""


class BreathnetError(Exception):
    """Base class for all package errors."""


class ConfigurationError(BreathnetError, ValueError):
    """A configuration value is invalid or unsupported."""


class InputError(BreathnetError, ValueError):
    """Caller-supplied data does not satisfy an operation's preconditions."""


class InvariantError(BreathnetError, ValueError):
    """Data violates a documented type invariant (e.g. negative magnitude)."""


class UsageError(BreathnetError, RuntimeError):
    """An API was used out of order or with mismatched state."""


class DivergenceError(BreathnetError, ArithmeticError):
    """Training produced a non-finite loss."""


class FormatError(BreathnetError, ValueError):
    """A serialized file could not be decoded."""


class BadMagicError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class UnsupportedAudioFormatError(FormatError):
    pass
