"""Exception hierarchy shared by every module."""


class EmShieldError(Exception):
    """Base class for all errors raised by the package."""


class AliasingError(EmShieldError):
    """A frequency sits at or above the Nyquist limit of the sample rate."""


class InvalidSpec(EmShieldError):
    """A signal specification has out-of-range parameters."""


class EmptyWaveform(EmShieldError):
    pass


class RateMismatch(EmShieldError):
    pass


class LengthMismatch(EmShieldError):
    pass


class DegenerateError(EmShieldError):
    """A ratio or logarithm has a zero denominator."""


class DivideByZero(DegenerateError, ZeroDivisionError):
    """A ratio with a zero denominator."""


class InvalidLength(EmShieldError):
    pass


class NegativeInput(EmShieldError):
    pass


class NoCrossing(EmShieldError):
    """A response curve never crosses the threshold.

    ``which`` is ``"peak"`` or ``"dc"``.
    """

    def __init__(self, which: str, message: str = ""):
        self.which = which
        super().__init__(message or f"no {which} crossing")


class EmptyCalibration(EmShieldError):
    pass


class InvalidThreshold(EmShieldError):
    pass


class DegenerateK(EmShieldError):
    """The wire sensitivity ratio K must be strictly greater than one."""


class InvalidRegime(EmShieldError):
    """Threshold does not sit above the amplified noise floor."""


class Infeasible(EmShieldError):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


class NoPolicy(EmShieldError):
    """adaptive_update called on a config without an adaptive policy."""


class ConfigError(EmShieldError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)
