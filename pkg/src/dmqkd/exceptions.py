"""Exception hierarchy shared by all pipeline stages."""


class DMQKDError(Exception):
    """Base class for every error raised by this package."""


class InvalidOrderError(DMQKDError, ValueError):
    pass


class InvalidParameterError(DMQKDError, ValueError):
    pass


class DegenerateConstellationError(DMQKDError, ValueError):
    pass


class LengthMismatchError(DMQKDError, ValueError):
    pass


class CapacityError(DMQKDError, ValueError):
    pass


class InvalidSequenceError(DMQKDError, ValueError):
    pass


class RankOutOfRangeError(DMQKDError, ValueError):
    pass


class BandwidthError(DMQKDError, ValueError):
    pass


class PilotLostError(DMQKDError, RuntimeError):
    pass


class SyncLostError(DMQKDError, RuntimeError):
    pass


class StepSizeError(DMQKDError, RuntimeError):
    """LMS adaptation diverged; reduce the step size."""


class CalibrationError(DMQKDError, ValueError):
    pass


class DegenerateInputError(DMQKDError, ValueError):
    pass


class ChannelEstimationError(DMQKDError, RuntimeError):
    pass


class UnphysicalStateError(DMQKDError, ArithmeticError):
    """A covariance matrix violated the uncertainty principle.

    This almost always signals a unit-convention mismatch between inputs.
    """


class ConfigurationError(DMQKDError, ValueError):
    pass


class StageError(DMQKDError, RuntimeError):
    """Wraps an error raised inside one stage of an end-to-end run."""

    def __init__(self, stage, original):
        self.stage = stage
        self.original = original
        super().__init__(f"[{stage}] {type(original).__name__}: {original}")
