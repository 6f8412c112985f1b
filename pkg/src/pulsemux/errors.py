"""Exception hierarchy shared by every pulsemux module."""


class PulsemuxError(Exception):
    """Base class for all errors raised by this package."""


class AsymmetricSpectrum(PulsemuxError):
    pass


class SamplePeriodMismatch(PulsemuxError):
    pass


class CutoffOutOfRange(PulsemuxError):
    pass


class PulseExceedsRecord(PulsemuxError):
    pass


class QTooLow(PulsemuxError):
    pass


class DecayExceedsRecord(PulsemuxError):
    pass


class AliasedResonance(PulsemuxError):
    pass


class UnknownChannel(PulsemuxError):
    pass


class GridMismatch(PulsemuxError):
    pass


class EmptyInput(PulsemuxError):
    pass


class DegenerateExcitation(PulsemuxError):
    pass


class NoChannelDetected(PulsemuxError):
    pass


class TooManyOccupancies(PulsemuxError):
    """More than two channels fired in one record (unsupported)."""


class MaskedPassband(PulsemuxError):
    pass


class OrderingViolation(PulsemuxError):
    pass


class WindowOutsideValidRegion(PulsemuxError):
    pass


class PeakOutsideValidRegion(PulsemuxError):
    pass


class NoZeroCrossing(PulsemuxError):
    pass


class BelowThreshold(PulsemuxError):
    pass


class InsufficientStatistics(PulsemuxError):
    pass


class ConfigError(PulsemuxError):
    """Invalid run configuration; ``violations`` lists ``(field_path, message)``."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)
