"""Exception hierarchy for the emulator.

EmulatorError is the base for every domain error raised by this package;
the CLI maps it to exit code 2 (data error). Anything else escaping to the
CLI is an internal invariant violation (exit code 3).
"""


class EmulatorError(Exception):
    """Base class for all domain errors."""


# numerics
class AccumulatorOverflow(EmulatorError):
    """32-bit accumulator limit of the emulated datapath was exceeded."""


class IterationCountTooSmall(EmulatorError):
    """CORDIC needs at least 4 micro-rotations (first repeated index)."""


# quant
class EmptyTensor(EmulatorError):
    pass


class InvalidScale(EmulatorError):
    pass


class InvalidClipRange(EmulatorError):
    pass


class InvalidAlpha(EmulatorError):
    pass


class CodeOutOfRange(EmulatorError):
    pass


class PolicyBudgetExceedsLayerCount(EmulatorError):
    pass


# nn
class ShapeMismatch(EmulatorError):
    pass


class LengthTooShort(EmulatorError):
    pass


class InvalidChain(EmulatorError):
    pass


# container formats
class BadMagic(EmulatorError):
    pass


class UnsupportedVersion(EmulatorError):
    pass


class ChecksumMismatch(EmulatorError):
    pass


class TruncatedFile(EmulatorError):
    pass


# prune
class TargetUnachievable(EmulatorError):
    pass


class NoFlattenLayer(EmulatorError):
    pass


# sim
class UnsupportedRegime(EmulatorError):
    pass


class TooFewLayers(EmulatorError):
    pass


class InvalidClock(EmulatorError):
    pass


class NegativeCoefficient(EmulatorError):
    pass


# dsp
class AudioTooShort(EmulatorError):
    pass


class SegmentTooShort(EmulatorError):
    pass


class SilentSignal(EmulatorError):
    pass


class UnsupportedWavFormat(EmulatorError):
    pass


class SampleRateMismatch(EmulatorError):
    pass


# app
class EmptyMatrix(EmulatorError):
    pass
