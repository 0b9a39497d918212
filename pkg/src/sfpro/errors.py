"""Exception types raised across the package."""


class SfproError(Exception):
    """Base class for all package errors."""


class ShapeError(SfproError, ValueError):
    pass


class WavError(SfproError):
    pass


class WavMissingError(WavError, FileNotFoundError):
    pass


class MultiChannelError(WavError):
    pass


class UnsupportedEncodingError(WavError):
    pass


class TruncatedWavError(WavError):
    pass


class MixingError(SfproError, ValueError):
    pass


class CorpusError(SfproError, ValueError):
    pass


class CheckpointError(SfproError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class ConfigMismatchError(CheckpointError):
    def __init__(self, field, expected, found):
        super().__init__(f"config mismatch at '{field}': expected {expected!r}, found {found!r}")
        self.field = field


class NonFiniteLossError(SfproError, FloatingPointError):
    def __init__(self, batch_id, value):
        super().__init__(f"non-finite loss {value!r} on batch {batch_id!r}")
        self.batch_id = batch_id
