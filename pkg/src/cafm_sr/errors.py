"""Exception hierarchy shared by all modules.

Every error carries an ``exit_code`` so the CLI can map failures onto its
documented process exit codes (2 usage, 3 data, 4 divergence, 5 environment).
"""


class CafmError(Exception):
    exit_code = 1


class UsageError(CafmError):
    """Bad command line or configuration input."""

    exit_code = 2


class ConfigError(UsageError):
    """Unsupported architecture, scale, or kernel combination."""


class DataError(CafmError):
    exit_code = 3


class DecodeError(DataError):
    """Input video or frame directory could not be decoded."""


class EmptyInputError(DataError):
    """Decoding succeeded but produced zero frames."""


class InvalidScaleError(DataError):
    """Scale factor outside the supported {2, 3, 4} set."""


class InvalidChunkingError(DataError):
    """Chunk count incompatible with the video's frame count."""


class InvalidPatchError(DataError):
    """Requested patch does not fit inside the frames."""


class ShapeError(DataError):
    """Tensor shape mismatch between operands."""


class AnalysisError(DataError):
    """Feature analysis over incompatible models."""


class EvalError(DataError):
    """Evaluation inputs inconsistent with the model (e.g. scale mismatch)."""


class PackError(DataError):
    """Model state inconsistent with its manifest; cannot serialize."""


class BundleFormatError(DataError):
    """Bundle file has a bad magic value or unsupported version."""


class BundleTruncatedError(DataError):
    """Bundle file ends before the declared payload."""


class BundleShapeError(DataError):
    """Bundle tensor shapes disagree with the architecture manifest."""


class RateError(DataError):
    """Codec rate matching could not reach the requested byte budget."""

    def __init__(self, message, floor_bytes=None):
        super().__init__(message)
        self.floor_bytes = floor_bytes


class TrainingDivergedError(CafmError):
    """Loss became non-finite during optimization."""

    exit_code = 4


class EncoderMissingError(CafmError):
    """No system video encoder available for the codec baseline."""

    exit_code = 5
