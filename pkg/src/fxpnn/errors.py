"""Exception hierarchy shared across the package.

Error messages start with a stable phrase ("shape error", "bad magic", ...)
so callers and the CLI can rely on them; everything after the colon is
free-form context.
"""


class FxpnnError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(FxpnnError):
    """Tensor/layer dimensions do not match."""


class FormatError(FxpnnError):
    """Q-format mismatch or invalid Q-format descriptor."""


class NonFiniteInputError(FxpnnError):
    """NaN or infinity fed to a quantization routine."""


class FormatChainError(FxpnnError):
    """A derived bias/output shift came out negative."""


class EmptyTensorError(FxpnnError):
    """An operation received an empty tensor."""


class SerializationError(FxpnnError):
    """Base class for model-file decode failures."""


class BadMagicError(SerializationError):
    pass


class VersionMismatchError(SerializationError):
    pass


class TruncatedBlobError(SerializationError):
    pass


class ChecksumError(SerializationError):
    pass


class PipelineError(FxpnnError):
    """Base class for signal-preprocessing failures."""


class NyquistError(PipelineError):
    """Sampling rate too low for the requested passband."""


class ResampleDirectionError(PipelineError):
    """Upsampling requested from a downsampling-only resampler."""


class ShortRecordError(PipelineError):
    """Record shorter than one analysis window."""


class DatasetError(FxpnnError):
    """Base class for manifest/record-loading failures."""


class ManifestError(DatasetError):
    pass


class MissingFileError(DatasetError):
    pass


class UnknownLabelError(DatasetError):
    pass


class SchemeError(FxpnnError):
    """Quantization scheme does not cover the model."""


class CalibrationError(FxpnnError):
    """Activation calibration asked to run on no data."""


class ProfilerError(FxpnnError):
    """Nonsensical measurement input (zero time, zero power, ...)."""
