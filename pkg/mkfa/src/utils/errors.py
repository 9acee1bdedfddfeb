"""Exception hierarchy"""


class MkfaError(Exception):
    """Root of every error raised by the library"""


class ShapeError(MkfaError, ValueError):
    """Tensor extents or channel counts do not fit an operation"""


class NonFiniteError(MkfaError, FloatingPointError):
    """NaN or Inf produced or encountered"""


class TapeError(MkfaError):
    """Misuse of the differentiation tape"""


class ConfigError(MkfaError, ValueError):
    """Invalid architecture, training or generator configuration"""


class ImageFormatError(MkfaError):
    """Malformed or truncated PPM file"""


class CorpusError(MkfaError):
    """Corpus generation or manifest problem"""


class SpectrumError(MkfaError, ValueError):
    """Degenerate input to a spectral analysis"""


class CheckpointError(MkfaError):
    """Unreadable or inconsistent checkpoint"""


class EvaluationError(MkfaError, ValueError):
    """Degenerate evaluation input (empty split, single class)"""


class UsageError(MkfaError):
    """Bad command-line usage"""
