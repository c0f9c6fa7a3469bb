"""Exception types shared across the library."""


class TrajclustError(Exception):
    """Base class for all library errors."""


class ConfigError(TrajclustError):
    """Invalid configuration value or combination."""


class InputError(TrajclustError):
    """Malformed or out-of-contract input data."""


class DegenerateDataError(TrajclustError):
    """Data without enough structure to fit a model (e.g. zero variance)."""


class FitError(TrajclustError):
    """Model fitting failed to make progress."""


class NormalizationError(TrajclustError):
    """A vector that must be unit-normalized turned out to be zero."""


class NumericError(TrajclustError):
    """Non-finite value produced during numeric evaluation."""


class FormatError(TrajclustError):
    """Corrupt or mismatched binary file."""


class TrainingError(TrajclustError):
    """Training loop reached a degenerate state."""


class CompatibilityError(TrajclustError):
    """Artifacts whose shapes or configurations do not match."""
