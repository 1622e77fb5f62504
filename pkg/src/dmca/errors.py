"""Exception types shared across the package."""


class DmcaError(Exception):
    """Base class for all package errors."""


class ShapeError(DmcaError, ValueError):
    """Input dimensions do not match a layer or model."""


class CorruptedStateError(DmcaError, ValueError):
    """A recurrent state contains non-finite values."""


class StaleTapeError(DmcaError, RuntimeError):
    """Backward was called twice on the same forward recording."""


class PoisonedUpdateError(DmcaError, FloatingPointError):
    """Non-finite gradients reached the optimizer; the update was skipped."""


class ConfigError(DmcaError, ValueError):
    """Invalid or inconsistent configuration."""


class DataError(DmcaError, ValueError):
    """Not enough (or malformed) data for the requested operation."""


class EndOfTrace(DmcaError, IndexError):
    """A slot index falls outside the channel trace."""


class InvalidDecisionError(DmcaError, ValueError):
    """A decision references a channel outside 0..M-1."""


class EncodingError(DmcaError, ValueError):
    """A raw actor output lies outside the open interval (0, 1)."""


class InfeasibleError(DmcaError, ValueError):
    """More users than channels were requested."""


class CheckpointError(DmcaError, OSError):
    """A checkpoint file is missing or unreadable."""
