"""Exception types shared across the package."""


class SnoicError(Exception):
    """Base class for all errors raised by this package."""


class DataError(SnoicError):
    """Malformed dataset, vocabulary, or split input."""


class PairingError(SnoicError):
    """A different-intent batch pairing could not be constructed."""


class CheckpointError(SnoicError):
    """Checkpoint file is malformed or inconsistent with the model."""


class TrainingError(SnoicError):
    """Training cannot proceed (bad hyperparameters, degenerate data, non-finite loss)."""


class ConfigError(SnoicError):
    """Invalid experiment configuration; maps to usage exit code 2 in the CLI."""
