"""Exception types shared across the package."""


class InvalidInput(ValueError):
    """Raised when an argument violates an operation's preconditions."""


class TrainingDiverged(RuntimeError):
    """Raised when a loss or gradient becomes non-finite."""


class StorageError(OSError):
    """Raised when an output location cannot be written."""
