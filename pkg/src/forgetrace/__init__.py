"""Masked-reconstruction audio deepfake detection at desk scale."""

from .errors import InvalidInput, StorageError, TrainingDiverged

__version__ = "0.1.0"
