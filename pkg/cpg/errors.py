"""Exceptions raised by the CPG engine."""

from __future__ import annotations


class CpgError(Exception):
    """Base exception for the engine."""


class ShapeError(CpgError):
    """Exception for width, length or dimension mismatches."""


class NonFiniteError(CpgError):
    """Exception for NaN or infinite inputs and hyperparameters."""


class LabelRangeError(CpgError):
    """Exception for labels outside the head width."""


class LedgerError(CpgError):
    """Exception for invalid ledger operations."""


class ForgettingHazardError(LedgerError):
    """Raised when a commit tries to claim an index another task owns."""

    def __init__(self, index: int, owner: int) -> None:
        """Initialize with the offending index and its current owner."""
        super().__init__(f"Index {index} is already owned by task {owner}")
        self.index = index
        self.owner = owner


class MaskError(CpgError):
    """Exception for pick masks that do not cover the prior-owned set."""


class GoalUnreachableError(CpgError):
    """Raised when a model cannot meet its accuracy goal."""

    def __init__(self, achieved: float, goal: float, details: str = "") -> None:
        """Initialize with the achieved accuracy and the goal."""
        message = f"Accuracy {achieved:.4f} below goal {goal:.4f}"
        super().__init__(f"{message} {details}".strip())
        self.achieved = achieved
        self.goal = goal


class UnknownTaskError(CpgError):
    """Exception for task ids that have not been committed."""


class ConfigError(CpgError):
    """Exception for invalid run configuration."""


class DataError(CpgError):
    """Exception for dataset problems."""


class DataFormatError(DataError):
    """Exception for malformed or truncated data files."""


class CheckpointError(CpgError):
    """Exception for unreadable checkpoints."""


class ChecksumError(CheckpointError):
    """Raised when the trailing CRC32 does not match the payload."""


class PruneError(CpgError):
    """Exception for invalid pruning requests."""
