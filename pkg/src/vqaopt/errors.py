"""Exception types raised across the package."""


class VqaoptError(Exception):
    """Base class for all package errors."""


class ConfigError(VqaoptError, ValueError):
    """Invalid run or task configuration."""

    def __init__(self, message: str, key_path: str = ""):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}" if key_path else message)


class BackendMismatchError(VqaoptError, ValueError):
    """Operation requires a different simulation backend."""


class ShapeError(VqaoptError, ValueError):
    """Dimension or length mismatch between operands."""


class EncodingError(VqaoptError, ValueError):
    """Classical data cannot be encoded as requested."""


class CapacityError(EncodingError):
    """Feature vector does not fit in the register."""


class IdxFormatError(VqaoptError, ValueError):
    """Malformed IDX file."""


class InsufficientDataError(VqaoptError, ValueError):
    """Not enough examples of a requested class."""


class ResultsFormatError(VqaoptError, ValueError):
    """Malformed results CSV."""
