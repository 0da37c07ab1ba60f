"""Exception types shared across the package."""


class PromptFuseError(Exception):
    """Base class for all library-specific errors."""


class ShapeError(PromptFuseError, ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ConfigError(PromptFuseError, ValueError):
    """A configuration value is out of range or inconsistent."""


class DegenerateInputError(PromptFuseError, ValueError):
    """An input is valid in shape but degenerate in content (all-masked, zero-norm, ...)."""


class VocabularyError(PromptFuseError, ValueError):
    """A token or label id falls outside the embedding table."""


class GradCheckError(PromptFuseError, RuntimeError):
    """The probed function was not finite at the probe point."""


class ArchiveError(PromptFuseError, ValueError):
    """A feature archive on disk is malformed."""


class ChecksumError(ArchiveError):
    """Archive payload bytes do not match the recorded checksum or length."""


class VersionError(ArchiveError):
    """Archive declares a format version this reader does not understand."""


class TrainingDivergedError(PromptFuseError, RuntimeError):
    """Loss became non-finite during optimization."""
