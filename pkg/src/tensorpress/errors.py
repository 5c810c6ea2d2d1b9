"""Exception taxonomy shared across the package."""


class TensorpressError(Exception):
    """Base class for all library errors."""


class ShapeError(TensorpressError):
    """Axis counts or dimension sizes do not match what an operation needs."""


class ConfigError(TensorpressError):
    """A configuration value is out of range or references a missing layer."""


class ArchiveError(TensorpressError):
    """Base class for container-format errors."""


class BadMagicError(ArchiveError):
    """File does not start with the QTNS magic string."""


class UnsupportedVersionError(ArchiveError):
    """File declares a format version this reader does not understand."""


class TruncatedArchiveError(ArchiveError):
    """File ends before the declared payload is complete."""


class DuplicateNameError(ArchiveError):
    """Two entries in one archive share a name."""


class DivergenceError(TensorpressError):
    """An iterative optimization produced a non-finite loss."""

    def __init__(self, iteration: int):
        self.iteration = iteration
        super().__init__(f"loss became non-finite at iteration {iteration}")


class VerificationError(TensorpressError):
    """A compression report disagrees with the stored artifacts."""
