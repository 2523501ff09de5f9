"""Exception types raised across the package."""


class RffxError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RffxError, ValueError):
    """A parameter value or combination of values is not usable."""


class ShapeError(RffxError, ValueError):
    """An array has the wrong shape or length for the requested operation."""


class DegenerateSignalError(RffxError, ValueError):
    """A signal is degenerate for the requested operation (e.g. all-zero)."""


class DegenerateEmbeddingError(RffxError, ValueError):
    """An embedding vector is degenerate (e.g. zero norm) where a direction is required."""


class MissingImpostorError(RffxError, ValueError):
    """A score set lacks genuine or impostor pairs, so rates are undefined."""


class FormatError(RffxError, ValueError):
    """An on-disk artifact (manifest, checkpoint sidecar, history) is malformed."""
