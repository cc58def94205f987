"""Exception types raised across the package."""


class FoveaSplatError(Exception):
    """Base class for all package errors."""


class FormatError(FoveaSplatError, ValueError):
    """A scene, pose, trace or config file is malformed."""


class EmptySceneError(FormatError):
    """A scene file contains no points."""


class ConfigurationError(FoveaSplatError, ValueError):
    """A camera, foveation or model configuration violates its invariants."""


class DomainError(FoveaSplatError, ValueError):
    """An argument lies outside the domain of a mathematical operation."""


class FrameAborted(FoveaSplatError, RuntimeError):
    """A worker failed while producing a frame; no partial frame is returned."""


class ConsistencyError(FoveaSplatError, AssertionError):
    """Latency accounting violated a mode-specific identity."""
