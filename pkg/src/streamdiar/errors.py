"""Exception types raised across the engine."""


class DiarizationError(Exception):
    """Base class for all engine errors."""


class CapacityExceeded(DiarizationError):
    """More speakers intersect a window than the segmentation has channels."""


class EmptySupport(DiarizationError):
    """Pooling was requested for a weight column that sums to zero."""


class DegenerateVector(DiarizationError):
    """A zero-norm vector was passed where a direction is required."""


class OrderViolation(DiarizationError):
    """Slices reached the accumulator out of window order."""


class UriMismatch(DiarizationError):
    """Reference and hypothesis describe different recordings."""


class ParseError(DiarizationError):
    """Malformed RTTM, config or binary container."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ProviderError(DiarizationError):
    """A segmentation or embedding provider failed for a given window."""

    def __init__(self, message: str, window_index: int | None = None):
        self.window_index = window_index
        if window_index is not None:
            message = f"window {window_index}: {message}"
        super().__init__(message)
