"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for every error raised by butlerkit."""


class EmptyAfterTrim(ToolkitError):
    """Trimming left too few samples; the demonstration contains no motion."""


class OutOfRange(ToolkitError):
    """A requested time lies outside the span of the trajectory."""


class MixedLabels(ToolkitError):
    """Demonstrations with different movement labels were combined."""


class MixedDimensions(ToolkitError):
    """Demonstrations with different joint dimensions were combined."""


class TooFewDistinctPoints(ToolkitError):
    """Fewer distinct data points than requested clusters."""


class DegenerateComponent(ToolkitError):
    """A mixture covariance is not positive definite even after regularization."""


class FormatError(ToolkitError):
    """A persisted file is malformed, incomplete, or has an unsupported version."""


class NoValidDepth(ToolkitError):
    """Every depth pixel under a detection mask is invalid."""


class StubMissing(ToolkitError):
    """A scenario references a stub binding that was not provided."""


class TaskActionFailed(ToolkitError):
    """A task's bound action raised during scenario execution."""
