"""Exception types shared across the package."""


class RomcastError(Exception):
    """Base class for all package errors."""


class InvalidConfig(RomcastError):
    """A configuration value is out of its legal range."""


class StabilityViolation(InvalidConfig):
    """Time step violates the explicit-scheme CFL bounds."""


class ShapeMismatch(RomcastError):
    """Array dimensions do not line up."""


class EmptyInput(RomcastError):
    """An operation received no data."""


class NonFiniteInput(RomcastError):
    """Input contains NaN or Inf."""


class DegenerateData(RomcastError):
    """Data has no variance; a basis/truncation is undefined."""


class NumericalFailure(RomcastError):
    """A numerical routine failed to converge."""


class TapeMismatch(RomcastError):
    """Backward called with a tape that does not match the forward pass."""


class LabelOutOfRange(RomcastError):
    """Binary label is neither 0 nor 1."""


class TooFewSteps(RomcastError):
    """Sequence too short to build even one training window."""


class NonFiniteLoss(RomcastError):
    """Training loss became NaN/Inf (diverged)."""


class StartOutOfRange(RomcastError):
    """Rollout start point leaves no room for window or horizon."""


class MissingArtifact(RomcastError):
    """A pipeline artifact file does not exist."""


class HashMismatch(RomcastError):
    """A pipeline artifact changed after a downstream artifact was built."""
