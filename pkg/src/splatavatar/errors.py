"""Exception types raised by the avatar toolkit.

Every error that crosses a module boundary has its own class so callers
(and the CLI exit-code mapping) can distinguish failure modes without
string matching.
"""


class SplatAvatarError(Exception):
    """Base class for all toolkit errors."""


# --- splat PLY I/O ---------------------------------------------------------

class PlyFormatError(SplatAvatarError):
    """Malformed PLY header or unsupported encoding; names the offending line."""


class PlySchemaError(SplatAvatarError):
    """A required vertex property is missing or inconsistent; names the property."""


class PlyLengthError(SplatAvatarError):
    """Body byte count does not match the header."""

    def __init__(self, expected: int, actual: int):
        self.expected = expected
        self.actual = actual
        super().__init__(f"truncated PLY body: expected {expected} bytes, got {actual}")


class DecodeError(SplatAvatarError):
    """Raw splat attributes could not be decoded (non-finite or degenerate)."""


# --- subject isolation -----------------------------------------------------

class EstimationError(SplatAvatarError):
    """Not enough usable splats to estimate a scene statistic."""


class IsolationError(SplatAvatarError):
    """Filtering removed every splat. Carries the filter report."""

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


class NormalizationError(SplatAvatarError):
    """Subject height too degenerate to normalize."""


# --- template fitting ------------------------------------------------------

class AmbiguousOrientationError(SplatAvatarError):
    """Horizontal covariance is near-isotropic; a manual yaw is required."""


class FitFailureError(SplatAvatarError):
    """Fit objective stayed above threshold. Carries the best FitResult."""

    def __init__(self, message, result=None):
        self.result = result
        super().__init__(message)


# --- rig / animation -------------------------------------------------------

class RigError(SplatAvatarError):
    """Rig file violates a structural invariant (weights, hierarchy, references)."""


class AnimationError(SplatAvatarError):
    """Animation file violates a structural invariant (key ordering, duration)."""


# --- binding / bundles -----------------------------------------------------

class BindingError(SplatAvatarError):
    """Relative transforms could not be computed (singular vertex frames)."""

    def __init__(self, message, splat_indices=None):
        self.splat_indices = splat_indices
        super().__init__(message)


class BundleFormatError(SplatAvatarError):
    """Avatar bundle bytes are malformed (magic, version, truncation)."""


class RigMismatchError(SplatAvatarError):
    """Bundle was bound against a different rig than the one supplied."""


# --- runtime ---------------------------------------------------------------

class OrientationError(SplatAvatarError):
    """Rotation extraction failed (singular or reflective linear part)."""
