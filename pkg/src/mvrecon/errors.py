"""Exception hierarchy for the reconstruction pipeline.

Everything raised on purpose by this package derives from
:class:`MvreconError`, so the CLI (and library callers) can tell domain
failures apart from programming errors. Messages are prefixed with the
failing ``module.operation`` at the raise site.
"""


class MvreconError(Exception):
    """Base class for all domain errors raised by mvrecon."""


# --- core -------------------------------------------------------------

class InvalidFrame(MvreconError):
    """Frame construction violated a pixel-range or shape invariant."""


class InvalidRig(MvreconError):
    """CameraRig construction violated an offset or overlap-zone invariant."""


class IndexMismatch(MvreconError):
    """Task frame indices are inconsistent with the missing index and gap."""


class DimensionMismatch(MvreconError):
    """Frames that must share dimensions do not."""


class InvalidWeights(MvreconError):
    """Fusion weight vectors are malformed or do not cover a request."""


# --- data -------------------------------------------------------------

class EmptyCamera(MvreconError):
    """A camera frame directory contains no readable frames."""


class UnreadableImage(MvreconError):
    """An image file could not be decoded; message carries the path."""


class NoSynchronousFrames(MvreconError):
    """Offset alignment left no index present in every camera."""


class GapTooLarge(MvreconError):
    """No valid center index exists for the requested gap."""


class NonOverlappingViews(MvreconError):
    """Synthetic view transforms produce a camera pair with no overlap."""


class EmptySplit(MvreconError):
    """The requested split holds no usable training pairs."""


# --- model ------------------------------------------------------------

class BadResolution(MvreconError):
    """Input spatial size is incompatible with the network depth."""


class CheckpointError(MvreconError):
    """A checkpoint file is missing, malformed, or of the wrong kind."""


# --- training ---------------------------------------------------------

class NonFiniteLoss(MvreconError):
    """A loss term became NaN/Inf; message carries the step number."""


# --- fusion -----------------------------------------------------------

class MissingModel(MvreconError):
    """The model bank has no entry for a source tag required by a task."""


class NoCandidates(MvreconError):
    """fuse() was asked to merge an empty candidate set."""


class EmptyValidation(MvreconError):
    """Weight calibration found no validation tasks for a gap."""


# --- metrics ----------------------------------------------------------

class FrameTooSmall(MvreconError):
    """Frame is smaller than the SSIM window."""


# --- eval / io --------------------------------------------------------

class UnwritablePath(MvreconError):
    """An output file or directory could not be written."""


class ConfigError(MvreconError):
    """Configuration file is missing keys, has unknown keys, or bad values."""
