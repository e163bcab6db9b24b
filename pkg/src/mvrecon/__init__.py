"""Multi-view missing-frame reconstruction.

Per-source conditional GANs (past/future frames within the target
camera, synchronous frames from overlapping reference cameras) produce
candidate reconstructions of a missing frame, which are merged by a
weighted average whose per-gap weights are calibrated by maximizing
validation PSNR.

Core domain types are importable from the package root; heavier modules
(``model``, ``training``, ``fusion``, ``evaluation``) pull in torch and
are imported explicitly.
"""

from .core import (
    CameraRig,
    CandidateSet,
    Frame,
    FusionWeights,
    ReconstructionTask,
    validate_task,
)
from .errors import MvreconError

__version__ = "0.1.0"

__all__ = [
    "CameraRig",
    "CandidateSet",
    "Frame",
    "FusionWeights",
    "MvreconError",
    "ReconstructionTask",
    "validate_task",
    "__version__",
]
