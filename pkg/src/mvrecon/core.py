"""Domain types shared by every other module.

Pixel convention: frames live in [-1, 1] (tanh generator range). Metrics
and gating convert to [0, 1] through :func:`to_unit`; 8-bit image I/O
goes through :func:`from_uint8` / :func:`to_uint8`. All types are frozen
after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DimensionMismatch,
    IndexMismatch,
    InvalidFrame,
    InvalidRig,
    InvalidWeights,
)

TAG_PAST = "past"
TAG_FUTURE = "future"
INTRA_TAGS = (TAG_PAST, TAG_FUTURE)

WEIGHT_SUM_TOL = 1e-9


def ref_tag(camera_id: int) -> str:
    """Source tag for a reference camera, e.g. ``ref_2``."""
    return f"ref_{camera_id}"


# --- pixel-domain conversions ------------------------------------------

def to_unit(pixels: np.ndarray) -> np.ndarray:
    """Map [-1, 1] pixels to [0, 1] float64."""
    return (np.asarray(pixels, dtype=np.float64) + 1.0) / 2.0


def from_unit(unit: np.ndarray) -> np.ndarray:
    """Map [0, 1] values to [-1, 1] float32."""
    return (np.asarray(unit, dtype=np.float64) * 2.0 - 1.0).astype(np.float32)


def from_uint8(arr: np.ndarray) -> np.ndarray:
    """Map 8-bit [0, 255] samples to [-1, 1] float32."""
    return (np.asarray(arr, dtype=np.float64) / 255.0 * 2.0 - 1.0).astype(np.float32)


def to_uint8(pixels: np.ndarray) -> np.ndarray:
    """Quantize [-1, 1] pixels to 8-bit; round-trips within 1/255 of range."""
    unit = np.clip(to_unit(pixels), 0.0, 1.0)
    return np.round(unit * 255.0).astype(np.uint8)


# --- frames -------------------------------------------------------------

@dataclass(frozen=True)
class Frame:
    """One image with its camera identity and timeline position.

    ``pixels`` is an H x W x 3 float32 array in [-1, 1], stored read-only.
    ``index`` is the synchronized timeline position (target-camera clock).
    """

    pixels: np.ndarray
    camera_id: int
    index: int
    source_path: Optional[str] = None

    def __post_init__(self) -> None:
        arr = np.array(self.pixels, dtype=np.float32, copy=True)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise InvalidFrame(
                f"core.Frame: expected HxWx3 pixels, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise InvalidFrame("core.Frame: pixels contain NaN/Inf")
        lo, hi = float(arr.min()), float(arr.max())
        if lo < -1.0 or hi > 1.0:
            raise InvalidFrame(
                f"core.Frame: pixel range [{lo:.6g}, {hi:.6g}] outside [-1, 1]"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.pixels.shape  # type: ignore[return-value]


Zone = Tuple[int, int, int, int]  # (x0, y0, x1, y1), half-open pixel rect


@dataclass(frozen=True)
class CameraRig:
    """Camera set with pairwise temporal offsets and overlap zones.

    ``offsets_seconds[c]`` is camera ``c``'s clock offset relative to the
    target camera (target must be 0). ``overlap_zones[c]`` is the pixel
    rect of reference camera ``c``'s frames that corresponds to the target
    camera's field of view; cameras share one ``resolution``.
    """

    n_cameras: int
    target_camera: int
    offsets_seconds: Mapping[int, float]
    fps: float
    overlap_zones: Mapping[int, Zone] = field(default_factory=dict)
    resolution: int = 256

    def __post_init__(self) -> None:
        offsets = dict(self.offsets_seconds)
        zones = {int(c): tuple(int(v) for v in z) for c, z in self.overlap_zones.items()}
        object.__setattr__(self, "offsets_seconds", offsets)
        object.__setattr__(self, "overlap_zones", zones)
        if self.n_cameras < 1:
            raise InvalidRig(f"core.CameraRig: n_cameras={self.n_cameras} < 1")
        if len(offsets) != self.n_cameras:
            raise InvalidRig(
                f"core.CameraRig: {len(offsets)} offsets for {self.n_cameras} cameras"
            )
        if self.target_camera not in offsets:
            raise InvalidRig(
                f"core.CameraRig: target camera {self.target_camera} has no offset entry"
            )
        if offsets[self.target_camera] != 0.0:
            raise InvalidRig(
                f"core.CameraRig: target offset must be 0, got {offsets[self.target_camera]}"
            )
        if self.fps <= 0:
            raise InvalidRig(f"core.CameraRig: fps={self.fps} must be positive")
        if self.resolution < 1:
            raise InvalidRig(f"core.CameraRig: resolution={self.resolution} < 1")
        for cam, zone in zones.items():
            if cam not in offsets or cam == self.target_camera:
                raise InvalidRig(
                    f"core.CameraRig: overlap zone for unknown/target camera {cam}"
                )
            x0, y0, x1, y1 = zone
            if not (0 <= x0 < x1 <= self.resolution and 0 <= y0 < y1 <= self.resolution):
                raise InvalidRig(
                    f"core.CameraRig: zone {zone} of camera {cam} is empty or "
                    f"outside the {self.resolution}x{self.resolution} frame"
                )

    @property
    def camera_ids(self) -> Tuple[int, ...]:
        return tuple(sorted(self.offsets_seconds))

    @property
    def reference_cameras(self) -> Tuple[int, ...]:
        return tuple(c for c in self.camera_ids if c != self.target_camera)

    @property
    def source_tags(self) -> Tuple[str, ...]:
        """Conditioning sources: past, future, then one per reference camera."""
        return INTRA_TAGS + tuple(ref_tag(c) for c in self.reference_cameras)


@dataclass(frozen=True)
class ReconstructionTask:
    """A missing frame index plus its available conditioning frames.

    Cross-frame index consistency is checked by :func:`validate_task`,
    not at construction, so inconsistent tasks can be built for testing.
    """

    missing_index: int
    gap: int
    past: Frame
    future: Frame
    references: Tuple[Frame, ...] = ()
    ground_truth: Optional[Frame] = None

    def __post_init__(self) -> None:
        if self.gap < 1:
            raise IndexMismatch(f"core.ReconstructionTask: gap={self.gap} < 1")
        object.__setattr__(self, "references", tuple(self.references))

    def without_references(self) -> "ReconstructionTask":
        """Copy of this task with all reference frames stripped."""
        return ReconstructionTask(
            missing_index=self.missing_index,
            gap=self.gap,
            past=self.past,
            future=self.future,
            references=(),
            ground_truth=self.ground_truth,
        )

    def with_references(self, references: Sequence[Frame]) -> "ReconstructionTask":
        return ReconstructionTask(
            missing_index=self.missing_index,
            gap=self.gap,
            past=self.past,
            future=self.future,
            references=tuple(references),
            ground_truth=self.ground_truth,
        )


def validate_task(task: ReconstructionTask, rig: CameraRig) -> ReconstructionTask:
    """Check a task's index arithmetic and frame shapes against a rig.

    Returns the task unchanged when every invariant holds.

    Raises:
        IndexMismatch: past/future/reference indices inconsistent with
            ``missing_index`` and ``gap``, or a reference camera unknown.
        DimensionMismatch: any frame's shape differs from the others.
    """
    if task.past.index != task.missing_index - task.gap:
        raise IndexMismatch(
            f"core.validate_task: past index {task.past.index} != "
            f"{task.missing_index} - {task.gap}"
        )
    if task.future.index != task.missing_index + task.gap:
        raise IndexMismatch(
            f"core.validate_task: future index {task.future.index} != "
            f"{task.missing_index} + {task.gap}"
        )
    for ref in task.references:
        if ref.camera_id not in rig.reference_cameras:
            raise IndexMismatch(
                f"core.validate_task: reference camera {ref.camera_id} not in rig"
            )
        if ref.index != task.missing_index:
            raise IndexMismatch(
                f"core.validate_task: reference frame of camera {ref.camera_id} "
                f"has index {ref.index}, expected {task.missing_index}"
            )
    frames = [task.past, task.future, *task.references]
    if task.ground_truth is not None:
        frames.append(task.ground_truth)
    shape = frames[0].shape
    for frame in frames[1:]:
        if frame.shape != shape:
            raise DimensionMismatch(
                f"core.validate_task: frame shape {frame.shape} of camera "
                f"{frame.camera_id} differs from {shape}"
            )
    return task


@dataclass(frozen=True)
class CandidateSet:
    """Per-source reconstructions of one missing frame, in source order."""

    candidates: Tuple[Tuple[str, Frame], ...]
    gap: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "candidates", tuple(self.candidates))
        tags = [tag for tag, _ in self.candidates]
        if len(set(tags)) != len(tags):
            raise InvalidWeights(f"core.CandidateSet: duplicate source tags {tags}")
        shapes = {frame.shape for _, frame in self.candidates}
        if len(shapes) > 1:
            raise DimensionMismatch(
                f"core.CandidateSet: candidate shapes disagree: {sorted(shapes)}"
            )

    @property
    def tags(self) -> Tuple[str, ...]:
        return tuple(tag for tag, _ in self.candidates)

    def __len__(self) -> int:
        return len(self.candidates)


@dataclass(frozen=True)
class FusionWeights:
    """Per-gap weight vectors over source tags, on the probability simplex."""

    table: Mapping[int, Mapping[str, float]]

    def __post_init__(self) -> None:
        table = {
            int(gap): {str(t): float(w) for t, w in vec.items()}
            for gap, vec in self.table.items()
        }
        object.__setattr__(self, "table", table)
        for gap, vec in table.items():
            if not vec:
                raise InvalidWeights(f"core.FusionWeights: empty vector for gap {gap}")
            for tag, w in vec.items():
                if not (0.0 <= w <= 1.0) or not np.isfinite(w):
                    raise InvalidWeights(
                        f"core.FusionWeights: weight {w} for ({gap}, {tag}) "
                        "outside [0, 1]"
                    )
            total = sum(vec.values())
            if abs(total - 1.0) > WEIGHT_SUM_TOL:
                raise InvalidWeights(
                    f"core.FusionWeights: gap {gap} weights sum to {total!r}, not 1"
                )

    @property
    def gaps(self) -> Tuple[int, ...]:
        return tuple(sorted(self.table))

    def for_gap(self, gap: int) -> Mapping[str, float]:
        if gap not in self.table:
            raise InvalidWeights(f"core.FusionWeights: no weights for gap {gap}")
        return self.table[gap]

    def intra_mass(self, gap: int) -> float:
        """Total weight on the intra-camera (past + future) sources."""
        vec = self.for_gap(gap)
        return sum(vec.get(tag, 0.0) for tag in INTRA_TAGS)
