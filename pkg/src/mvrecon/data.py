"""Dataset ingestion, synchronization, splitting, task sampling, gating.

Frames are loaded (or synthesized) once into an immutable
:class:`SequenceStore`; everything downstream is pure reads. Indices in
a store are the synchronized timeline: after ingest, index ``i`` refers
to the same wall-clock instant in every camera.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError

from .core import CameraRig, Frame, ReconstructionTask, from_uint8, to_unit
from .errors import (
    EmptyCamera,
    EmptySplit,
    GapTooLarge,
    InvalidRig,
    NoSynchronousFrames,
    UnreadableImage,
)

SPLIT_TRAIN = "train"
SPLIT_VAL = "val"
SPLIT_TEST = "test"
SPLIT_ALL = "all"
SPLITS = (SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")

GATING_DECAY = 0.95


def assign_splits(
    length: int, train_frac: float = 0.8, val_frac: float = 0.1
) -> dict[int, str]:
    """Contiguous-in-time split: train block, then val tail, then test.

    ``val_frac`` is carved from the training portion. Fractions are
    honored to within one frame.
    """
    if length < 1:
        raise EmptySplit(f"data.assign_splits: sequence length {length} < 1")
    n_block = int(round(train_frac * length))
    n_val = int(round(val_frac * n_block))
    n_train = n_block - n_val
    labels: dict[int, str] = {}
    for i in range(length):
        if i < n_train:
            labels[i] = SPLIT_TRAIN
        elif i < n_block:
            labels[i] = SPLIT_VAL
        else:
            labels[i] = SPLIT_TEST
    return labels


@dataclass(frozen=True)
class SequenceStore:
    """Synchronized per-camera frame sequences plus the split assignment.

    ``frames[camera_id][i]`` is the frame at synchronized index ``i``;
    all cameras cover the same index range 0..length-1.
    ``applied_shifts`` records the file-index shift ingest applied per
    camera (0 for synthetic stores).
    """

    frames: Mapping[int, Tuple[Frame, ...]]
    rig: CameraRig
    split_assignment: Mapping[int, str]
    applied_shifts: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        frames = {int(c): tuple(seq) for c, seq in self.frames.items()}
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "split_assignment", dict(self.split_assignment))
        object.__setattr__(self, "applied_shifts", dict(self.applied_shifts))
        lengths = {c: len(seq) for c, seq in frames.items()}
        if len(set(lengths.values())) > 1:
            raise InvalidRig(f"data.SequenceStore: camera lengths differ: {lengths}")
        if set(frames) != set(self.rig.camera_ids):
            raise InvalidRig(
                f"data.SequenceStore: cameras {sorted(frames)} do not match rig "
                f"{self.rig.camera_ids}"
            )
        for cam, seq in frames.items():
            for i, frame in enumerate(seq):
                if frame.index != i or frame.camera_id != cam:
                    raise InvalidRig(
                        f"data.SequenceStore: frame at slot {i} of camera {cam} "
                        f"carries (camera={frame.camera_id}, index={frame.index})"
                    )

    @property
    def length(self) -> int:
        return len(next(iter(self.frames.values()))) if self.frames else 0

    @property
    def target_frames(self) -> Tuple[Frame, ...]:
        return self.frames[self.rig.target_camera]

    def indices_for_split(self, split: str) -> Tuple[int, ...]:
        if split == SPLIT_ALL:
            return tuple(range(self.length))
        if split not in SPLITS:
            raise EmptySplit(f"data.SequenceStore: unknown split {split!r}")
        return tuple(
            i for i in range(self.length) if self.split_assignment.get(i) == split
        )


# --- ingestion ----------------------------------------------------------

def _list_frame_files(directory: Path) -> List[Path]:
    files = sorted(
        p for p in directory.iterdir()
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    )
    return files


def _load_image(path: Path, resolution: int) -> np.ndarray:
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            if rgb.size != (resolution, resolution):
                rgb = rgb.resize((resolution, resolution), Image.Resampling.BILINEAR)
            return from_uint8(np.asarray(rgb, dtype=np.uint8))
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise UnreadableImage(f"data.ingest: cannot read {path}: {exc}") from exc


def ingest(
    frame_directories: Mapping[int, Path | str],
    rig: CameraRig,
    train_frac: float = 0.8,
    val_frac: float = 0.1,
) -> SequenceStore:
    """Load per-camera frame directories and synchronize them.

    Reference camera file indices are shifted by round(offset * fps) so
    that equal store indices are synchronous; edge frames without a full
    set of partners are dropped. Images are resized to ``rig.resolution``.

    Raises:
        EmptyCamera: a directory holds no image files.
        UnreadableImage: a file could not be decoded (message has path).
        NoSynchronousFrames: shifting leaves no common index range.
    """
    if set(frame_directories) != set(rig.camera_ids):
        raise InvalidRig(
            f"data.ingest: directories for cameras {sorted(frame_directories)} "
            f"do not match rig cameras {rig.camera_ids}"
        )
    files: dict[int, List[Path]] = {}
    for cam, directory in frame_directories.items():
        directory = Path(directory)
        if not directory.is_dir():
            raise EmptyCamera(f"data.ingest: camera {cam} directory {directory} missing")
        cam_files = _list_frame_files(directory)
        if not cam_files:
            raise EmptyCamera(f"data.ingest: camera {cam} directory {directory} is empty")
        files[cam] = cam_files

    shifts = {
        cam: int(round(rig.offsets_seconds[cam] * rig.fps)) for cam in rig.camera_ids
    }
    start = max(0, max(-s for s in shifts.values()))
    end = min(len(files[cam]) - shifts[cam] for cam in rig.camera_ids)
    if end <= start:
        raise NoSynchronousFrames(
            f"data.ingest: no common index range after shifts {shifts}"
        )

    frames: dict[int, Tuple[Frame, ...]] = {}
    for cam in rig.camera_ids:
        seq = []
        for i in range(start, end):
            path = files[cam][i + shifts[cam]]
            seq.append(
                Frame(
                    pixels=_load_image(path, rig.resolution),
                    camera_id=cam,
                    index=i - start,
                    source_path=str(path),
                )
            )
        frames[cam] = tuple(seq)

    length = end - start
    return SequenceStore(
        frames=frames,
        rig=rig,
        split_assignment=assign_splits(length, train_frac, val_frac),
        applied_shifts=shifts,
    )


# --- task sampling --------------------------------------------------------

def valid_centers(store: SequenceStore, gap: int, split: str) -> Tuple[int, ...]:
    """Center indices in ``split`` whose +-gap neighbors exist."""
    if gap < 1:
        raise GapTooLarge(f"data.sample_tasks: gap={gap} < 1")
    length = store.length
    return tuple(
        i for i in store.indices_for_split(split)
        if i - gap >= 0 and i + gap < length
    )


def sample_tasks(
    store: SequenceStore, gap: int, split: str = SPLIT_ALL
) -> List[ReconstructionTask]:
    """Sliding-window tasks: one per valid center index in the split.

    Each task carries the past/future target-camera frames, one
    synchronous reference frame per reference camera, and ground truth.

    Raises GapTooLarge when no valid center exists.
    """
    centers = valid_centers(store, gap, split)
    if not centers:
        raise GapTooLarge(
            f"data.sample_tasks: no center with both neighbors at gap {gap} "
            f"in split {split!r} (length {store.length})"
        )
    target = store.target_frames
    refs = store.rig.reference_cameras
    tasks = []
    for i in centers:
        tasks.append(
            ReconstructionTask(
                missing_index=i,
                gap=gap,
                past=target[i - gap],
                future=target[i + gap],
                references=tuple(store.frames[cam][i] for cam in refs),
                ground_truth=target[i],
            )
        )
    return tasks


# --- overlap-zone activity gating -----------------------------------------

def _zone_pixels(frame: Frame, zone: Tuple[int, int, int, int]) -> np.ndarray:
    x0, y0, x1, y1 = zone
    return to_unit(frame.pixels[y0:y1, x0:x1])


def zone_activity(
    frame: Frame, zone: Tuple[int, int, int, int], background: np.ndarray
) -> float:
    """Mean absolute difference (in [0, 1] units) of a zone vs. background."""
    return float(np.mean(np.abs(_zone_pixels(frame, zone) - background)))


def gate_references(
    task: ReconstructionTask,
    rig: CameraRig,
    activity_threshold: float,
    backgrounds: Mapping[int, np.ndarray],
) -> ReconstructionTask:
    """Drop reference frames whose overlap zone shows no activity.

    A reference is retained when the mean absolute difference between its
    overlap zone and the supplied background estimate reaches
    ``activity_threshold`` (so a zero threshold retains everything).
    References without a configured zone or background are retained.
    """
    kept = []
    for ref in task.references:
        zone = rig.overlap_zones.get(ref.camera_id)
        background = backgrounds.get(ref.camera_id)
        if zone is None or background is None:
            kept.append(ref)
            continue
        if zone_activity(ref, zone, background) >= activity_threshold:
            kept.append(ref)
    if len(kept) == len(task.references):
        return task
    return task.with_references(kept)


class ActivityGater:
    """Streaming overlap-zone gate over a store's reference sequences.

    Maintains, per reference camera, an exponential moving average of the
    zone seen so far (decay :data:`GATING_DECAY`, initialized with the
    first frame); a frame's activity is measured against the background
    of strictly earlier frames. Decisions for the whole sequence are
    precomputed at construction, so gating any task is O(refs).
    """

    def __init__(
        self,
        store: SequenceStore,
        activity_threshold: float,
        decay: float = GATING_DECAY,
    ) -> None:
        self.rig = store.rig
        self.activity_threshold = float(activity_threshold)
        self.decay = float(decay)
        self._keep: dict[int, np.ndarray] = {}
        self._backgrounds: dict[int, np.ndarray] = {}
        for cam in store.rig.reference_cameras:
            zone = store.rig.overlap_zones.get(cam)
            if zone is None:
                continue
            seq = store.frames[cam]
            keep = np.ones(len(seq), dtype=bool)
            background = _zone_pixels(seq[0], zone)
            for i, frame in enumerate(seq):
                keep[i] = zone_activity(frame, zone, background) >= self.activity_threshold
                current = _zone_pixels(frame, zone)
                background = self.decay * background + (1.0 - self.decay) * current
            self._keep[cam] = keep
            self._backgrounds[cam] = background

    def keeps(self, camera_id: int, index: int) -> bool:
        keep = self._keep.get(camera_id)
        return True if keep is None else bool(keep[index])

    def gate(self, task: ReconstructionTask) -> ReconstructionTask:
        kept = [
            ref for ref in task.references if self.keeps(ref.camera_id, ref.index)
        ]
        if len(kept) == len(task.references):
            return task
        return task.with_references(kept)
