"""Shared builders for tests: random frames, tiny stores, echo banks."""

from __future__ import annotations

import numpy as np

from mvrecon.core import CameraRig, Frame, ReconstructionTask
from mvrecon.data import SequenceStore, assign_splits
from mvrecon.fusion import EchoModel
from mvrecon.synth import SynthConfig, synthesize
from mvrecon.training import SourceModelBank


def random_pixels(rng: np.random.Generator, h: int = 16, w: int = 16) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=(h, w, 3)).astype(np.float32)


def make_frame(
    rng: np.random.Generator,
    h: int = 16,
    w: int = 16,
    camera_id: int = 1,
    index: int = 0,
) -> Frame:
    return Frame(pixels=random_pixels(rng, h, w), camera_id=camera_id, index=index)


def constant_frame(value: float, h: int = 16, w: int = 16, camera_id: int = 1, index: int = 0) -> Frame:
    return Frame(
        pixels=np.full((h, w, 3), value, dtype=np.float32),
        camera_id=camera_id,
        index=index,
    )


def single_camera_store(
    length: int = 100, resolution: int = 8, seed: int = 0
) -> SequenceStore:
    """One-camera store with cheap random frames (shape checks, sampling)."""
    rng = np.random.default_rng(seed)
    rig = CameraRig(
        n_cameras=1,
        target_camera=1,
        offsets_seconds={1: 0.0},
        fps=10.0,
        overlap_zones={},
        resolution=resolution,
    )
    frames = tuple(
        Frame(pixels=random_pixels(rng, resolution, resolution), camera_id=1, index=i)
        for i in range(length)
    )
    return SequenceStore(
        frames={1: frames},
        rig=rig,
        split_assignment=assign_splits(length),
        applied_shifts={1: 0},
    )


def tiny_synth_store(
    seed: int = 3,
    length: int = 80,
    resolution: int = 32,
    n_cameras: int = 3,
    object_speed: float = 0.8,
):
    cfg = SynthConfig(
        n_cameras=n_cameras,
        canvas_size=64,
        resolution=resolution,
        n_objects=2,
        object_speed=object_speed,
        sequence_length=length,
        seed=seed,
    )
    return synthesize(cfg)


def identity_view_store(seed: int = 5, length: int = 60, resolution: int = 32):
    """All cameras share one window and brightness: views are bit-identical,
    so an EchoModel reference candidate equals ground truth exactly."""
    window = (8.0, 8.0, 48.0)
    cfg = SynthConfig(
        n_cameras=3,
        canvas_size=64,
        resolution=resolution,
        n_objects=2,
        object_speed=0.7,
        sequence_length=length,
        seed=seed,
        view_transforms={1: window, 2: window, 3: window},
        brightness={1: 1.0, 2: 1.0, 3: 1.0},
    )
    return synthesize(cfg)


def echo_bank(tags=("past", "future", "ref_2", "ref_3")) -> SourceModelBank:
    return SourceModelBank(models={tag: EchoModel() for tag in tags})


def task_from_store(store, gap: int, split: str = "all", position: int = 0) -> ReconstructionTask:
    from mvrecon.data import sample_tasks

    return sample_tasks(store, gap, split)[position]
