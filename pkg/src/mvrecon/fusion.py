"""Candidate generation, weighted-average fusion, and weight calibration.

Fusion weights live on the probability simplex, one vector per gap.
Calibration exhaustively searches a discretized simplex and keeps the
vector maximizing mean PSNR of the fused output against ground truth on
the validation split; ties go to the vector with more intra-camera mass.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import torch

from .core import (
    INTRA_TAGS,
    TAG_FUTURE,
    TAG_PAST,
    CandidateSet,
    Frame,
    FusionWeights,
    ReconstructionTask,
    ref_tag,
    to_unit,
)
from .data import ActivityGater, SPLIT_VAL, SequenceStore, sample_tasks
from .errors import (
    EmptyValidation,
    GapTooLarge,
    InvalidWeights,
    MvreconError,
    NoCandidates,
)
from .metrics import PSNR_CAP_DB
from .seeding import derive_seed
from .training import SourceModelBank

DEFAULT_GRID_STEP = 0.05


class EchoModel:
    """Bank entry that returns its conditioning frame unchanged.

    Diagnostic stand-in for a trained source: with synchronized identical
    views it plants a candidate bit-equal to ground truth, which pins the
    calibration argmax; with static scenes it reproduces the degenerate
    "input equals ground truth" evaluation case.
    """

    def generate(self, frame: Frame, noise: Optional[torch.Generator] = None) -> Frame:
        return frame


def _task_sources(task: ReconstructionTask) -> List[Tuple[str, Frame]]:
    sources: List[Tuple[str, Frame]] = [
        (TAG_PAST, task.past),
        (TAG_FUTURE, task.future),
    ]
    for ref in sorted(task.references, key=lambda f: f.camera_id):
        sources.append((ref_tag(ref.camera_id), ref))
    return sources


def generate_candidates(
    task: ReconstructionTask,
    bank: SourceModelBank,
    noise_seed: Optional[int] = None,
) -> CandidateSet:
    """One candidate reconstruction per source available in the task.

    References removed by gating simply produce no candidate. With a
    ``noise_seed`` the per-candidate dropout noise is a pure function of
    (seed, tag, missing_index, gap), making reports reproducible.

    Raises MissingModel when the bank lacks a required source tag.
    """
    target_camera = task.past.camera_id
    candidates = []
    for tag, frame in _task_sources(task):
        model = bank.model(tag)
        noise = None
        if noise_seed is not None:
            gen = torch.Generator()
            gen.manual_seed(derive_seed(noise_seed, tag, task.missing_index, task.gap))
            noise = gen
        estimate = model.generate(frame, noise)
        candidates.append(
            (tag, Frame(
                pixels=estimate.pixels,
                camera_id=target_camera,
                index=task.missing_index,
            ))
        )
    return CandidateSet(candidates=tuple(candidates), gap=task.gap)


def _renormalize(
    vector: Mapping[str, float], tags: Sequence[str], op: str
) -> np.ndarray:
    missing = [t for t in tags if t not in vector]
    if missing:
        raise InvalidWeights(f"fusion.{op}: weight vector lacks tags {missing}")
    w = np.array([float(vector[t]) for t in tags], dtype=np.float64)
    if np.any(w < 0):
        raise InvalidWeights(f"fusion.{op}: negative weight in {dict(vector)}")
    total = w.sum()
    if total <= 0.0:
        # all mass sat on gated-away sources; fall back to a plain average
        return np.full(len(tags), 1.0 / len(tags))
    return w / total


def fuse(candidates: CandidateSet, weights: FusionWeights) -> Frame:
    """Pixelwise weighted average of the candidates.

    Weights for the candidate gap are renormalized over the tags actually
    present (gating may have removed some); the output stays inside the
    candidates' min/max envelope.

    Raises NoCandidates for an empty set, InvalidWeights when the gap or
    a present tag has no weight entry.
    """
    if len(candidates) == 0:
        raise NoCandidates("fusion.fuse: empty candidate set")
    vector = weights.for_gap(candidates.gap)
    tags = candidates.tags
    w = _renormalize(vector, tags, "fuse")
    acc = np.zeros(candidates.candidates[0][1].pixels.shape, dtype=np.float64)
    for weight, (_, frame) in zip(w, candidates.candidates):
        acc += weight * frame.pixels.astype(np.float64)
    first = candidates.candidates[0][1]
    pixels = np.clip(acc, -1.0, 1.0).astype(np.float32)
    return Frame(pixels=pixels, camera_id=first.camera_id, index=first.index)


def simplex_grid(n_sources: int, grid_step: float) -> List[Tuple[float, ...]]:
    """All weight vectors with entries k*grid_step summing to one.

    ``grid_step`` must evenly divide 1 (e.g. 0.05 -> 21 levels).
    """
    if n_sources < 1:
        raise InvalidWeights("fusion.simplex_grid: need at least one source")
    if not 0.0 < grid_step <= 1.0:
        raise InvalidWeights(f"fusion.simplex_grid: grid_step={grid_step}")
    levels = round(1.0 / grid_step)
    if abs(levels * grid_step - 1.0) > 1e-9:
        raise InvalidWeights(
            f"fusion.simplex_grid: grid_step={grid_step} does not divide 1"
        )
    grid: List[Tuple[float, ...]] = []

    def compose(prefix: List[float], remaining: int, slots: int) -> None:
        if slots == 1:
            grid.append(tuple(prefix + [remaining / levels]))
            return
        for k in range(remaining + 1):
            compose(prefix + [k / levels], remaining - k, slots - 1)

    compose([], levels, n_sources)
    return grid


def _intra_mass(tags: Sequence[str], vector: Sequence[float]) -> float:
    return sum(w for t, w in zip(tags, vector) if t in INTRA_TAGS)


def calibrate_weights(
    bank: SourceModelBank,
    store: SequenceStore,
    gaps: Sequence[int],
    grid_step: float = DEFAULT_GRID_STEP,
    activity_threshold: float = 0.0,
    noise_seed: Optional[int] = 0,
) -> FusionWeights:
    """Per-gap exhaustive simplex search maximizing validation PSNR.

    Candidates are generated once per validation task; each grid vector
    is then scored through per-task Gram matrices of the candidate
    errors, which reproduces the fused-MSE arithmetic exactly. Reference
    gating (when ``activity_threshold`` > 0) matches evaluation
    conditions, with weights renormalized per task over present tags.

    Raises EmptyValidation when a gap has no validation task.
    """
    rig = store.rig
    tags = rig.source_tags
    gater = ActivityGater(store, activity_threshold) if activity_threshold > 0 else None
    vectors = simplex_grid(len(tags), grid_step)
    table: Dict[int, Dict[str, float]] = {}
    for gap in gaps:
        try:
            tasks = sample_tasks(store, gap, SPLIT_VAL)
        except GapTooLarge as exc:
            raise EmptyValidation(
                f"fusion.calibrate_weights: no validation task at gap {gap}"
            ) from exc
        stats = []
        for task in tasks:
            if gater is not None:
                task = gater.gate(task)
            cands = generate_candidates(task, bank, noise_seed)
            present = [tags.index(t) for t in cands.tags]
            gt = to_unit(task.ground_truth.pixels).ravel()
            diffs = np.stack(
                [to_unit(f.pixels).ravel() - gt for _, f in cands.candidates]
            )
            gram = diffs @ diffs.T / diffs.shape[1]
            stats.append((np.array(present), gram))

        best_key = None
        best_vec = None
        for vec in vectors:
            w_full = np.asarray(vec, dtype=np.float64)
            total = 0.0
            for present, gram in stats:
                wp = w_full[present]
                s = wp.sum()
                wp = np.full(len(present), 1.0 / len(present)) if s <= 0 else wp / s
                mse = float(wp @ gram @ wp)
                total += PSNR_CAP_DB if mse <= 0 else min(
                    PSNR_CAP_DB, 10.0 * np.log10(1.0 / mse)
                )
            key = (total / len(stats), _intra_mass(tags, vec), vec)
            if best_key is None or key > best_key:
                best_key = key
                best_vec = vec
        assert best_vec is not None
        table[gap] = dict(zip(tags, best_vec))
    return FusionWeights(table=table)


# --- weights file ---------------------------------------------------------

WEIGHTS_HEADER = ("gap", "source_tag", "weight")


def save_weights_csv(weights: FusionWeights, path: Path | str) -> None:
    """``gap,source_tag,weight`` rows; float repr round-trips exactly."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(WEIGHTS_HEADER)
        for gap in weights.gaps:
            vector = weights.for_gap(gap)
            for tag in sorted(vector):
                writer.writerow([gap, tag, repr(vector[tag])])


def load_weights_csv(path: Path | str) -> FusionWeights:
    path = Path(path)
    if not path.is_file():
        raise InvalidWeights(f"fusion: weights file {path} does not exist")
    table: Dict[int, Dict[str, float]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != WEIGHTS_HEADER:
            raise InvalidWeights(f"fusion: {path} is not a weights table")
        for row in reader:
            if len(row) != 3:
                raise InvalidWeights(f"fusion: malformed weights row {row!r}")
            table.setdefault(int(row[0]), {})[row[1]] = float(row[2])
    return FusionWeights(table=table)
