"""Gap sweeps, single- vs multi-view ablation, reports, comparison grids.

A sweep reconstructs every test-split task at each gap, fuses the
candidates with the calibrated weights, and aggregates PSNR/SSIM means.
``single_view`` strips reference frames before candidate generation;
``multi_view`` applies overlap-zone activity gating instead.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw

from .core import CandidateSet, Frame, FusionWeights, ReconstructionTask, to_uint8
from .data import ActivityGater, SPLIT_TEST, SequenceStore, sample_tasks
from .errors import DimensionMismatch, MvreconError, UnwritablePath
from .fusion import fuse, generate_candidates
from .metrics import psnr, ssim
from .training import SourceModelBank

logger = logging.getLogger(__name__)

MODE_SINGLE = "single_view"
MODE_MULTI = "multi_view"
MODES = (MODE_SINGLE, MODE_MULTI)

TILE_PAD = 2
LABEL_HEIGHT = 14


@dataclass(frozen=True)
class GapRow:
    gap: int
    mean_psnr: float
    mean_ssim: float
    n_tasks: int


@dataclass(frozen=True)
class GapSweepReport:
    rows: Tuple[GapRow, ...]
    mode: str
    dataset_id: str = ""
    fingerprint: str = ""

    def row(self, gap: int) -> GapRow:
        for row in self.rows:
            if row.gap == gap:
                return row
        raise KeyError(f"no row for gap {gap}")


def run_sweep(
    bank: SourceModelBank,
    weights: FusionWeights,
    store: SequenceStore,
    gaps: Sequence[int],
    mode: str,
    activity_threshold: float = 0.0,
    noise_seed: Optional[int] = 0,
    dataset_id: str = "",
    fingerprint: str = "",
) -> GapSweepReport:
    """Reconstruct and score every test task at each gap.

    Deterministic: a fixed (bank, weights, store, noise_seed) yields a
    bit-identical report. Fusion/metric errors are re-raised with the
    failing (gap, index) coordinates prefixed.
    """
    if mode not in MODES:
        raise MvreconError(f"eval.run_sweep: unknown mode {mode!r} (use {MODES})")
    gater = (
        ActivityGater(store, activity_threshold)
        if mode == MODE_MULTI and activity_threshold > 0
        else None
    )
    rows: List[GapRow] = []
    for gap in gaps:
        tasks = sample_tasks(store, gap, SPLIT_TEST)
        psnr_sum = 0.0
        ssim_sum = 0.0
        for task in tasks:
            try:
                if mode == MODE_SINGLE:
                    task_eff = task.without_references()
                else:
                    task_eff = gater.gate(task) if gater is not None else task
                candidates = generate_candidates(task_eff, bank, noise_seed)
                fused = fuse(candidates, weights)
                psnr_sum += psnr(fused, task.ground_truth)
                ssim_sum += ssim(fused, task.ground_truth)
            except MvreconError as exc:
                raise type(exc)(
                    f"eval.run_sweep[gap={gap}, index={task.missing_index}]: {exc}"
                ) from exc
        rows.append(
            GapRow(
                gap=gap,
                mean_psnr=psnr_sum / len(tasks),
                mean_ssim=ssim_sum / len(tasks),
                n_tasks=len(tasks),
            )
        )
        logger.info(
            "sweep %s gap=%d: psnr=%.2f ssim=%.3f over %d tasks",
            mode, gap, rows[-1].mean_psnr, rows[-1].mean_ssim, rows[-1].n_tasks,
        )
    return GapSweepReport(
        rows=tuple(rows), mode=mode, dataset_id=dataset_id, fingerprint=fingerprint
    )


# --- serialization ----------------------------------------------------------

def emit_report(report: GapSweepReport, format: str = "csv") -> str:
    """Serialize a report; ``csv`` round-trips exactly, ``markdown``
    mirrors the gap-columns / metric-rows table layout."""
    if format == "csv":
        return _emit_csv(report)
    if format == "markdown":
        return _emit_markdown(report)
    raise MvreconError(f"eval.emit_report: unknown format {format!r}")


def _emit_csv(report: GapSweepReport) -> str:
    buf = io.StringIO()
    buf.write(f"# mode={report.mode}\n")
    buf.write(f"# dataset={report.dataset_id}\n")
    buf.write(f"# fingerprint={report.fingerprint}\n")
    writer = csv.writer(buf)
    writer.writerow(["gap", "mean_psnr", "mean_ssim", "n_tasks"])
    for row in report.rows:
        writer.writerow(
            [row.gap, repr(float(row.mean_psnr)), repr(float(row.mean_ssim)), row.n_tasks]
        )
    return buf.getvalue()


def parse_report_csv(text: str) -> GapSweepReport:
    """Inverse of the csv emitter (used for round-trips and the CLI)."""
    meta = {}
    rows = []
    lines = [ln for ln in text.splitlines() if ln.strip()]
    data_lines = []
    for ln in lines:
        if ln.startswith("#"):
            key, _, value = ln[1:].strip().partition("=")
            meta[key] = value
        else:
            data_lines.append(ln)
    reader = csv.reader(data_lines)
    header = next(reader)
    if header != ["gap", "mean_psnr", "mean_ssim", "n_tasks"]:
        raise MvreconError("eval.parse_report_csv: unexpected header")
    for row in reader:
        rows.append(GapRow(int(row[0]), float(row[1]), float(row[2]), int(row[3])))
    return GapSweepReport(
        rows=tuple(rows),
        mode=meta.get("mode", ""),
        dataset_id=meta.get("dataset", ""),
        fingerprint=meta.get("fingerprint", ""),
    )


def _emit_markdown(report: GapSweepReport) -> str:
    gaps = [str(row.gap) for row in report.rows]
    lines = [
        "| Gap (frames) | " + " | ".join(gaps) + " |" if gaps else "| Gap (frames) |",
        "| --- | " + " | ".join("---" for _ in gaps) + " |" if gaps else "| --- |",
    ]
    psnr_cells = [f"{row.mean_psnr:.2f}" for row in report.rows]
    ssim_cells = [f"{row.mean_ssim:.2f}" for row in report.rows]
    if gaps:
        lines.append("| PSNR (dB) | " + " | ".join(psnr_cells) + " |")
        lines.append("| SSIM | " + " | ".join(ssim_cells) + " |")
    else:
        lines.append("| PSNR (dB) |")
        lines.append("| SSIM |")
    return "\n".join(lines) + "\n"


def ablation_delta_markdown(
    single: GapSweepReport, multi: GapSweepReport
) -> str:
    """Single vs multi PSNR per gap with the multi-single delta row."""
    gaps = [row.gap for row in multi.rows]
    lines = [
        "| Gap (frames) | " + " | ".join(str(g) for g in gaps) + " |",
        "| --- | " + " | ".join("---" for _ in gaps) + " |",
        "| Single | " + " | ".join(f"{single.row(g).mean_psnr:.2f}" for g in gaps) + " |",
        "| Multi | " + " | ".join(f"{multi.row(g).mean_psnr:.2f}" for g in gaps) + " |",
        "| Delta | " + " | ".join(
            f"{multi.row(g).mean_psnr - single.row(g).mean_psnr:+.2f}" for g in gaps
        ) + " |",
    ]
    return "\n".join(lines) + "\n"


def fingerprint_run(parts: Iterable[bytes | str]) -> str:
    """Stable 16-hex digest of config text, checkpoint bytes, weights."""
    h = hashlib.sha256()
    for part in parts:
        h.update(part.encode("utf-8") if isinstance(part, str) else part)
        h.update(b"\x00")
    return h.hexdigest()[:16]


# --- qualitative comparison grid ---------------------------------------------

def tile_origin(row: int, col: int, frame_h: int, frame_w: int) -> Tuple[int, int]:
    """Pixel origin of tile (row, col) in the comparison grid image."""
    x = TILE_PAD + col * (frame_w + TILE_PAD)
    y = TILE_PAD + row * (LABEL_HEIGHT + frame_h + TILE_PAD) + LABEL_HEIGHT
    return x, y


def emit_comparison_grid(
    task: ReconstructionTask,
    candidates: CandidateSet,
    fused: Frame,
    ground_truth: Optional[Frame],
    out_path: Path | str,
) -> int:
    """Write a labeled tile grid PNG: inputs row, candidates row, then
    fused (+ ground truth). Returns the number of tiles written."""
    inputs: List[Tuple[str, Frame]] = [("past", task.past), ("future", task.future)]
    for ref in sorted(task.references, key=lambda f: f.camera_id):
        inputs.append((f"ref cam {ref.camera_id}", ref))
    cand_tiles = [(f"cand {tag}", frame) for tag, frame in candidates.candidates]
    final_tiles: List[Tuple[str, Frame]] = [("fused", fused)]
    if ground_truth is not None:
        final_tiles.append(("ground truth", ground_truth))

    tile_rows = [inputs, cand_tiles, final_tiles]
    shapes = {frame.shape for row in tile_rows for _, frame in row}
    if len(shapes) > 1:
        raise DimensionMismatch(
            f"eval.emit_comparison_grid: mixed frame shapes {sorted(shapes)}"
        )
    h, w, _ = next(iter(shapes))
    n_cols = max(len(row) for row in tile_rows)
    width = TILE_PAD + n_cols * (w + TILE_PAD)
    height = TILE_PAD + len(tile_rows) * (LABEL_HEIGHT + h + TILE_PAD)
    canvas = Image.new("RGB", (width, height), (24, 24, 24))
    draw = ImageDraw.Draw(canvas)
    for r, row_tiles in enumerate(tile_rows):
        for c, (label, frame) in enumerate(row_tiles):
            x, y = tile_origin(r, c, h, w)
            canvas.paste(Image.fromarray(to_uint8(frame.pixels)), (x, y))
            draw.text((x, y - LABEL_HEIGHT + 2), label, fill=(220, 220, 220))
    try:
        canvas.save(str(out_path), format="PNG")
    except OSError as exc:
        raise UnwritablePath(
            f"eval.emit_comparison_grid: cannot write {out_path}: {exc}"
        ) from exc
    return sum(len(row) for row in tile_rows)
