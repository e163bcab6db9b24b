from __future__ import annotations

import numpy as np
import pytest
from PIL import Image

from mvrecon.core import to_uint8
from mvrecon.data import sample_tasks
from mvrecon.errors import MissingModel, MvreconError
from mvrecon.evaluation import (
    LABEL_HEIGHT,
    MODE_MULTI,
    MODE_SINGLE,
    TILE_PAD,
    GapRow,
    GapSweepReport,
    ablation_delta_markdown,
    emit_comparison_grid,
    emit_report,
    fingerprint_run,
    parse_report_csv,
    run_sweep,
    tile_origin,
)
from mvrecon.fusion import FusionWeights, fuse, generate_candidates
from mvrecon.metrics import PSNR_CAP_DB
from mvrecon.synth import SynthConfig, synthesize

from helpers import echo_bank, task_from_store


@pytest.fixture(scope="module")
def static_identity_store():
    # static scene + identical views: every echo candidate equals ground truth
    window = (8.0, 8.0, 48.0)
    return synthesize(
        SynthConfig(
            n_cameras=3,
            canvas_size=64,
            resolution=32,
            n_objects=0,
            sequence_length=50,
            seed=9,
            view_transforms={1: window, 2: window, 3: window},
            brightness={1: 1.0, 2: 1.0, 3: 1.0},
        )
    )


def _uniform_weights(gaps, tags=("past", "future", "ref_2", "ref_3")):
    return FusionWeights(
        table={g: {t: 1.0 / len(tags) for t in tags} for g in gaps}
    )


# --- run_sweep ------------------------------------------------------------------

def test_sweep_echo_static_hits_cap(static_identity_store):
    store = static_identity_store
    gaps = (1, 2)
    report = run_sweep(echo_bank(), _uniform_weights(gaps), store, gaps, MODE_MULTI)
    assert len(report.rows) == 2
    for row in report.rows:
        assert row.mean_psnr == PSNR_CAP_DB
        assert row.mean_ssim == 1.0


def test_sweep_report_shape_six_gaps(static_identity_store):
    gaps = (1, 2, 3, 4, 5, 6)
    report = run_sweep(
        echo_bank(), _uniform_weights(gaps), static_identity_store, gaps, MODE_MULTI
    )
    assert [row.gap for row in report.rows] == list(gaps)
    assert all(row.n_tasks > 0 for row in report.rows)


def test_sweep_task_counts_match_sampling(session_synth_store):
    store = session_synth_store
    gaps = (1, 3)
    report = run_sweep(
        echo_bank(), _uniform_weights(gaps), store, gaps, MODE_SINGLE
    )
    for row in report.rows:
        assert row.n_tasks == len(sample_tasks(store, row.gap, "test"))


def test_sweep_single_view_strips_references(session_synth_store):
    store = session_synth_store
    gaps = (2,)
    report = run_sweep(
        echo_bank(), _uniform_weights(gaps), store, gaps, MODE_SINGLE
    )
    # expected: fuse only past/future echoes with renormalized weights
    tasks = sample_tasks(store, 2, "test")
    from mvrecon.metrics import psnr

    total = 0.0
    for task in tasks:
        cands = generate_candidates(task.without_references(), echo_bank(), 0)
        total += psnr(fuse(cands, _uniform_weights(gaps)), task.ground_truth)
    assert report.rows[0].mean_psnr == pytest.approx(total / len(tasks), abs=1e-12)


def test_sweep_multi_differs_from_single(session_synth_store):
    store = session_synth_store
    gaps = (2,)
    weights = _uniform_weights(gaps)
    single = run_sweep(echo_bank(), weights, store, gaps, MODE_SINGLE)
    multi = run_sweep(echo_bank(), weights, store, gaps, MODE_MULTI)
    assert single.rows[0].mean_psnr != multi.rows[0].mean_psnr


def test_sweep_is_deterministic(session_synth_store):
    store = session_synth_store
    gaps = (1, 2)
    weights = _uniform_weights(gaps)
    a = run_sweep(echo_bank(), weights, store, gaps, MODE_MULTI,
                  activity_threshold=0.01, noise_seed=3)
    b = run_sweep(echo_bank(), weights, store, gaps, MODE_MULTI,
                  activity_threshold=0.01, noise_seed=3)
    assert a == b
    assert emit_report(a, "csv") == emit_report(b, "csv")


def test_sweep_unknown_mode(session_synth_store):
    with pytest.raises(MvreconError):
        run_sweep(echo_bank(), _uniform_weights((1,)), session_synth_store, (1,), "both")


def test_sweep_errors_carry_coordinates(session_synth_store):
    bank = echo_bank(tags=("past", "future"))  # refs missing
    with pytest.raises(MissingModel) as excinfo:
        run_sweep(bank, _uniform_weights((2,)), session_synth_store, (2,), MODE_MULTI)
    message = str(excinfo.value)
    assert "gap=2" in message and "index=" in message


# --- reports ----------------------------------------------------------------------

def _report():
    return GapSweepReport(
        rows=(
            GapRow(1, 32.0625, 0.951234, 98),
            GapRow(30, 25.171875, 0.87, 40),
        ),
        mode=MODE_MULTI,
        dataset_id="synth-seed7",
        fingerprint="abc123",
    )


def test_report_csv_round_trip():
    report = _report()
    text = emit_report(report, "csv")
    parsed = parse_report_csv(text)
    assert parsed == report


def test_report_markdown_layout():
    lines = emit_report(_report(), "markdown").splitlines()
    assert lines[0] == "| Gap (frames) | 1 | 30 |"
    assert lines[2].startswith("| PSNR (dB) | 32.06 | 25.17 |")
    assert lines[3].startswith("| SSIM | 0.95 | 0.87 |")


def test_report_empty_gaps_header_only():
    report = GapSweepReport(rows=(), mode=MODE_SINGLE)
    csv_text = emit_report(report, "csv")
    assert csv_text.strip().splitlines()[-1] == "gap,mean_psnr,mean_ssim,n_tasks"
    md = emit_report(report, "markdown").splitlines()
    assert md[0] == "| Gap (frames) |"
    assert md[2] == "| PSNR (dB) |"


def test_ablation_delta_table():
    single = GapSweepReport(rows=(GapRow(1, 30.0, 0.9, 10),), mode=MODE_SINGLE)
    multi = GapSweepReport(rows=(GapRow(1, 31.5, 0.92, 10),), mode=MODE_MULTI)
    text = ablation_delta_markdown(single, multi)
    assert "| Delta | +1.50 |" in text


def test_fingerprint_stable_and_sensitive():
    a = fingerprint_run(["config", b"\x00\x01"])
    assert a == fingerprint_run(["config", b"\x00\x01"])
    assert a != fingerprint_run(["config", b"\x00\x02"])
    assert len(a) == 16


def test_emit_report_unknown_format():
    with pytest.raises(MvreconError):
        emit_report(_report(), "xml")


# --- comparison grid -----------------------------------------------------------------

def test_comparison_grid_three_camera_layout(tmp_path, session_synth_store):
    store = session_synth_store
    task = task_from_store(store, gap=2)
    cands = generate_candidates(task, echo_bank(), 0)
    weights = _uniform_weights((2,))
    fused = fuse(cands, weights)
    out = tmp_path / "grid.png"
    n_tiles = emit_comparison_grid(task, cands, fused, task.ground_truth, out)
    assert n_tiles == 10  # 4 inputs, 4 candidates, fused, ground truth
    with Image.open(out) as img:
        h, w, _ = task.past.shape
        assert img.size == (
            TILE_PAD + 4 * (w + TILE_PAD),
            TILE_PAD + 3 * (LABEL_HEIGHT + h + TILE_PAD),
        )


def test_comparison_grid_single_view(tmp_path, session_synth_store):
    task = task_from_store(session_synth_store, gap=2).without_references()
    cands = generate_candidates(task, echo_bank(), 0)
    fused = fuse(cands, _uniform_weights((2,)))
    n_tiles = emit_comparison_grid(task, cands, fused, task.ground_truth, tmp_path / "g.png")
    assert n_tiles == 6


def test_comparison_grid_fused_equals_gt_tiles(tmp_path, static_identity_store):
    store = static_identity_store
    task = task_from_store(store, gap=1)
    cands = generate_candidates(task, echo_bank(), 0)
    fused = fuse(cands, _uniform_weights((1,)))
    out = tmp_path / "grid.png"
    emit_comparison_grid(task, cands, fused, task.ground_truth, out)
    h, w, _ = task.past.shape
    with Image.open(out) as img:
        arr = np.asarray(img)
    fx, fy = tile_origin(2, 0, h, w)
    gx, gy = tile_origin(2, 1, h, w)
    fused_tile = arr[fy : fy + h, fx : fx + w]
    gt_tile = arr[gy : gy + h, gx : gx + w]
    assert np.array_equal(fused_tile, gt_tile)
    assert np.array_equal(fused_tile, to_uint8(fused.pixels))
