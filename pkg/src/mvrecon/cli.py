"""``mvrecon`` command line: synth-data, ingest, train, calibrate,
reconstruct, evaluate, ablate, grid.

Exit codes: 0 success, 1 domain error (message names the failing
module/operation), 2 usage error. The YAML config file is the single
source of rig/hyperparameter truth; ``--set section.key=value`` flags
override individual keys.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import torch
from PIL import Image

from .config import (
    Config,
    apply_overrides,
    dataset_id,
    discriminator_spec,
    dump_config,
    generator_spec,
    load_config,
    load_store,
    train_config,
)
from .core import to_uint8
from .data import ActivityGater, SPLIT_ALL, sample_tasks
from .errors import GapTooLarge, MvreconError, UnwritablePath
from .evaluation import (
    MODE_MULTI,
    MODE_SINGLE,
    ablation_delta_markdown,
    emit_comparison_grid,
    emit_report,
    fingerprint_run,
    run_sweep,
)
from .fusion import calibrate_weights, fuse, generate_candidates, load_weights_csv, save_weights_csv
from .metrics import psnr, ssim
from .training import bank_tags, load_bank, save_bank, train_source, SourceModelBank
from .synth import synthesize

logger = logging.getLogger("mvrecon")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="YAML config file")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[],
        metavar="SECTION.KEY=VALUE", help="override one config key",
    )
    parser.add_argument("--threads", type=int, default=None, help="cap torch threads")
    parser.add_argument("-q", "--quiet", action="store_true", help="suppress progress logs")


def _load(args: argparse.Namespace) -> Config:
    cfg = load_config(args.config) if args.config else Config()
    if args.overrides:
        cfg = apply_overrides(cfg, args.overrides)
    if args.threads:
        torch.set_num_threads(args.threads)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(message)s",
        stream=sys.stderr,
    )
    return cfg


def _parse_task_spec(text: str) -> tuple[int, int]:
    parts = dict(
        item.split("=", 1) for item in text.split(",") if "=" in item
    )
    try:
        return int(parts["i"]), int(parts["k"])
    except (KeyError, ValueError):
        raise MvreconError(
            f"cli: task spec {text!r} must look like i=10,k=3"
        ) from None


def _config_fingerprint(cfg: Config, bank_dir: Optional[Path], weights: Optional[Path]) -> str:
    parts: List[bytes | str] = [dump_config(cfg)]
    if bank_dir is not None:
        for ckpt in sorted(Path(bank_dir).glob("*.ckpt")):
            parts.append(ckpt.read_bytes())
    if weights is not None and Path(weights).is_file():
        parts.append(Path(weights).read_bytes())
    return fingerprint_run(parts)


# --- subcommands ---------------------------------------------------------

def _cmd_synth_data(args: argparse.Namespace) -> int:
    cfg = _load(args)
    if args.seed is not None:
        cfg = apply_overrides(cfg, [f"synth.seed={args.seed}"])
    from .config import synth_config

    store = synthesize(synth_config(cfg))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for cam in store.rig.camera_ids:
        cam_dir = out / f"cam{cam}"
        cam_dir.mkdir(parents=True, exist_ok=True)
        for frame in store.frames[cam]:
            Image.fromarray(to_uint8(frame.pixels)).save(
                cam_dir / f"{frame.index:06d}.png"
            )
    (out / "synth-config.yaml").write_text(dump_config(cfg))
    logger.info(
        "wrote %d cameras x %d frames to %s",
        len(store.rig.camera_ids), store.length, out,
    )
    return 0


def _cmd_ingest(args: argparse.Namespace) -> int:
    cfg = _load(args)
    store = load_store(cfg)
    rig = store.rig
    print(f"cameras: {list(rig.camera_ids)} (target {rig.target_camera})")
    print(f"applied shifts: {dict(sorted(store.applied_shifts.items()))}")
    print(f"synchronized length: {store.length}")
    for split in ("train", "val", "test"):
        print(f"{split}: {len(store.indices_for_split(split))} frames")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = _load(args)
    store = load_store(cfg)
    rig = store.rig
    tags = bank_tags(rig) if args.source == "all" else (args.source,)
    unknown = [t for t in tags if t not in bank_tags(rig)]
    if unknown:
        raise MvreconError(
            f"cli.train: source {unknown} not in rig sources {bank_tags(rig)}"
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    models = {}
    for tag in tags:
        logger.info("training source %s for %d steps", tag, cfg.train.steps)
        models[tag] = train_source(
            tag,
            store,
            cfg.train.gap_schedule,
            train_config(cfg),
            gen_spec=generator_spec(cfg),
            disc_spec=discriminator_spec(cfg),
            log_every=0 if args.quiet else max(1, cfg.train.steps // 20),
        )
    save_bank(SourceModelBank(models), out)
    logger.info("saved %d checkpoints to %s", len(models), out)
    return 0


def _cmd_calibrate(args: argparse.Namespace) -> int:
    cfg = _load(args)
    store = load_store(cfg)
    bank = load_bank(args.bank)
    bank.validate_against(store.rig)
    weights = calibrate_weights(
        bank,
        store,
        gaps=cfg.eval.gaps,
        grid_step=cfg.eval.grid_step,
        activity_threshold=cfg.data.activity_threshold,
        noise_seed=cfg.eval.noise_seed,
    )
    save_weights_csv(weights, args.out)
    logger.info("calibrated %d gaps -> %s", len(weights.gaps), args.out)
    return 0


def _sweep(args: argparse.Namespace, mode: str):
    cfg = _load(args)
    store = load_store(cfg)
    bank = load_bank(args.bank)
    bank.validate_against(store.rig)
    weights = load_weights_csv(args.weights)
    return cfg, run_sweep(
        bank,
        weights,
        store,
        gaps=cfg.eval.gaps,
        mode=mode,
        activity_threshold=cfg.data.activity_threshold,
        noise_seed=cfg.eval.noise_seed,
        dataset_id=dataset_id(cfg),
        fingerprint=_config_fingerprint(cfg, args.bank, args.weights),
    )


def _cmd_evaluate(args: argparse.Namespace) -> int:
    mode = MODE_SINGLE if args.mode == "single" else MODE_MULTI
    _, report = _sweep(args, mode)
    Path(args.out).write_text(emit_report(report, "csv"))
    if args.markdown:
        Path(args.markdown).write_text(emit_report(report, "markdown"))
    print(emit_report(report, "markdown"), end="")
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    cfg, single = _sweep(args, MODE_SINGLE)
    _, multi = _sweep(args, MODE_MULTI)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "single.csv").write_text(emit_report(single, "csv"))
    (out / "multi.csv").write_text(emit_report(multi, "csv"))
    delta = ablation_delta_markdown(single, multi)
    (out / "ablation.md").write_text(delta)
    print(delta, end="")
    return 0


def _reconstruct_task(cfg: Config, args: argparse.Namespace):
    store = load_store(cfg)
    bank = load_bank(args.bank)
    weights = load_weights_csv(args.weights)
    index, gap = _parse_task_spec(args.task)
    tasks = [
        t for t in sample_tasks(store, gap, SPLIT_ALL) if t.missing_index == index
    ]
    if not tasks:
        raise GapTooLarge(
            f"cli: no task with i={index}, k={gap} in a {store.length}-frame store"
        )
    task = tasks[0]
    if getattr(args, "mode", "multi") == "single":
        task = task.without_references()
    elif cfg.data.activity_threshold > 0:
        task = ActivityGater(store, cfg.data.activity_threshold).gate(task)
    candidates = generate_candidates(task, bank, cfg.eval.noise_seed)
    fused = fuse(candidates, weights)
    return task, candidates, fused


def _cmd_reconstruct(args: argparse.Namespace) -> int:
    cfg = _load(args)
    task, _, fused = _reconstruct_task(cfg, args)
    try:
        Image.fromarray(to_uint8(fused.pixels)).save(args.out)
    except OSError as exc:
        raise UnwritablePath(f"cli.reconstruct: cannot write {args.out}: {exc}") from exc
    if task.ground_truth is not None:
        print(f"psnr={psnr(fused, task.ground_truth):.4f}")
        print(f"ssim={ssim(fused, task.ground_truth):.4f}")
    logger.info("wrote fused frame to %s", args.out)
    return 0


def _cmd_grid(args: argparse.Namespace) -> int:
    cfg = _load(args)
    task, candidates, fused = _reconstruct_task(cfg, args)
    n = emit_comparison_grid(task, candidates, fused, task.ground_truth, args.out)
    logger.info("wrote %d-tile comparison grid to %s", n, args.out)
    return 0


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvrecon",
        description="Multi-view missing-frame reconstruction with fused conditional GANs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="render a synthetic multi-camera dataset")
    _add_common(p)
    p.add_argument("--seed", type=int, default=None, help="override synth.seed")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(handler=_cmd_synth_data)

    p = sub.add_parser("ingest", help="load + synchronize frames, print a summary")
    _add_common(p)
    p.set_defaults(handler=_cmd_ingest)

    p = sub.add_parser("train", help="train per-source conditional GANs")
    _add_common(p)
    p.add_argument("--source", default="all", help="source tag or 'all'")
    p.add_argument("--out", type=Path, required=True, help="bank output directory")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("calibrate", help="grid-search fusion weights on validation PSNR")
    _add_common(p)
    p.add_argument("--bank", type=Path, required=True, help="checkpoint directory")
    p.add_argument("--out", type=Path, required=True, help="weights csv path")
    p.set_defaults(handler=_cmd_calibrate)

    p = sub.add_parser("reconstruct", help="reconstruct one missing frame")
    _add_common(p)
    p.add_argument("--bank", type=Path, required=True)
    p.add_argument("--weights", type=Path, required=True)
    p.add_argument("--task", required=True, metavar="i=IDX,k=GAP")
    p.add_argument("--mode", choices=("single", "multi"), default="multi")
    p.add_argument("--out", type=Path, required=True, help="fused PNG path")
    p.set_defaults(handler=_cmd_reconstruct)

    p = sub.add_parser("evaluate", help="gap sweep over the test split")
    _add_common(p)
    p.add_argument("--bank", type=Path, required=True)
    p.add_argument("--weights", type=Path, required=True)
    p.add_argument("--mode", choices=("single", "multi"), required=True)
    p.add_argument("--out", type=Path, required=True, help="report csv path")
    p.add_argument("--markdown", type=Path, default=None, help="also write markdown")
    p.set_defaults(handler=_cmd_evaluate)

    p = sub.add_parser("ablate", help="single- vs multi-view sweep plus delta table")
    _add_common(p)
    p.add_argument("--bank", type=Path, required=True)
    p.add_argument("--weights", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(handler=_cmd_ablate)

    p = sub.add_parser("grid", help="write a labeled qualitative comparison grid")
    _add_common(p)
    p.add_argument("--bank", type=Path, required=True)
    p.add_argument("--weights", type=Path, required=True)
    p.add_argument("--task", required=True, metavar="i=IDX,k=GAP")
    p.add_argument("--mode", choices=("single", "multi"), default="multi")
    p.add_argument("--out", type=Path, required=True, help="grid PNG path")
    p.set_defaults(handler=_cmd_grid)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except MvreconError as exc:
        print(f"mvrecon: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
