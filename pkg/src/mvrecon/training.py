"""Conditional-GAN objective and per-source training loops.

One generator/discriminator pair is trained per conditioning source
(past, future, one per reference camera). The discriminator loss is
halved to slow D relative to G, and the generator uses the
non-saturating adversarial term plus an L1 reconstruction term weighted
by ``lambda_l1``. Optimization alternates one D step with one G step.

All randomness (weight init, pair sampling, dropout noise) is drawn from
streams derived from ``TrainConfig.seed`` and the source tag, so a fixed
seed reproduces loss histories exactly.
"""

from __future__ import annotations

import csv
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F

from .core import Frame, TAG_FUTURE, TAG_PAST, CameraRig, ref_tag
from .data import SPLIT_TRAIN, SequenceStore
from .errors import EmptySplit, MissingModel, MvreconError, NonFiniteLoss
from .model import (
    DiscriminatorSpec,
    GeneratorSpec,
    UnetGenerator,
    build_discriminator,
    build_generator,
    frame_to_tensor,
    load_generator_checkpoint,
    save_generator_checkpoint,
    tensor_to_frame,
)
from .seeding import derive_seed

logger = logging.getLogger(__name__)

DEFAULT_GAP_SCHEDULE = (1, 3, 5, 7, 15, 30)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters (architecture lives in the model specs)."""

    lambda_l1: float = 100.0
    learning_rate: float = 0.0002
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    batch_size: int = 1
    steps: int = 2000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.lambda_l1 < 0:
            raise MvreconError(f"training.TrainConfig: lambda_l1={self.lambda_l1} < 0")
        if self.learning_rate <= 0:
            raise MvreconError(
                f"training.TrainConfig: learning_rate={self.learning_rate} <= 0"
            )
        if self.batch_size < 1 or self.steps < 0:
            raise MvreconError("training.TrainConfig: bad batch_size/steps")


@dataclass(frozen=True)
class LossRecord:
    step: int
    d_loss: float
    g_loss: float
    l1: float


def gan_losses(
    d_real: torch.Tensor,
    d_fake: torch.Tensor,
    fake: torch.Tensor,
    target: torch.Tensor,
    lambda_l1: float,
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Loss terms from pre-sigmoid realism maps and frame tensors.

    d_loss = -1/2 mean[log sig(d_real) + log(1 - sig(d_fake))]  (halved),
    g_loss = -mean[log sig(d_fake)] + lambda_l1 * l1             (non-saturating),
    l1     = mean |fake - target|.

    Raises NonFiniteLoss when any term is NaN/Inf.
    """
    if fake.shape != target.shape:
        raise MvreconError(
            f"training.gan_losses: fake {tuple(fake.shape)} vs target "
            f"{tuple(target.shape)}"
        )
    l1 = (fake - target).abs().mean()
    real_term = F.logsigmoid(d_real).mean()
    fake_term = F.logsigmoid(-d_fake).mean()
    d_loss = -0.5 * (real_term + fake_term)
    g_adv = -F.logsigmoid(d_fake).mean()
    g_loss = g_adv + lambda_l1 * l1
    for name, value in (("d_loss", d_loss), ("g_loss", g_loss), ("l1", l1)):
        if not torch.isfinite(value):
            raise NonFiniteLoss(f"training.gan_losses: {name} is non-finite")
    return d_loss, g_loss, l1


def train_step(
    gen: UnetGenerator,
    disc: torch.nn.Module,
    opt_g: torch.optim.Optimizer,
    opt_d: torch.optim.Optimizer,
    x: torch.Tensor,
    y: torch.Tensor,
    lambda_l1: float,
    noise: Optional[torch.Generator] = None,
) -> Tuple[float, float, float]:
    """One alternation: a gradient step on D, then one on G.

    The fake frame is generated once; D sees it detached for its own
    step, and the (updated) D scores it again for the generator step.
    """
    fake = gen(x, noise)

    opt_d.zero_grad(set_to_none=True)
    d_real = disc(x, y)
    d_fake = disc(x, fake.detach())
    d_loss, _, _ = gan_losses(d_real, d_fake, fake.detach(), y, lambda_l1)
    d_loss.backward()
    opt_d.step()

    opt_g.zero_grad(set_to_none=True)
    d_fake_for_g = disc(x, fake)
    _, g_loss, l1 = gan_losses(d_real.detach(), d_fake_for_g, fake, y, lambda_l1)
    g_loss.backward()
    opt_g.step()

    return float(d_loss.detach()), float(g_loss.detach()), float(l1.detach())


# --- training pairs -----------------------------------------------------

def _pair_centers(
    store: SequenceStore, tag: str, gap: int, split: str = SPLIT_TRAIN
) -> Tuple[int, ...]:
    """Centers in the split whose conditioning frame exists for this tag."""
    length = store.length
    indices = store.indices_for_split(split)
    if tag == TAG_PAST:
        return tuple(i for i in indices if i - gap >= 0)
    if tag == TAG_FUTURE:
        return tuple(i for i in indices if i + gap < length)
    return tuple(indices)


def _conditioning_frame(store: SequenceStore, tag: str, center: int, gap: int) -> Frame:
    target = store.target_frames
    if tag == TAG_PAST:
        return target[center - gap]
    if tag == TAG_FUTURE:
        return target[center + gap]
    camera = _camera_of_ref_tag(tag)
    return store.frames[camera][center]


def _camera_of_ref_tag(tag: str) -> int:
    try:
        return int(tag.split("_", 1)[1])
    except (IndexError, ValueError):
        raise MissingModel(f"training: malformed source tag {tag!r}") from None


@dataclass(frozen=True)
class TrainedSource:
    """A frozen generator snapshot for one conditioning source."""

    tag: str
    spec: GeneratorSpec
    net: UnetGenerator
    history: Tuple[LossRecord, ...] = ()

    def generate(self, frame: Frame, noise: Optional[torch.Generator] = None) -> Frame:
        """Reconstruct the missing frame from one conditioning frame."""
        with torch.no_grad():
            out = self.net(frame_to_tensor(frame).unsqueeze(0), noise)[0]
        return tensor_to_frame(out, camera_id=frame.camera_id, index=frame.index)


def train_source(
    source_tag: str,
    store: SequenceStore,
    gap_schedule: Sequence[int],
    cfg: TrainConfig,
    gen_spec: Optional[GeneratorSpec] = None,
    disc_spec: Optional[DiscriminatorSpec] = None,
    log_every: int = 0,
) -> TrainedSource:
    """Train one conditional GAN for one conditioning source.

    Per step a (conditioning, target) pair is sampled from the train
    split: (C[i-k], C[i]) for ``past``, (C[i+k], C[i]) for ``future``,
    (Cref[i], C[i]) for ``ref_*`` tags, with k drawn uniformly from
    ``gap_schedule`` for the intra-camera tags. Deterministic for a
    fixed (cfg.seed, source_tag).

    Raises:
        EmptySplit: no usable training pair exists.
        NonFiniteLoss: a loss diverged; message carries the step number.
    """
    gen_spec = gen_spec or GeneratorSpec()
    disc_spec = disc_spec or DiscriminatorSpec()
    schedule = tuple(int(k) for k in gap_schedule) or DEFAULT_GAP_SCHEDULE
    if any(k < 1 for k in schedule):
        raise MvreconError(f"training.train_source: bad gap schedule {schedule}")

    base_seed = derive_seed(cfg.seed, source_tag)
    gen = build_generator(gen_spec, init_seed=base_seed)
    disc = build_discriminator(disc_spec, init_seed=base_seed + 1)
    sampler = random.Random(base_seed + 2)
    noise = torch.Generator()
    noise.manual_seed(base_seed + 3)

    if source_tag in (TAG_PAST, TAG_FUTURE):
        centers_by_gap = {
            k: _pair_centers(store, source_tag, k) for k in schedule
        }
        centers_by_gap = {k: c for k, c in centers_by_gap.items() if c}
        if not centers_by_gap:
            raise EmptySplit(
                f"training.train_source[{source_tag}]: no train pair for any "
                f"gap in {schedule}"
            )
        usable_gaps = sorted(centers_by_gap)
    else:
        centers = _pair_centers(store, source_tag, 0)
        if not centers:
            raise EmptySplit(
                f"training.train_source[{source_tag}]: train split is empty"
            )
        centers_by_gap = {0: centers}
        usable_gaps = [0]

    opt_g = torch.optim.Adam(
        gen.parameters(), lr=cfg.learning_rate, betas=(cfg.adam_beta1, cfg.adam_beta2)
    )
    opt_d = torch.optim.Adam(
        disc.parameters(), lr=cfg.learning_rate, betas=(cfg.adam_beta1, cfg.adam_beta2)
    )

    gen.train()
    disc.train()
    history: List[LossRecord] = []
    for step in range(cfg.steps):
        xs, ys = [], []
        for _ in range(cfg.batch_size):
            k = usable_gaps[0] if len(usable_gaps) == 1 else sampler.choice(usable_gaps)
            center = sampler.choice(centers_by_gap[k])
            xs.append(frame_to_tensor(_conditioning_frame(store, source_tag, center, k)))
            ys.append(frame_to_tensor(store.target_frames[center]))
        x = torch.stack(xs)
        y = torch.stack(ys)
        try:
            d_loss, g_loss, l1 = train_step(
                gen, disc, opt_g, opt_d, x, y, cfg.lambda_l1, noise
            )
        except NonFiniteLoss as exc:
            raise NonFiniteLoss(
                f"training.train_source[{source_tag}] at step {step}: {exc}"
            ) from exc
        history.append(LossRecord(step, d_loss, g_loss, l1))
        if log_every and (step + 1) % log_every == 0:
            logger.info(
                "[%s] step %d/%d d=%.4f g=%.4f l1=%.4f",
                source_tag, step + 1, cfg.steps, d_loss, g_loss, l1,
            )

    gen.eval()
    return TrainedSource(
        tag=source_tag, spec=gen_spec, net=gen, history=tuple(history)
    )


@dataclass(frozen=True)
class SourceModelBank:
    """Map from source tag to a trained generator snapshot.

    Entries are duck-typed: anything exposing
    ``generate(frame, noise) -> Frame`` works (see fusion.EchoModel).
    """

    models: Mapping[str, TrainedSource]

    def __post_init__(self) -> None:
        object.__setattr__(self, "models", dict(self.models))

    @property
    def tags(self) -> Tuple[str, ...]:
        return tuple(self.models)

    def model(self, tag: str):
        if tag not in self.models:
            raise MissingModel(
                f"training.SourceModelBank: no model for source {tag!r} "
                f"(have {sorted(self.models)})"
            )
        return self.models[tag]

    def validate_against(self, rig: CameraRig) -> None:
        expected = set(rig.source_tags)
        have = set(self.models)
        if not expected <= have:
            raise MissingModel(
                f"training.SourceModelBank: rig needs {sorted(expected)}, "
                f"bank has {sorted(have)}"
            )


def bank_tags(rig: CameraRig) -> Tuple[str, ...]:
    """Source tags a bank must hold for a rig: past, future, ref_<id>..."""
    return rig.source_tags


def train_bank(
    store: SequenceStore,
    rig: CameraRig,
    cfg: TrainConfig,
    gap_schedule: Sequence[int] = DEFAULT_GAP_SCHEDULE,
    gen_spec: Optional[GeneratorSpec] = None,
    disc_spec: Optional[DiscriminatorSpec] = None,
    log_every: int = 0,
) -> SourceModelBank:
    """Train one model per conditioning source: (n_cameras - 1) + 2 total."""
    models: Dict[str, TrainedSource] = {}
    for tag in bank_tags(rig):
        try:
            models[tag] = train_source(
                tag, store, gap_schedule, cfg,
                gen_spec=gen_spec, disc_spec=disc_spec, log_every=log_every,
            )
        except MvreconError as exc:
            raise type(exc)(f"training.train_bank[{tag}]: {exc}") from exc
    return SourceModelBank(models)


# --- persistence ---------------------------------------------------------

HISTORY_HEADER = ("step", "d_loss", "g_loss", "l1")


def save_history_csv(path: Path | str, history: Sequence[LossRecord]) -> None:
    """Write ``step,d_loss,g_loss,l1`` rows; float repr for exact round-trips."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_HEADER)
        for rec in history:
            writer.writerow([rec.step, repr(rec.d_loss), repr(rec.g_loss), repr(rec.l1)])


def load_history_csv(path: Path | str) -> Tuple[LossRecord, ...]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != HISTORY_HEADER:
            raise MvreconError(f"training: {path} is not a loss history file")
        return tuple(
            LossRecord(int(row[0]), float(row[1]), float(row[2]), float(row[3]))
            for row in reader
        )


def save_bank(bank: SourceModelBank, directory: Path | str) -> None:
    """One ``<tag>.ckpt`` per source, plus ``<tag>_history.csv`` when present."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for tag in sorted(bank.models):
        source = bank.models[tag]
        save_generator_checkpoint(directory / f"{tag}.ckpt", source.spec, source.net, tag)
        if source.history:
            save_history_csv(directory / f"{tag}_history.csv", source.history)


def load_bank(directory: Path | str) -> SourceModelBank:
    directory = Path(directory)
    paths = sorted(directory.glob("*.ckpt"))
    if not paths:
        raise MissingModel(f"training.load_bank: no checkpoints in {directory}")
    models: Dict[str, TrainedSource] = {}
    for path in paths:
        spec, net, tag = load_generator_checkpoint(path)
        if not tag:
            tag = path.stem
        models[tag] = TrainedSource(tag=tag, spec=spec, net=net)
    return SourceModelBank(models)
