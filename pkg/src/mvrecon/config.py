"""YAML experiment configuration: one file drives every CLI subcommand.

Sections: ``rig`` (offsets, fps, overlap zones), ``data`` (frame
directories, split fractions, gating), ``synth`` (synthetic world),
``model`` (generator/discriminator shape), ``train`` (optimizer), and
``eval`` (gaps, grid step, noise seed). Individual keys can be
overridden on the command line with ``--set section.key=value``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

import yaml

from .core import CameraRig
from .data import SequenceStore, ingest
from .errors import ConfigError
from .model import DiscriminatorSpec, GeneratorSpec
from .synth import SynthConfig, build_rig as synth_rig, synthesize
from .training import DEFAULT_GAP_SCHEDULE, TrainConfig


@dataclass(frozen=True)
class RigSection:
    n_cameras: int = 3
    target_camera: int = 1
    fps: float = 10.0
    offsets_seconds: Mapping[int, float] = field(default_factory=dict)
    overlap_zones: Mapping[int, Sequence[int]] = field(default_factory=dict)


@dataclass(frozen=True)
class DataSection:
    frame_dirs: Mapping[int, str] = field(default_factory=dict)
    train_frac: float = 0.8
    val_frac: float = 0.1
    activity_threshold: float = 0.02
    gating_decay: float = 0.95


@dataclass(frozen=True)
class SynthSection:
    n_cameras: int = 3
    canvas_size: int = 128
    n_objects: int = 3
    object_speed: float = 0.5
    sequence_length: int = 300
    seed: int = 7
    view_transforms: Optional[Mapping[int, Sequence[float]]] = None
    brightness: Optional[Mapping[int, float]] = None
    object_bounds: Optional[Sequence[float]] = None
    sync_jitter_amplitude: float = 0.0
    sync_jitter_period: float = 37.0


@dataclass(frozen=True)
class ModelSection:
    base_filters: int = 64
    depth: int = 8
    dropout_layers: Tuple[int, ...] = (0, 1, 2)
    dropout_p: float = 0.5
    disc_base_filters: int = 64
    disc_n_layers: int = 3


@dataclass(frozen=True)
class TrainSection:
    lambda_l1: float = 100.0
    learning_rate: float = 0.0002
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    batch_size: int = 1
    steps: int = 2000
    seed: int = 7
    gap_schedule: Tuple[int, ...] = DEFAULT_GAP_SCHEDULE


@dataclass(frozen=True)
class EvalSection:
    gaps: Tuple[int, ...] = DEFAULT_GAP_SCHEDULE
    grid_step: float = 0.05
    noise_seed: int = 77
    dataset_id: str = ""


@dataclass(frozen=True)
class Config:
    resolution: int = 256
    rig: RigSection = field(default_factory=RigSection)
    data: DataSection = field(default_factory=DataSection)
    synth: SynthSection = field(default_factory=SynthSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)


_SECTIONS = {
    "rig": RigSection,
    "data": DataSection,
    "synth": SynthSection,
    "model": ModelSection,
    "train": TrainSection,
    "eval": EvalSection,
}


def _build_section(cls, raw: Mapping[str, Any], name: str):
    known = {f.name: f for f in fields(cls)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ConfigError(f"config: unknown keys {sorted(unknown)} in section {name!r}")
    kwargs = {}
    for key, value in raw.items():
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config: bad value in section {name!r}: {exc}") from exc


def config_from_dict(raw: Mapping[str, Any]) -> Config:
    if not isinstance(raw, Mapping):
        raise ConfigError("config: top level must be a mapping")
    unknown = set(raw) - set(_SECTIONS) - {"resolution"}
    if unknown:
        raise ConfigError(f"config: unknown top-level keys {sorted(unknown)}")
    sections = {}
    for name, cls in _SECTIONS.items():
        part = raw.get(name, {})
        if part is None:
            part = {}
        if not isinstance(part, Mapping):
            raise ConfigError(f"config: section {name!r} must be a mapping")
        sections[name] = _build_section(cls, part, name)
    return Config(resolution=int(raw.get("resolution", 256)), **sections)


def config_to_dict(cfg: Config) -> Dict[str, Any]:
    out: Dict[str, Any] = {"resolution": cfg.resolution}
    for name in _SECTIONS:
        section = asdict(getattr(cfg, name))
        for key, value in list(section.items()):
            if isinstance(value, tuple):
                section[key] = list(value)
        out[name] = section
    return out


def load_config(path: Path | str) -> Config:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config: file {path} does not exist")
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: cannot parse {path}: {exc}") from exc
    return config_from_dict(raw)


def dump_config(cfg: Config) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=True)


def apply_overrides(cfg: Config, overrides: Sequence[str]) -> Config:
    """Apply ``section.key=value`` (or ``resolution=N``) overrides."""
    raw = config_to_dict(cfg)
    for item in overrides:
        key, sep, value_text = item.partition("=")
        if not sep:
            raise ConfigError(f"config: override {item!r} is not key=value")
        try:
            value = yaml.safe_load(value_text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config: cannot parse override value {item!r}") from exc
        parts = key.strip().split(".")
        if len(parts) == 1 and parts[0] == "resolution":
            raw["resolution"] = value
        elif len(parts) == 2 and parts[0] in _SECTIONS:
            raw[parts[0]][parts[1]] = value
        else:
            raise ConfigError(f"config: unknown override target {key!r}")
    return config_from_dict(raw)


# --- bridges to domain objects ------------------------------------------------

def rig_from_config(cfg: Config) -> CameraRig:
    """Rig for ingestion configs; synthetic runs derive theirs instead."""
    rig = cfg.rig
    cam_ids = sorted(
        set(int(c) for c in rig.offsets_seconds) | {int(rig.target_camera)}
    )
    if len(cam_ids) < rig.n_cameras:
        cam_ids = list(range(1, rig.n_cameras + 1))
    offsets = {c: float(rig.offsets_seconds.get(c, 0.0)) for c in cam_ids}
    offsets[rig.target_camera] = 0.0
    zones = {
        int(c): tuple(int(v) for v in zone)
        for c, zone in rig.overlap_zones.items()
    }
    return CameraRig(
        n_cameras=len(cam_ids),
        target_camera=rig.target_camera,
        offsets_seconds=offsets,
        fps=rig.fps,
        overlap_zones=zones,
        resolution=cfg.resolution,
    )


def synth_config(cfg: Config) -> SynthConfig:
    synth = cfg.synth
    view_transforms = None
    if synth.view_transforms:
        view_transforms = {
            int(c): tuple(float(v) for v in window)
            for c, window in synth.view_transforms.items()
        }
    return SynthConfig(
        n_cameras=synth.n_cameras,
        canvas_size=synth.canvas_size,
        resolution=cfg.resolution,
        n_objects=synth.n_objects,
        object_speed=synth.object_speed,
        sequence_length=synth.sequence_length,
        seed=synth.seed,
        fps=cfg.rig.fps,
        view_transforms=view_transforms,
        brightness=dict(synth.brightness) if synth.brightness else None,
        object_bounds=(
            tuple(float(v) for v in synth.object_bounds)
            if synth.object_bounds
            else None
        ),
        sync_jitter_amplitude=synth.sync_jitter_amplitude,
        sync_jitter_period=synth.sync_jitter_period,
        train_frac=cfg.data.train_frac,
        val_frac=cfg.data.val_frac,
    )


def generator_spec(cfg: Config) -> GeneratorSpec:
    return GeneratorSpec(
        base_filters=cfg.model.base_filters,
        depth=cfg.model.depth,
        dropout_layers=tuple(cfg.model.dropout_layers),
        dropout_p=cfg.model.dropout_p,
    )


def discriminator_spec(cfg: Config) -> DiscriminatorSpec:
    return DiscriminatorSpec(
        base_filters=cfg.model.disc_base_filters,
        n_layers=cfg.model.disc_n_layers,
    )


def train_config(cfg: Config) -> TrainConfig:
    return TrainConfig(
        lambda_l1=cfg.train.lambda_l1,
        learning_rate=cfg.train.learning_rate,
        adam_beta1=cfg.train.adam_beta1,
        adam_beta2=cfg.train.adam_beta2,
        batch_size=cfg.train.batch_size,
        steps=cfg.train.steps,
        seed=cfg.train.seed,
    )


def dataset_id(cfg: Config) -> str:
    if cfg.eval.dataset_id:
        return cfg.eval.dataset_id
    if cfg.data.frame_dirs:
        return "ingest"
    return f"synth-seed{cfg.synth.seed}"


def load_store(cfg: Config) -> SequenceStore:
    """Ingest from frame directories when configured, else synthesize."""
    if cfg.data.frame_dirs:
        rig = rig_from_config(cfg)
        dirs = {int(c): Path(p) for c, p in cfg.data.frame_dirs.items()}
        return ingest(dirs, rig, cfg.data.train_frac, cfg.data.val_frac)
    return synthesize(synth_config(cfg))
