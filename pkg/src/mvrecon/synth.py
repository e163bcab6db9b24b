"""Deterministic synthetic multi-camera sequences.

A global canvas holds a static textured background and a few colored
shapes moving at constant speed, bouncing off the canvas edges. Each
camera renders a square crop window of the canvas at the configured
resolution with its own brightness scale, emulating partially
overlapping views with different exposure. Rendering is a pure function
of (config, time), so a fixed seed reproduces sequences bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Tuple

import numpy as np

from .core import CameraRig, Frame, Zone, from_unit
from .errors import ConfigError, NonOverlappingViews
from . import data as _data

# (x0, y0, size): square crop window in canvas coordinates
ViewWindow = Tuple[float, float, float]

_PALETTE = np.array(
    [
        [0.88, 0.16, 0.16],
        [0.12, 0.42, 0.86],
        [0.92, 0.78, 0.10],
        [0.18, 0.72, 0.30],
        [0.80, 0.22, 0.78],
        [0.10, 0.74, 0.74],
    ]
)

_BRIGHTNESS_CYCLE = (0.86, 1.12, 0.93, 1.06)


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic world.

    ``view_transforms`` maps camera id to a crop window; ``None`` picks a
    default layout where all windows pairwise overlap. ``object_speed``
    is in canvas pixels per frame. ``object_bounds`` confines the shapes
    to a canvas rect (e.g. the target camera's window, so reference views
    see them only inside the overlap). ``sync_jitter_amplitude`` desyncs
    the reference cameras by a smooth, deterministic sub-frame drift,
    emulating approximate multi-camera synchronization.
    """

    n_cameras: int = 3
    canvas_size: int = 128
    resolution: int = 64
    n_objects: int = 3
    object_speed: float = 0.5
    sequence_length: int = 300
    seed: int = 7
    fps: float = 10.0
    view_transforms: Optional[Mapping[int, ViewWindow]] = None
    brightness: Optional[Mapping[int, float]] = None
    object_bounds: Optional[Tuple[float, float, float, float]] = None
    sync_jitter_amplitude: float = 0.0
    sync_jitter_period: float = 37.0
    train_frac: float = 0.8
    val_frac: float = 0.1


def default_view_windows(n_cameras: int, canvas_size: int) -> dict[int, ViewWindow]:
    """Crop windows spread around the canvas center; pairwise overlapping."""
    size = 0.62 * canvas_size
    base = (canvas_size - size) / 2.0
    windows: dict[int, ViewWindow] = {}
    for k in range(n_cameras):
        if k == 0:
            dx = dy = 0.0
        else:
            angle = 2.0 * math.pi * (k - 1) / max(1, n_cameras - 1)
            dx = 0.11 * canvas_size * math.cos(angle)
            dy = 0.11 * canvas_size * math.sin(angle)
        x0 = min(max(0.0, base + dx), canvas_size - size)
        y0 = min(max(0.0, base + dy), canvas_size - size)
        windows[k + 1] = (x0, y0, size)
    return windows


def default_brightness(n_cameras: int) -> dict[int, float]:
    scales = {1: 1.0}
    for k in range(2, n_cameras + 1):
        scales[k] = _BRIGHTNESS_CYCLE[(k - 2) % len(_BRIGHTNESS_CYCLE)]
    return scales


@dataclass(frozen=True)
class _Scene:
    """Seed-derived scene constants; rendering never touches the RNG."""

    bg_phase: np.ndarray        # (3,) per-channel phase
    bg_freq: np.ndarray         # (2, 2) cycles per canvas for two gratings
    colors: np.ndarray          # (n_objects, 3)
    radii: np.ndarray           # (n_objects,)
    pos0: np.ndarray            # (n_objects, 2)
    velocity: np.ndarray        # (n_objects, 2)
    squareness: np.ndarray      # (n_objects,) bool; square vs disk
    jitter_phase: np.ndarray    # (n_cameras,) sync-drift phase per camera

    @staticmethod
    def build(cfg: SynthConfig) -> "_Scene":
        rng = np.random.default_rng(cfg.seed)
        n = cfg.n_objects
        bg_phase = rng.uniform(0.0, 2.0 * math.pi, size=3)
        bg_freq = rng.integers(1, 4, size=(2, 2)).astype(np.float64)
        colors = _PALETTE[rng.integers(0, len(_PALETTE), size=max(n, 1))][:n]
        colors = np.clip(colors + rng.uniform(-0.05, 0.05, size=(n, 3)), 0.05, 0.9)
        radii = rng.uniform(0.045, 0.075, size=n) * cfg.canvas_size
        bounds = cfg.object_bounds or (0.0, 0.0, float(cfg.canvas_size), float(cfg.canvas_size))
        lo = np.stack([radii + 1.0 + bounds[0], radii + 1.0 + bounds[1]], axis=1)
        hi = np.stack([bounds[2] - radii - 1.0, bounds[3] - radii - 1.0], axis=1)
        if n and np.any(hi <= lo):
            raise ConfigError(
                "synth: object_bounds too small for the configured object radii"
            )
        pos0 = rng.uniform(lo, hi) if n else np.zeros((0, 2))
        angles = rng.uniform(0.0, 2.0 * math.pi, size=n)
        velocity = cfg.object_speed * np.stack(
            [np.cos(angles), np.sin(angles)], axis=1
        )
        squareness = rng.integers(0, 2, size=n).astype(bool)
        jitter_phase = rng.uniform(0.0, 2.0 * math.pi, size=cfg.n_cameras)
        return _Scene(
            bg_phase, bg_freq, colors, radii, pos0, velocity, squareness, jitter_phase
        )


def _fold(u: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Reflect positions into [lo, hi] (elastic bounce, closed form)."""
    span = hi - lo
    v = np.mod(u - lo, 2.0 * span)
    return lo + span - np.abs(v - span)


def _object_positions(scene: _Scene, cfg: SynthConfig, t: float) -> np.ndarray:
    if len(scene.radii) == 0:
        return np.zeros((0, 2))
    bounds = cfg.object_bounds or (0.0, 0.0, float(cfg.canvas_size), float(cfg.canvas_size))
    margin = scene.radii[:, None] + 1.0
    lo = np.stack([margin[:, 0] + bounds[0], margin[:, 0] + bounds[1]], axis=1)
    hi = np.stack([bounds[2] - margin[:, 0], bounds[3] - margin[:, 0]], axis=1)
    return _fold(scene.pos0 + scene.velocity * float(t), lo, hi)


def _background(xs: np.ndarray, ys: np.ndarray, scene: _Scene, canvas: float) -> np.ndarray:
    """Static smooth texture, range within [0.25, 0.65] per channel."""
    out = np.empty(xs.shape + (3,), dtype=np.float64)
    (f1x, f1y), (f2x, f2y) = scene.bg_freq
    for c in range(3):
        phase = scene.bg_phase[c]
        g1 = np.sin(2.0 * math.pi * (f1x * xs + f1y * ys) / canvas + phase)
        g2 = np.cos(2.0 * math.pi * (f2x * xs - f2y * ys) / canvas + 0.7 * phase)
        out[:, :, c] = 0.45 + 0.10 * g1 + 0.10 * g2
    return out


def camera_time(cfg: SynthConfig, scene: _Scene, camera_pos: int, t: int) -> float:
    """Effective scene time for a camera slot (0 = target, exact clock).

    Reference cameras drift by a smooth deterministic jitter of up to
    ``sync_jitter_amplitude`` frames, so equal indices are only
    approximately synchronous, as with real multi-camera footage.
    """
    if camera_pos == 0 or cfg.sync_jitter_amplitude == 0.0:
        return float(t)
    phase = scene.jitter_phase[camera_pos]
    return t + cfg.sync_jitter_amplitude * math.sin(
        2.0 * math.pi * t / cfg.sync_jitter_period + phase
    )


def render_view(
    cfg: SynthConfig, scene: _Scene, window: ViewWindow, t: float, brightness: float
) -> np.ndarray:
    """Render one camera's [0, 1] float64 view at time t."""
    x0, y0, size = window
    res = cfg.resolution
    step = size / res
    xs = x0 + (np.arange(res, dtype=np.float64) + 0.5) * step
    ys = y0 + (np.arange(res, dtype=np.float64) + 0.5) * step
    gx, gy = np.meshgrid(xs, ys)  # gy varies along rows
    img = _background(gx, gy, scene, float(cfg.canvas_size))
    positions = _object_positions(scene, cfg, t)
    edge = 1.5 * step  # soft rim about 1.5 rendered pixels wide
    for o in range(len(positions)):
        px, py = positions[o]
        if scene.squareness[o]:
            d = np.maximum(np.abs(gx - px), np.abs(gy - py))
        else:
            d = np.sqrt((gx - px) ** 2 + (gy - py) ** 2)
        alpha = np.clip((scene.radii[o] - d) / edge + 0.5, 0.0, 1.0)
        img = img * (1.0 - alpha[:, :, None]) + scene.colors[o] * alpha[:, :, None]
    return np.clip(img * brightness, 0.0, 1.0)


def _window_intersection(a: ViewWindow, b: ViewWindow) -> Optional[Tuple[float, float, float, float]]:
    ax0, ay0, asz = a
    bx0, by0, bsz = b
    x0 = max(ax0, bx0)
    y0 = max(ay0, by0)
    x1 = min(ax0 + asz, bx0 + bsz)
    y1 = min(ay0 + asz, by0 + bsz)
    if x1 <= x0 or y1 <= y0:
        return None
    return (x0, y0, x1, y1)


def _zone_in_view(
    rect: Tuple[float, float, float, float], window: ViewWindow, res: int
) -> Zone:
    """Map a canvas-coordinate rect into a camera's pixel coordinates."""
    x0, y0, size = window
    scale = res / size
    px0 = int(np.floor((rect[0] - x0) * scale))
    py0 = int(np.floor((rect[1] - y0) * scale))
    px1 = int(np.ceil((rect[2] - x0) * scale))
    py1 = int(np.ceil((rect[3] - y0) * scale))
    return (max(0, px0), max(0, py0), min(res, px1), min(res, py1))


def build_rig(cfg: SynthConfig) -> CameraRig:
    """Rig of the synthetic world: zero offsets, computed overlap zones."""
    windows = dict(cfg.view_transforms) if cfg.view_transforms else default_view_windows(
        cfg.n_cameras, cfg.canvas_size
    )
    cam_ids = sorted(windows)
    target = cam_ids[0]
    for i, a in enumerate(cam_ids):
        for b in cam_ids[i + 1:]:
            if _window_intersection(windows[a], windows[b]) is None:
                raise NonOverlappingViews(
                    f"synth.build_rig: cameras {a} and {b} have disjoint views"
                )
    zones: dict[int, Zone] = {}
    for cam in cam_ids[1:]:
        rect = _window_intersection(windows[target], windows[cam])
        assert rect is not None
        zone = _zone_in_view(rect, windows[cam], cfg.resolution)
        if zone[0] >= zone[2] or zone[1] >= zone[3]:
            raise NonOverlappingViews(
                f"synth.build_rig: overlap of cameras {target} and {cam} "
                "rounds to an empty pixel zone"
            )
        zones[cam] = zone
    return CameraRig(
        n_cameras=len(cam_ids),
        target_camera=target,
        offsets_seconds={c: 0.0 for c in cam_ids},
        fps=cfg.fps,
        overlap_zones=zones,
        resolution=cfg.resolution,
    )


def synthesize(cfg: SynthConfig) -> "_data.SequenceStore":
    """Render the full multi-camera sequence into a SequenceStore.

    Deterministic for a fixed config: two calls yield bit-identical
    stores. Raises NonOverlappingViews if the camera windows (or their
    pixel-rounded overlap zones) are disjoint.
    """
    rig = build_rig(cfg)
    windows = dict(cfg.view_transforms) if cfg.view_transforms else default_view_windows(
        cfg.n_cameras, cfg.canvas_size
    )
    brightness = dict(cfg.brightness) if cfg.brightness else default_brightness(
        cfg.n_cameras
    )
    scene = _Scene.build(cfg)
    frames: dict[int, tuple[Frame, ...]] = {}
    for pos, cam in enumerate(rig.camera_ids):
        cam_frames = []
        for t in range(cfg.sequence_length):
            t_eff = camera_time(cfg, scene, pos, t)
            unit = render_view(cfg, scene, windows[cam], t_eff, brightness.get(cam, 1.0))
            cam_frames.append(Frame(pixels=from_unit(unit), camera_id=cam, index=t))
        frames[cam] = tuple(cam_frames)
    splits = _data.assign_splits(cfg.sequence_length, cfg.train_frac, cfg.val_frac)
    return _data.SequenceStore(
        frames=frames,
        rig=rig,
        split_assignment=splits,
        applied_shifts={c: 0 for c in rig.camera_ids},
    )
