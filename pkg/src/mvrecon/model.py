"""U-Net generator and patch-level discriminator.

The generator is an encoder/decoder with a skip connection from every
encoder level to its mirror decoder level; noise enters as dropout kept
active at both training and inference time. The discriminator emits a
grid of patch realism logits (30x30 for 256x256 inputs at the defaults)
whose cells each see a bounded receptive field (70x70 at the defaults).

Convention: tensors are NCHW float in [-1, 1]; discriminator outputs are
pre-sigmoid logits (the losses apply the sigmoid).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Tuple

import numpy as np
import torch
import torch.nn as nn

from .core import Frame
from .errors import BadResolution, CheckpointError
from .seeding import derive_seed

CHECKPOINT_FORMAT = "mvrecon-checkpoint-v1"
INIT_STD = 0.02


@dataclass(frozen=True)
class GeneratorSpec:
    """U-Net shape parameters.

    ``depth`` stride-2 encoder levels halve the input down to
    ``size / 2**depth`` at the bottleneck (1x1 for 256x256 at depth 8).
    ``dropout_layers`` are decoder level indices counted from the
    bottleneck; they carry the noise dropout.
    """

    in_channels: int = 3
    out_channels: int = 3
    base_filters: int = 64
    depth: int = 8
    dropout_layers: Tuple[int, ...] = (0, 1, 2)
    dropout_p: float = 0.5

    def __post_init__(self) -> None:
        object.__setattr__(self, "dropout_layers", tuple(sorted(set(self.dropout_layers))))
        if self.depth < 2:
            raise BadResolution(f"model.GeneratorSpec: depth={self.depth} < 2")
        if self.base_filters < 1 or self.in_channels < 1 or self.out_channels < 1:
            raise BadResolution("model.GeneratorSpec: channel counts must be >= 1")
        if not 0.0 <= self.dropout_p < 1.0:
            raise BadResolution(f"model.GeneratorSpec: dropout_p={self.dropout_p}")
        bad = [i for i in self.dropout_layers if not 0 <= i < self.depth - 1]
        if bad:
            raise BadResolution(
                f"model.GeneratorSpec: dropout layers {bad} outside 0..{self.depth - 2}"
            )

    def level_channels(self, level: int) -> int:
        return self.base_filters * min(2 ** level, 8)

    def validate_resolution(self, height: int, width: int) -> None:
        step = 1 << self.depth
        for size in (height, width):
            if size < step or size % step:
                raise BadResolution(
                    f"model: input {height}x{width} incompatible with depth "
                    f"{self.depth} (needs a multiple of {step})"
                )


@dataclass(frozen=True)
class DiscriminatorSpec:
    """PatchGAN shape parameters: conditioning and candidate frames are
    concatenated on channels, hence 6 input channels by default."""

    in_channels: int = 6
    base_filters: int = 64
    n_layers: int = 3

    def __post_init__(self) -> None:
        if self.n_layers < 1:
            raise BadResolution(f"model.DiscriminatorSpec: n_layers={self.n_layers} < 1")
        if self.base_filters < 1 or self.in_channels < 2:
            raise BadResolution("model.DiscriminatorSpec: bad channel counts")

    def map_size(self, size: int) -> int:
        """Spatial size of the realism map for a square input."""
        s = size
        for _ in range(self.n_layers):
            s = (s - 2) // 2 + 1  # conv k4 s2 p1
        s = s - 1  # conv k4 s1 p1
        s = s - 1  # final k4 s1 p1
        if s < 1:
            raise BadResolution(
                f"model: {size}x{size} input too small for {self.n_layers}-layer "
                "discriminator"
            )
        return s

    def receptive_field(self) -> int:
        """Input pixels covered by one output cell (70 at the defaults)."""
        rf, stride = 1, 1
        for _ in range(self.n_layers):
            rf += 3 * stride
            stride *= 2
        rf += 3 * stride  # stride-1 layer
        rf += 3 * stride  # final layer
        return rf


class NoiseDropout(nn.Module):
    """Dropout that stays active at inference and draws from an explicit
    torch.Generator, realizing the generator's noise input."""

    def __init__(self, p: float) -> None:
        super().__init__()
        self.p = p

    def forward(self, x: torch.Tensor, noise: Optional[torch.Generator]) -> torch.Tensor:
        if self.p <= 0.0:
            return x
        if noise is None:
            mask = torch.rand_like(x) >= self.p
        else:
            mask = torch.rand(
                x.shape, generator=noise, device=x.device, dtype=x.dtype
            ) >= self.p
        return x * mask.to(x.dtype) / (1.0 - self.p)


class _Down(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, outermost: bool, innermost: bool) -> None:
        super().__init__()
        layers: list[nn.Module] = []
        if not outermost:
            layers.append(nn.LeakyReLU(0.2))
        layers.append(nn.Conv2d(in_ch, out_ch, 4, stride=2, padding=1))
        # no norm on the outermost level (raw pixels) nor the bottleneck
        # (spatial size can be 1x1 there)
        if not outermost and not innermost:
            layers.append(nn.InstanceNorm2d(out_ch, affine=True))
        self.block = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.block(x)


class _Up(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, outermost: bool, dropout_p: float) -> None:
        super().__init__()
        self.pre = nn.Sequential(
            nn.ReLU(),
            nn.ConvTranspose2d(in_ch, out_ch, 4, stride=2, padding=1),
        )
        self.norm = None if outermost else nn.InstanceNorm2d(out_ch, affine=True)
        self.noise = NoiseDropout(dropout_p) if dropout_p > 0 else None
        self.tanh = nn.Tanh() if outermost else None

    def forward(self, x: torch.Tensor, noise: Optional[torch.Generator]) -> torch.Tensor:
        h = self.pre(x)
        if self.norm is not None:
            h = self.norm(h)
        if self.noise is not None:
            h = self.noise(h, noise)
        if self.tanh is not None:
            h = self.tanh(h)
        return h


class UnetGenerator(nn.Module):
    """Conditioning frame (+ dropout noise) -> reconstructed frame.

    ``skip_gains[i]`` scales the skip connection from encoder level ``i``
    (all 1.0 normally); zeroing one is the structural probe showing the
    skips are load-bearing.
    """

    def __init__(self, spec: GeneratorSpec) -> None:
        super().__init__()
        self.spec = spec
        d = spec.depth
        downs = []
        for i in range(d):
            in_ch = spec.in_channels if i == 0 else spec.level_channels(i - 1)
            downs.append(
                _Down(in_ch, spec.level_channels(i), outermost=(i == 0), innermost=(i == d - 1))
            )
        self.downs = nn.ModuleList(downs)
        ups = []
        for j in range(d):
            enc_level = d - 1 - j
            in_ch = spec.level_channels(enc_level) * (1 if j == 0 else 2)
            out_ch = spec.out_channels if j == d - 1 else spec.level_channels(enc_level - 1)
            dropout_p = spec.dropout_p if j in spec.dropout_layers else 0.0
            ups.append(_Up(in_ch, out_ch, outermost=(j == d - 1), dropout_p=dropout_p))
        self.ups = nn.ModuleList(ups)
        self.skip_gains: list[float] = [1.0] * (d - 1)

    def forward(
        self, x: torch.Tensor, noise: Optional[torch.Generator] = None
    ) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != self.spec.in_channels:
            raise BadResolution(
                f"model.UnetGenerator: expected Nx{self.spec.in_channels}xHxW, "
                f"got {tuple(x.shape)}"
            )
        self.spec.validate_resolution(x.shape[2], x.shape[3])
        skips = []
        h = x
        for down in self.downs:
            h = down(h)
            skips.append(h)
        for j, up in enumerate(self.ups):
            if j == 0:
                h = up(h, noise)
            else:
                enc_level = self.spec.depth - 1 - j
                skip = skips[enc_level]
                gain = self.skip_gains[enc_level]
                if gain != 1.0:
                    skip = skip * gain
                h = up(torch.cat([h, skip], dim=1), noise)
        return h


class PatchDiscriminator(nn.Module):
    """(conditioning, candidate) -> patch realism logit map."""

    def __init__(self, spec: DiscriminatorSpec) -> None:
        super().__init__()
        self.spec = spec
        b = spec.base_filters
        layers: list[nn.Module] = [
            nn.Conv2d(spec.in_channels, b, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
        ]
        prev = 1
        for i in range(1, spec.n_layers):
            mult = min(2 ** i, 8)
            layers += [
                nn.Conv2d(b * prev, b * mult, 4, stride=2, padding=1),
                nn.BatchNorm2d(b * mult),
                nn.LeakyReLU(0.2),
            ]
            prev = mult
        mult = min(2 ** spec.n_layers, 8)
        layers += [
            nn.Conv2d(b * prev, b * mult, 4, stride=1, padding=1),
            nn.BatchNorm2d(b * mult),
            nn.LeakyReLU(0.2),
            nn.Conv2d(b * mult, 1, 4, stride=1, padding=1),
        ]
        self.net = nn.Sequential(*layers)

    def forward(self, conditioning: torch.Tensor, candidate: torch.Tensor) -> torch.Tensor:
        if conditioning.shape != candidate.shape:
            raise BadResolution(
                f"model.PatchDiscriminator: conditioning {tuple(conditioning.shape)} "
                f"vs candidate {tuple(candidate.shape)}"
            )
        self.spec.map_size(min(conditioning.shape[2], conditioning.shape[3]))
        return self.net(torch.cat([conditioning, candidate], dim=1))


def init_weights(
    module: nn.Module, std: float = INIT_STD, generator: Optional[torch.Generator] = None
) -> None:
    """Gaussian init: conv weights N(0, std), norm gains N(1, std), biases 0."""
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
                m.weight.normal_(0.0, std, generator=generator)
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, (nn.InstanceNorm2d, nn.BatchNorm2d)) and m.affine:
                m.weight.normal_(1.0, std, generator=generator)
                m.bias.zero_()


def _seeded_generator(seed: Optional[int]) -> Optional[torch.Generator]:
    if seed is None:
        return None
    gen = torch.Generator()
    gen.manual_seed(seed & 0x7FFF_FFFF_FFFF_FFFF)
    return gen


def build_generator(spec: GeneratorSpec, init_seed: Optional[int] = None) -> UnetGenerator:
    """Construct and initialize a generator (seeded init when given)."""
    net = UnetGenerator(spec)
    init_weights(net, generator=_seeded_generator(init_seed))
    return net


def build_discriminator(
    spec: DiscriminatorSpec, init_seed: Optional[int] = None
) -> PatchDiscriminator:
    """Construct and initialize a discriminator (seeded init when given)."""
    net = PatchDiscriminator(spec)
    init_weights(net, generator=_seeded_generator(init_seed))
    return net


# --- frame <-> tensor -------------------------------------------------------

def frame_to_tensor(frame: Frame) -> torch.Tensor:
    """HxWx3 [-1,1] frame to 3xHxW float32 tensor."""
    return torch.from_numpy(np.ascontiguousarray(frame.pixels.transpose(2, 0, 1)))


def tensor_to_frame(tensor: torch.Tensor, camera_id: int, index: int) -> Frame:
    """3xHxW tensor to a Frame; values clamped to [-1, 1]."""
    arr = tensor.detach().clamp(-1.0, 1.0).cpu().numpy().transpose(1, 2, 0)
    return Frame(pixels=arr.astype(np.float32), camera_id=camera_id, index=index)


# --- checkpoints -------------------------------------------------------------

def save_generator_checkpoint(
    path: Path | str,
    spec: GeneratorSpec,
    net: UnetGenerator,
    source_tag: str,
) -> None:
    """Self-describing archive: format tag, spec fields, parameters."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "kind": "generator",
        "source_tag": source_tag,
        "spec": asdict(spec) | {"dropout_layers": list(spec.dropout_layers)},
        "state": net.state_dict(),
    }
    torch.save(payload, str(path))


def load_generator_checkpoint(path: Path | str) -> tuple[GeneratorSpec, UnetGenerator, str]:
    """Load a generator checkpoint; returns (spec, net, source_tag)."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"model: checkpoint {path} does not exist")
    try:
        payload = torch.load(str(path), map_location="cpu", weights_only=True)
    except Exception as exc:  # torch raises several unpickling error types
        raise CheckpointError(f"model: cannot load checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(
            f"model: {path} is not a {CHECKPOINT_FORMAT} archive"
        )
    if payload.get("kind") != "generator":
        raise CheckpointError(f"model: {path} holds a {payload.get('kind')!r}, "
                              "expected a generator")
    spec_fields = dict(payload["spec"])
    spec_fields["dropout_layers"] = tuple(spec_fields.get("dropout_layers", ()))
    spec = GeneratorSpec(**spec_fields)
    net = UnetGenerator(spec)
    net.load_state_dict(payload["state"])
    net.eval()
    return spec, net, str(payload.get("source_tag", ""))
