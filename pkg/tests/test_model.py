from __future__ import annotations

import numpy as np
import pytest
import torch

from mvrecon.errors import BadResolution, CheckpointError
from mvrecon.model import (
    DiscriminatorSpec,
    GeneratorSpec,
    build_discriminator,
    build_generator,
    frame_to_tensor,
    load_generator_checkpoint,
    save_generator_checkpoint,
    tensor_to_frame,
)

from helpers import make_frame


SMALL_GEN = GeneratorSpec(base_filters=8, depth=5, dropout_layers=(0, 1))
SMALL_DISC = DiscriminatorSpec(base_filters=8, n_layers=3)


# --- generator ----------------------------------------------------------------

def test_generator_spec_defaults_match_contract():
    spec = GeneratorSpec()
    assert spec.depth == 8 and spec.base_filters == 64
    spec.validate_resolution(256, 256)  # 256 / 2^8 == 1 at the bottleneck


def test_generator_256_contract():
    gen = build_generator(GeneratorSpec(base_filters=4), init_seed=0)
    x = torch.linspace(-1, 1, 3 * 256 * 256).reshape(1, 3, 256, 256)
    with torch.no_grad():
        out = gen(x, noise=torch.Generator().manual_seed(0))
    assert out.shape == (1, 3, 256, 256)
    assert float(out.min()) >= -1.0 and float(out.max()) <= 1.0


def test_generator_rejects_incompatible_resolution():
    gen = build_generator(GeneratorSpec(base_filters=4), init_seed=0)
    with pytest.raises(BadResolution):
        gen(torch.zeros(1, 3, 128, 128))


def test_generator_output_range_random_weights(rng):
    gen = build_generator(SMALL_GEN, init_seed=3)
    x = torch.from_numpy(rng.uniform(-1, 1, (2, 3, 32, 32)).astype(np.float32))
    with torch.no_grad():
        out = gen(x, noise=torch.Generator().manual_seed(1))
    assert out.shape == (2, 3, 32, 32)
    assert float(out.abs().max()) <= 1.0


def test_zeroing_a_skip_changes_output():
    gen = build_generator(SMALL_GEN, init_seed=11)
    x = torch.linspace(-1, 1, 3 * 32 * 32).reshape(1, 3, 32, 32)
    noise = lambda: torch.Generator().manual_seed(5)
    baseline = gen(x, noise())
    gen.skip_gains[2] = 0.0
    altered = gen(x, noise())
    gen.skip_gains[2] = 1.0
    restored = gen(x, noise())
    assert not torch.equal(baseline, altered)
    assert torch.equal(baseline, restored)


def test_generator_noise_streams_are_reproducible():
    gen = build_generator(SMALL_GEN, init_seed=2)
    x = torch.linspace(-1, 1, 3 * 32 * 32).reshape(1, 3, 32, 32)
    a = gen(x, torch.Generator().manual_seed(9))
    b = gen(x, torch.Generator().manual_seed(9))
    c = gen(x, torch.Generator().manual_seed(10))
    assert torch.equal(a, b)
    assert not torch.equal(a, c)


def test_generator_param_count_invariant_across_builds():
    count = lambda net: sum(p.numel() for p in net.parameters())
    assert count(build_generator(SMALL_GEN, init_seed=1)) == count(
        build_generator(SMALL_GEN, init_seed=99)
    )


def test_generator_spec_validation():
    with pytest.raises(BadResolution):
        GeneratorSpec(depth=1)
    with pytest.raises(BadResolution):
        GeneratorSpec(depth=4, dropout_layers=(3,))
    with pytest.raises(BadResolution):
        GeneratorSpec(dropout_p=1.0)


# --- discriminator --------------------------------------------------------------

def test_discriminator_emits_30x30_for_256():
    spec = DiscriminatorSpec(base_filters=8)
    assert spec.map_size(256) == 30
    disc = build_discriminator(spec, init_seed=0)
    disc.eval()
    out = disc(torch.zeros(1, 3, 256, 256), torch.zeros(1, 3, 256, 256))
    assert out.shape == (1, 1, 30, 30)


def test_discriminator_map_size_matches_forward():
    spec = DiscriminatorSpec(base_filters=4, n_layers=3)
    disc = build_discriminator(spec, init_seed=0)
    disc.eval()
    for size in (64, 96, 256):
        out = disc(torch.zeros(1, 3, size, size), torch.zeros(1, 3, size, size))
        assert out.shape[-1] == spec.map_size(size)


def test_discriminator_default_receptive_field_is_70():
    assert DiscriminatorSpec().receptive_field() == 70


def test_discriminator_locality_probe(rng):
    # a perturbation outside a cell's receptive field leaves it unchanged
    disc = build_discriminator(DiscriminatorSpec(base_filters=8), init_seed=4)
    disc.eval()
    cond = torch.from_numpy(rng.uniform(-1, 1, (1, 3, 256, 256)).astype(np.float32))
    cand = torch.from_numpy(rng.uniform(-1, 1, (1, 3, 256, 256)).astype(np.float32))
    base = disc(cond, cand)
    far = cand.clone()
    far[0, :, 255, 255] = -far[0, :, 255, 255]
    out_far = disc(cond, far)
    assert torch.equal(base[0, 0, 0, 0], out_far[0, 0, 0, 0])
    assert not torch.equal(base, out_far)  # the nearby cells did react
    near = cand.clone()
    near[0, :, 0, 0] = -near[0, :, 0, 0]
    out_near = disc(cond, near)
    assert not torch.equal(base[0, 0, 0, 0], out_near[0, 0, 0, 0])


def test_discriminator_deterministic_forward(rng):
    disc = build_discriminator(SMALL_DISC, init_seed=1)
    disc.eval()
    cond = torch.from_numpy(rng.uniform(-1, 1, (1, 3, 64, 64)).astype(np.float32))
    cand = torch.from_numpy(rng.uniform(-1, 1, (1, 3, 64, 64)).astype(np.float32))
    assert torch.equal(disc(cond, cand), disc(cond, cand))


def test_discriminator_too_small_input():
    spec = DiscriminatorSpec(base_filters=4, n_layers=3)
    with pytest.raises(BadResolution):
        spec.map_size(8)


def test_discriminator_shape_mismatch():
    disc = build_discriminator(SMALL_DISC, init_seed=0)
    with pytest.raises(BadResolution):
        disc(torch.zeros(1, 3, 64, 64), torch.zeros(1, 3, 32, 32))


# --- conversions / checkpoints ----------------------------------------------------

def test_frame_tensor_round_trip(rng):
    frame = make_frame(rng, camera_id=3, index=9)
    tensor = frame_to_tensor(frame)
    assert tensor.shape == (3, 16, 16)
    back = tensor_to_frame(tensor, camera_id=3, index=9)
    assert np.array_equal(back.pixels, frame.pixels)


def test_checkpoint_round_trip(tmp_path):
    gen = build_generator(SMALL_GEN, init_seed=21)
    path = tmp_path / "past.ckpt"
    save_generator_checkpoint(path, SMALL_GEN, gen, "past")
    spec, loaded, tag = load_generator_checkpoint(path)
    assert spec == SMALL_GEN and tag == "past"
    for key, tensor in gen.state_dict().items():
        assert torch.equal(loaded.state_dict()[key], tensor)


def test_checkpoint_reproduces_outputs(tmp_path):
    gen = build_generator(SMALL_GEN, init_seed=8)
    path = tmp_path / "g.ckpt"
    save_generator_checkpoint(path, SMALL_GEN, gen, "future")
    _, loaded, _ = load_generator_checkpoint(path)
    x = torch.linspace(-1, 1, 3 * 32 * 32).reshape(1, 3, 32, 32)
    assert torch.equal(
        gen(x, torch.Generator().manual_seed(3)),
        loaded(x, torch.Generator().manual_seed(3)),
    )


def test_checkpoint_errors(tmp_path):
    with pytest.raises(CheckpointError):
        load_generator_checkpoint(tmp_path / "missing.ckpt")
    bogus = tmp_path / "bogus.ckpt"
    torch.save({"format": "other"}, bogus)
    with pytest.raises(CheckpointError):
        load_generator_checkpoint(bogus)
    wrong_kind = tmp_path / "kind.ckpt"
    torch.save({"format": "mvrecon-checkpoint-v1", "kind": "discriminator"}, wrong_kind)
    with pytest.raises(CheckpointError):
        load_generator_checkpoint(wrong_kind)
