from __future__ import annotations

import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from mvrecon.core import CameraRig
from mvrecon.errors import EmptySplit, MvreconError, NonFiniteLoss
from mvrecon.model import (
    DiscriminatorSpec,
    GeneratorSpec,
    build_discriminator,
    build_generator,
    frame_to_tensor,
)
from mvrecon.seeding import derive_seed
from mvrecon.training import (
    LossRecord,
    SourceModelBank,
    TrainConfig,
    bank_tags,
    gan_losses,
    load_bank,
    load_history_csv,
    save_bank,
    save_history_csv,
    train_bank,
    train_source,
    train_step,
)

from helpers import make_frame, tiny_synth_store

TINY_GEN = GeneratorSpec(base_filters=8, depth=5, dropout_layers=(0, 1))
TINY_DISC = DiscriminatorSpec(base_filters=8, n_layers=2)


@pytest.fixture(scope="module")
def store():
    return tiny_synth_store(seed=6, length=60, resolution=32)


# --- gan_losses -----------------------------------------------------------------

def test_d_loss_closed_form_at_zero_preactivations():
    zeros = torch.zeros(1, 1, 30, 30, dtype=torch.float64)
    frame = torch.zeros(1, 3, 8, 8, dtype=torch.float64)
    d_loss, _, _ = gan_losses(zeros, zeros, frame, frame, 100.0)
    # -1/2 (log 1/2 + log 1/2) = log 2
    assert float(d_loss) == pytest.approx(math.log(2.0), abs=1e-12)


def test_l1_zero_for_identical_frames(rng):
    frame = torch.from_numpy(rng.uniform(-1, 1, (1, 3, 8, 8)))
    maps = torch.from_numpy(rng.normal(size=(1, 1, 4, 4)))
    _, _, l1 = gan_losses(maps, maps, frame, frame, 100.0)
    assert float(l1) == 0.0


def test_lambda_zero_leaves_pure_adversarial(rng):
    d_fake = torch.from_numpy(rng.normal(size=(1, 1, 4, 4)))
    d_real = torch.from_numpy(rng.normal(size=(1, 1, 4, 4)))
    fake = torch.from_numpy(rng.uniform(-1, 1, (1, 3, 8, 8)))
    target = torch.from_numpy(rng.uniform(-1, 1, (1, 3, 8, 8)))
    _, g_loss, _ = gan_losses(d_real, d_fake, fake, target, 0.0)
    assert torch.equal(g_loss, -F.logsigmoid(d_fake).mean())


def test_d_loss_is_exactly_half_unhalved_bce(rng):
    for _ in range(10):
        d_real = torch.from_numpy(rng.normal(size=(1, 1, 6, 6)))
        d_fake = torch.from_numpy(rng.normal(size=(1, 1, 6, 6)))
        frame = torch.from_numpy(rng.uniform(-1, 1, (1, 3, 8, 8)))
        d_loss, _, _ = gan_losses(d_real, d_fake, frame, frame, 1.0)
        unhalved = -(F.logsigmoid(d_real).mean() + F.logsigmoid(-d_fake).mean())
        assert torch.equal(d_loss, 0.5 * unhalved)


def test_gan_losses_non_finite(rng):
    bad = torch.full((1, 1, 4, 4), float("inf"))
    frame = torch.zeros(1, 3, 8, 8)
    with pytest.raises(NonFiniteLoss):
        gan_losses(bad, bad, frame, frame, 100.0)


def test_gan_losses_shape_mismatch():
    with pytest.raises(MvreconError):
        gan_losses(
            torch.zeros(1, 1, 4, 4),
            torch.zeros(1, 1, 4, 4),
            torch.zeros(1, 3, 8, 8),
            torch.zeros(1, 3, 16, 16),
            1.0,
        )


# --- alternation ------------------------------------------------------------------

def _clone_params(module):
    return {k: v.detach().clone() for k, v in module.state_dict().items()}


def _trainable_changed(before, module):
    trainable = {name for name, _ in module.named_parameters()}
    return any(
        not torch.equal(before[k], v)
        for k, v in module.state_dict().items()
        if k in trainable
    )


def test_alternation_isolates_parameter_updates(rng):
    gen = build_generator(TINY_GEN, init_seed=1)
    disc = build_discriminator(TINY_DISC, init_seed=2)
    opt_g = torch.optim.Adam(gen.parameters(), lr=2e-4, betas=(0.5, 0.999))
    opt_d = torch.optim.Adam(disc.parameters(), lr=2e-4, betas=(0.5, 0.999))
    x = torch.from_numpy(rng.uniform(-1, 1, (1, 3, 32, 32)).astype(np.float32))
    y = torch.from_numpy(rng.uniform(-1, 1, (1, 3, 32, 32)).astype(np.float32))
    noise = torch.Generator().manual_seed(0)

    fake = gen(x, noise)
    # D phase only: G parameters must not move
    g_before = _clone_params(gen)
    d_before = _clone_params(disc)
    opt_d.zero_grad(set_to_none=True)
    d_loss, _, _ = gan_losses(disc(x, y), disc(x, fake.detach()), fake.detach(), y, 100.0)
    d_loss.backward()
    opt_d.step()
    assert not _trainable_changed(g_before, gen)
    assert _trainable_changed(d_before, disc)

    # G phase only: D parameters must not move
    d_before = _clone_params(disc)
    opt_g.zero_grad(set_to_none=True)
    _, g_loss, _ = gan_losses(
        disc(x, y).detach(), disc(x, fake), fake, y, 100.0
    )
    g_loss.backward()
    opt_g.step()
    assert not _trainable_changed(d_before, disc)
    assert _trainable_changed(g_before, gen)


def test_train_step_updates_both_networks(rng):
    gen = build_generator(TINY_GEN, init_seed=5)
    disc = build_discriminator(TINY_DISC, init_seed=6)
    opt_g = torch.optim.Adam(gen.parameters(), lr=2e-4, betas=(0.5, 0.999))
    opt_d = torch.optim.Adam(disc.parameters(), lr=2e-4, betas=(0.5, 0.999))
    x = torch.from_numpy(rng.uniform(-1, 1, (1, 3, 32, 32)).astype(np.float32))
    y = torch.from_numpy(rng.uniform(-1, 1, (1, 3, 32, 32)).astype(np.float32))
    g_before, d_before = _clone_params(gen), _clone_params(disc)
    d_loss, g_loss, l1 = train_step(
        gen, disc, opt_g, opt_d, x, y, 100.0, torch.Generator().manual_seed(1)
    )
    assert all(math.isfinite(v) for v in (d_loss, g_loss, l1))
    assert _trainable_changed(g_before, gen)
    assert _trainable_changed(d_before, disc)


# --- train_source / train_bank ------------------------------------------------------

def test_train_source_zero_steps_is_initialization(store):
    cfg = TrainConfig(steps=0, seed=42)
    source = train_source("past", store, (1, 3), cfg, TINY_GEN, TINY_DISC)
    assert source.history == ()
    reference = build_generator(TINY_GEN, init_seed=derive_seed(42, "past"))
    for key, tensor in reference.state_dict().items():
        assert torch.equal(source.net.state_dict()[key], tensor)


def test_train_source_deterministic_histories(store):
    cfg = TrainConfig(steps=8, seed=9)
    a = train_source("past", store, (1, 3), cfg, TINY_GEN, TINY_DISC)
    b = train_source("past", store, (1, 3), cfg, TINY_GEN, TINY_DISC)
    assert a.history == b.history
    for key, tensor in a.net.state_dict().items():
        assert torch.equal(b.net.state_dict()[key], tensor)


def test_train_source_seeds_differ_across_tags(store):
    cfg = TrainConfig(steps=3, seed=9)
    past = train_source("past", store, (1,), cfg, TINY_GEN, TINY_DISC)
    future = train_source("future", store, (1,), cfg, TINY_GEN, TINY_DISC)
    assert past.history != future.history


def test_train_source_empty_split(store):
    cfg = TrainConfig(steps=1, seed=0)
    with pytest.raises(EmptySplit):
        train_source("past", store, (500,), cfg, TINY_GEN, TINY_DISC)


def test_train_source_losses_finite_and_l1_descends(store):
    cfg = TrainConfig(steps=40, seed=4)
    source = train_source("past", store, (1,), cfg, TINY_GEN, TINY_DISC)
    assert len(source.history) == 40
    assert all(
        math.isfinite(r.d_loss) and math.isfinite(r.g_loss) and math.isfinite(r.l1)
        for r in source.history
    )
    first = np.mean([r.l1 for r in source.history[:5]])
    last = np.mean([r.l1 for r in source.history[-5:]])
    assert last < first


def test_train_source_wraps_nonfinite_with_step(store, monkeypatch):
    calls = {"n": 0}

    def explode(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] >= 4:
            raise NonFiniteLoss("training.gan_losses: d_loss is non-finite")
        return 0.5, 0.5, 0.1

    monkeypatch.setattr("mvrecon.training.train_step", explode)
    with pytest.raises(NonFiniteLoss) as excinfo:
        train_source("past", store, (1,), TrainConfig(steps=10, seed=0), TINY_GEN, TINY_DISC)
    assert "step 3" in str(excinfo.value)


def _steps0_bank(store):
    return train_bank(
        store, store.rig, TrainConfig(steps=0, seed=0), (1,), TINY_GEN, TINY_DISC
    )


def test_train_bank_tags_three_cameras(store):
    bank = _steps0_bank(store)
    assert set(bank.tags) == {"past", "future", "ref_2", "ref_3"}


def test_train_bank_single_and_two_camera_rigs():
    one = tiny_synth_store(seed=2, length=30, resolution=32, n_cameras=1)
    bank_one = train_bank(
        one, one.rig, TrainConfig(steps=0, seed=0), (1,), TINY_GEN, TINY_DISC
    )
    assert set(bank_one.tags) == {"past", "future"}
    two = tiny_synth_store(seed=2, length=30, resolution=32, n_cameras=2)
    bank_two = train_bank(
        two, two.rig, TrainConfig(steps=0, seed=0), (1,), TINY_GEN, TINY_DISC
    )
    assert len(bank_two.tags) == 3
    assert set(bank_two.tags) == {"past", "future", "ref_2"}


def test_bank_tags_follow_rig():
    rig = CameraRig(
        n_cameras=3,
        target_camera=1,
        offsets_seconds={1: 0.0, 2: 0.0, 3: 0.0},
        fps=10.0,
        resolution=32,
    )
    assert bank_tags(rig) == ("past", "future", "ref_2", "ref_3")


def test_bank_validate_against(store):
    bank = _steps0_bank(store)
    bank.validate_against(store.rig)
    partial = SourceModelBank(models={"past": bank.model("past")})
    with pytest.raises(MvreconError):
        partial.validate_against(store.rig)


# --- miniature gradient check --------------------------------------------------------

def test_generator_gradients_match_finite_differences(rng):
    # miniature generator: 2 levels, 4 filters, 8x8 input, no dropout
    gen_spec = GeneratorSpec(base_filters=4, depth=2, dropout_layers=(), dropout_p=0.0)
    disc_spec = DiscriminatorSpec(base_filters=4, n_layers=1)
    gen = build_generator(gen_spec, init_seed=0).double()
    disc = build_discriminator(disc_spec, init_seed=1).double()
    disc.eval()
    x = torch.from_numpy(rng.uniform(-1, 1, (1, 3, 8, 8)))
    y = torch.from_numpy(rng.uniform(-1, 1, (1, 3, 8, 8)))

    def g_objective() -> torch.Tensor:
        fake = gen(x)
        _, g_loss, _ = gan_losses(disc(x, y), disc(x, fake), fake, y, 100.0)
        return g_loss

    loss = g_objective()
    loss.backward()
    params = [p for p in gen.parameters() if p.grad is not None]
    flat = [(p, i) for p in params for i in range(min(3, p.numel()))]
    eps = 1e-6
    checked = 0
    for p, i in flat[:30]:
        with torch.no_grad():
            original = p.view(-1)[i].item()
            p.view(-1)[i] = original + eps
            plus = float(g_objective())
            p.view(-1)[i] = original - eps
            minus = float(g_objective())
            p.view(-1)[i] = original
        fd = (plus - minus) / (2 * eps)
        analytic = p.grad.view(-1)[i].item()
        rel = abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-8)
        assert rel <= 1e-3, f"param grad mismatch: {analytic} vs {fd}"
        checked += 1
    assert checked >= 20


# --- persistence ------------------------------------------------------------------

def test_history_csv_round_trip(tmp_path):
    history = (
        LossRecord(0, 0.6931471805599453, 123.456789, 0.987654321),
        LossRecord(1, 0.1, 2.0, 0.3),
    )
    path = tmp_path / "history.csv"
    save_history_csv(path, history)
    assert load_history_csv(path) == history
    assert path.read_text().splitlines()[0] == "step,d_loss,g_loss,l1"


def test_bank_save_load_round_trip(tmp_path, store, rng):
    cfg = TrainConfig(steps=2, seed=3)
    bank = train_bank(store, store.rig, cfg, (1,), TINY_GEN, TINY_DISC)
    save_bank(bank, tmp_path)
    loaded = load_bank(tmp_path)
    assert set(loaded.tags) == set(bank.tags)
    frame = make_frame(rng, 32, 32)
    for tag in bank.tags:
        noise = lambda: torch.Generator().manual_seed(11)
        a = bank.model(tag).generate(frame, noise())
        b = loaded.model(tag).generate(frame, noise())
        assert np.array_equal(a.pixels, b.pixels)
    assert (tmp_path / "past_history.csv").is_file()
    assert load_history_csv(tmp_path / "past_history.csv") == bank.model("past").history
