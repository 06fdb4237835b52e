import numpy as np
import pytest

from sassl.augpipe import AugPolicy
from sassl.cli.checkpoint import load_model, save_model
from sassl.evaluation import SynthSpec, encode_dataset, gen_style_images, gen_synth
from sassl.ssltrain import ModelConfig, SslModel, TrainConfig, Trainer, pretrain, smoothed
from sassl.stylebank import build_bank

TINY = ModelConfig(encoder_widths=(8, 16), projector_hidden=16, projector_out=8)


@pytest.fixture(scope="module")
def data():
    return gen_synth(SynthSpec(n_train=16, n_test=4)).images


@pytest.fixture(scope="module")
def bank(styler):
    return build_bank(gen_style_images(4), styler)


def _run(data, styler, bank, **cfg):
    cfg = TrainConfig(**{"steps": 3, "batch_size": 8, **cfg})
    model, hist = pretrain(data, SslModel(TINY), cfg, AugPolicy(), styler, bank)
    return model, hist


def test_model_shapes():
    m = SslModel(TINY)
    x = np.random.default_rng(0).uniform(size=(2, 3, 32, 32)).astype(np.float32)
    assert m.embed(x).shape == (2, 8)
    assert m.query(x).shape == (2, 8)
    assert m(x).shape == (2, 16)
    for t, o in zip(*m.ema_pairs()):
        assert t.shape == o.shape
    assert SslModel(ModelConfig()).representation_width == 128


def test_model_without_predictor():
    m = SslModel(ModelConfig(encoder_widths=(8,), projector_hidden=4, projector_out=4, use_predictor=False))
    x = np.zeros((1, 3, 16, 16), np.float32)
    np.testing.assert_array_equal(m.query(x).data, m.embed(x).data)


@pytest.mark.parametrize("momentum", [True, False])
def test_step_finite_loss(data, styler, bank, momentum):
    trainer = Trainer(SslModel(TINY), TrainConfig(batch_size=8, use_momentum_encoder=momentum),
                      AugPolicy(), styler, bank)
    result = trainer.train_step(data[:8], 0)
    assert np.isfinite(result.loss) and result.loss > 0
    assert result.step == 0 and result.lr == 0.0


def test_deterministic_history(data, styler, bank):
    _, a = _run(data, styler, bank)
    _, b = _run(data, styler, bank)
    assert [r.loss for r in a] == [r.loss for r in b]


def test_history_length_and_schedule(data, styler, bank):
    _, hist = _run(data, styler, bank, steps=4, warmup_fraction=0.25)
    assert len(hist) == 4
    assert [r.step for r in hist] == [0, 1, 2, 3]
    assert hist[0].lr == 0.0 and hist[1].lr == pytest.approx(0.5)
    assert hist[0].m == pytest.approx(0.996)


def test_lr_zero_freezes_online_but_ema_moves(data, styler, bank):
    model = SslModel(TINY)
    # offset the target tower so the EMA pull toward the online tower is visible
    for t in model.ema_pairs()[0]:
        t.data = t.data + 1.0
    online_before = [p.data.copy() for p in model.online_parameters()]
    target_before = [t.data.copy() for t in model.ema_pairs()[0]]
    trainer = Trainer(model, TrainConfig(base_lr=0.0, steps=2, batch_size=8), AugPolicy(), styler, bank)
    res = trainer.train_step(data[:8], 1)
    for p, before in zip(model.online_parameters(), online_before):
        np.testing.assert_array_equal(p.data, before)
    for (t, o), before in zip(zip(*model.ema_pairs()), target_before):
        expected = res.m * before + (1 - res.m) * o.data
        np.testing.assert_allclose(t.data, expected, rtol=1e-6, atol=1e-7)
        assert not np.array_equal(t.data, before)


def test_training_changes_parameters(data, styler, bank):
    model, _ = _run(data, styler, bank)
    fresh = SslModel(TINY)
    moved = [not np.array_equal(a.data, b.data)
             for a, b in zip(model.online_parameters(), fresh.online_parameters())]
    assert any(moved)


def test_batches_cover_epoch(data, styler):
    trainer = Trainer(SslModel(TINY), TrainConfig(batch_size=5), AugPolicy().without_sassl())
    it = trainer.batches(16)
    seen = [next(it) for _ in range(3)]
    idx = np.concatenate([b for _, b in seen])
    assert len(set(idx.tolist())) == 15 and all(e == 0 for e, _ in seen)
    assert next(it)[0] == 1


def test_checkpoint_reload_identical_features(data, styler, bank, tmp_path):
    model, _ = _run(data, styler, bank)
    path = tmp_path / "m.ssck"
    save_model(path, model, step=3, config_text="[run]\n")
    loaded, ckpt = load_model(path)
    assert ckpt.step == 3
    assert loaded.config.encoder_widths == TINY.encoder_widths
    np.testing.assert_array_equal(encode_dataset(model, data), encode_dataset(loaded, data))


def test_smoothed():
    np.testing.assert_allclose(smoothed([2, 4, 6, 8], window=2), [2, 3, 5, 7])
    assert smoothed(np.ones(30)).tolist() == [1.0] * 30


def test_config_validation():
    for bad in ({"temperature": 0}, {"momentum_m0": 1.5}, {"steps": 0}, {"warmup_fraction": 1.0}):
        with pytest.raises(ValueError):
            TrainConfig(**bad)
