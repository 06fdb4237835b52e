import csv
import hashlib
import json
import struct
import subprocess
import sys
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sassl.cli import (
    BenchReport, Checkpoint, CheckpointError, ConfigError, RunConfig, load_checkpoint,
    parse_config, relative_change, save_checkpoint, serialize_config,
)
from sassl.cli import imageio
from sassl.cli.bench import WARMUP_RUNS, measure, run_bench
from sassl.cli.checkpoint import load_styler, save_styler
from sassl.cli.main import main
from sassl.augpipe import AugPolicy
from sassl.nst import StyleTransfer
from sassl.stylebank import StyleBank, load_bank, save_bank

TINY_CONFIG = """\
[run]
seed = 3

[data]
n_train = 16
n_test = 8
image_size = 16

[augment]
output_size = 16

[sassl]
style_images = 4

[train]
steps = 3
batch_size = 8
encoder_widths = 8, 16
projector_hidden = 16
projector_out = 8
"""


def _write_images(folder, n, seed=0, size=16):
    folder.mkdir(parents=True, exist_ok=True)
    gen = np.random.default_rng(seed)
    for i in range(n):
        imageio.write_ppm(folder / f"img_{i}.ppm", gen.uniform(size=(3, size, size)))
    return folder


def _tree_bytes(folder):
    return {p.name: p.read_bytes() for p in sorted(folder.iterdir()) if p.is_file()}


# ------------------------------------------------------------------ config


def test_config_defaults_roundtrip():
    cfg = RunConfig()
    text = serialize_config(cfg)
    assert parse_config(text) == cfg
    assert serialize_config(parse_config(text)) == text
    assert parse_config("") == cfg


@settings(max_examples=40)
@given(seed=st.integers(0, 2**31), lr=st.floats(1e-4, 10.0), p=st.floats(0.0, 1.0),
       a=st.floats(0.0, 1.0), steps=st.integers(1, 10_000), enabled=st.booleans(),
       widths=st.lists(st.integers(1, 256), min_size=1, max_size=5),
       source=st.sampled_from(["external_bank", "in_batch", "content_self", "gaussian_noise"]),
       layers=st.sampled_from(["all", "none", "3, 5, 7"]))
def test_config_roundtrip_property(seed, lr, p, a, steps, enabled, widths, source, layers):
    base = RunConfig()
    cfg = RunConfig(
        run=replace(base.run, seed=seed),
        sassl=replace(base.sassl, p=p, alpha_min=a, alpha_max=1.0, enabled=enabled,
                      style_source=source, styled_layers=layers),
        train=replace(base.train, base_lr=lr, steps=steps, encoder_widths=tuple(widths)),
    )
    text = serialize_config(cfg)
    back = parse_config(text)
    assert back == cfg
    assert serialize_config(back) == text


def test_config_unknown_key_and_section():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("[train]\nlearning_rate = 0.1\n")
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[optimizer]\nlr = 0.1\n")


@pytest.mark.parametrize("text", [
    "[train]\nsteps = many\n", "[sassl]\nenabled = maybe\n", "[sassl]\np = 1.5\n",
    "[train]\ntemperature = 0\n", "[sassl]\nstyled_layers = 3, x\n", "[sassl]\nstyle_source = moon\n",
    "no section header\n",
])
def test_config_rejects_bad_values(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_config_derived_objects():
    cfg = parse_config(TINY_CONFIG)
    assert cfg.train_config().seed == 3 and cfg.model_config().encoder_widths == (8, 16)
    assert cfg.synth_spec().image_size == 16
    assert cfg.policy().sassl is not None
    off = parse_config("[sassl]\nenabled = false\n")
    assert off.policy().sassl is None
    assert parse_config("[sassl]\nstyled_layers = 3,4\n").styled_layers() == (3, 4)


# ------------------------------------------------------------------ checkpoint


def _params(seed=0):
    gen = np.random.default_rng(seed)
    return {"a.weight": gen.normal(size=(3, 4)).astype(np.float32),
            "b": gen.normal(size=5).astype(np.float32),
            "scalar": np.array(2.5, np.float32),
            "ü.unicode": gen.normal(size=(2, 1, 2)).astype(np.float32)}


def test_checkpoint_roundtrip(tmp_path):
    path = tmp_path / "c.ssck"
    params = _params()
    save_checkpoint(path, params, step=42, config_text="[run]\nseed = 1\n")
    ck = load_checkpoint(path)
    assert ck.step == 42 and list(ck.params) == list(params)
    for k, v in params.items():
        assert ck.params[k].shape == v.shape and ck.params[k].tobytes() == v.tobytes()
    assert ck.config_hash == hashlib.sha256(b"[run]\nseed = 1\n").digest()


def test_checkpoint_header(tmp_path):
    path = tmp_path / "c.ssck"
    save_checkpoint(path, _params(), step=7)
    magic, version, step, _, count = struct.unpack("<4sIQ32sI", path.read_bytes()[:52])
    assert (magic, version, step, count) == (b"SSCK", 1, 7, 4)


@pytest.mark.parametrize("corrupt", [
    lambda raw: b"XXXX" + raw[4:],
    lambda raw: raw[:4] + struct.pack("<I", 9) + raw[8:],
    lambda raw: raw[:30],
    lambda raw: raw[:-3],
    lambda raw: raw + b"\0\0",
])
def test_checkpoint_corruption(tmp_path, corrupt):
    path = tmp_path / "c.ssck"
    save_checkpoint(path, _params())
    path.write_bytes(corrupt(path.read_bytes()))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_hash_length():
    with pytest.raises(ValueError):
        Checkpoint({}, 0, b"short")


def test_styler_weights_roundtrip(tmp_path, rng):
    styler = StyleTransfer(seed=5)
    path = tmp_path / "w.ssck"
    save_styler(path, styler)
    back = load_styler(path)
    img = rng.uniform(size=(3, 16, 16)).astype(np.float32)
    z = styler.extract_style(img)
    np.testing.assert_array_equal(back.extract_style(img), z)
    np.testing.assert_array_equal(back.run_stylizer(img, z), styler.run_stylizer(img, z))


# ------------------------------------------------------------------ PPM


def test_ppm_roundtrip(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, size=(3, 5, 7)).astype(np.float32) / 255
    imageio.write_ppm(tmp_path / "x.ppm", img)
    back = imageio.read_ppm(tmp_path / "x.ppm")
    assert back.shape == (3, 5, 7)
    np.testing.assert_array_equal(imageio.to_bytes(back), imageio.to_bytes(img))
    np.testing.assert_allclose(back, img, atol=1e-7)


def test_ppm_comments_and_16bit(tmp_path):
    pix = np.array([[[0, 1000, 65535]]], dtype=">u2")
    (tmp_path / "a.ppm").write_bytes(b"P6\n# a comment\n1 1\n65535\n" + pix.tobytes())
    np.testing.assert_allclose(imageio.read_ppm(tmp_path / "a.ppm")[:, 0, 0],
                               [0, 1000 / 65535, 1], rtol=1e-6)


@pytest.mark.parametrize("raw", [b"P5\n1 1\n255\n\0", b"P6\n2 2\n255\n\0\0", b"P6\n", b"P6\n0 1\n255\n"])
def test_ppm_errors(tmp_path, raw):
    (tmp_path / "bad.ppm").write_bytes(raw)
    with pytest.raises(imageio.ImageFormatError):
        imageio.read_ppm(tmp_path / "bad.ppm")


def test_dataset_folder_roundtrip(tmp_path):
    gen = np.random.default_rng(1)
    imgs = np.rint(gen.uniform(size=(4, 3, 6, 6)) * 255) / 255
    imageio.write_dataset(tmp_path, imgs, [0, 1, 2, 1], ["train", "train", "test", "test"])
    ds = imageio.read_dataset(tmp_path)
    assert ds.labels.tolist() == [0, 1, 2, 1] and ds.split.tolist() == ["train", "train", "test", "test"]
    np.testing.assert_allclose(ds.images, imgs, atol=1e-6)


# ------------------------------------------------------------------ bench


def test_relative_change_formula():
    assert abs(relative_change(37.45, 29.48) - 21.28) < 0.01
    assert relative_change(10.0, 10.0) == 0.0
    with pytest.raises(ValueError):
        relative_change(0.0, 1.0)


def test_bench_report_schema():
    rep = BenchReport.from_rates("sassl", 29.48, 37.45, runs=4, batch_size=8, image_size=32, workers=2)
    d = rep.to_dict()
    assert set(d) == {"label", "images_per_second", "baseline_images_per_second",
                      "relative_change_percent", "runs", "batch_size", "image_size", "workers"}
    assert d["relative_change_percent"] == relative_change(37.45, 29.48)


def test_measure_uses_warmups():
    ticks = iter(range(1000))
    calls = []

    def clock():
        calls.append(1)
        return float(next(ticks))

    batch = np.random.default_rng(0).uniform(size=(2, 3, 16, 16)).astype(np.float32)
    pol = AugPolicy(output_size=16).without_sassl()
    rate = measure(batch, pol, runs=2, clock=clock)
    assert len(calls) == 2 * (WARMUP_RUNS + 2)
    assert rate == 2.0


def test_bench_default_mode_near_zero():
    batch = np.random.default_rng(0).uniform(size=(4, 3, 16, 16)).astype(np.float32)
    rep = run_bench(batch, AugPolicy(output_size=16), "default", runs=3, styler=None, bank=None)
    assert rep.label == "default" and rep.runs == 3 and rep.batch_size == 4 and rep.image_size == 16
    assert abs(rep.relative_change_percent) < 60  # same pipeline twice; timing noise only


# ------------------------------------------------------------------ commands


@pytest.fixture(scope="module")
def style_dir(tmp_path_factory):
    return _write_images(tmp_path_factory.mktemp("styles"), 5, seed=9)


@pytest.fixture(scope="module")
def bank_path(tmp_path_factory, style_dir):
    path = tmp_path_factory.mktemp("bank") / "b.ssbk"
    assert main(["build-bank", "--images", str(style_dir), "--out", str(path)]) == 0
    return path


def test_build_bank_count_and_rerun(bank_path, style_dir, tmp_path):
    assert load_bank(bank_path).count == 5
    again = tmp_path / "again.ssbk"
    assert main(["build-bank", "--images", str(style_dir), "--out", str(again)]) == 0
    assert again.read_bytes() == bank_path.read_bytes()


def test_build_bank_empty_dir(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert main(["build-bank", "--images", str(tmp_path / "empty"), "--out", str(tmp_path / "b.ssbk")]) == 1
    assert "no .ppm images" in capsys.readouterr().err


def test_stylize_beta_zero_identity(tmp_path, bank_path):
    src = _write_images(tmp_path / "in", 3)
    out = tmp_path / "out"
    assert main(["stylize", "--input", str(src), "--style", str(bank_path), "--beta", "0",
                 "--out", str(out)]) == 0
    assert _tree_bytes(out) == _tree_bytes(src)


def test_stylize_deterministic(tmp_path, bank_path, style_dir):
    src = _write_images(tmp_path / "in", 3)
    for style in (bank_path, style_dir):
        outs = []
        for i in range(2):
            out = tmp_path / f"out_{style.name}_{i}"
            assert main(["stylize", "--input", str(src), "--style", str(style), "--seed", "4",
                         "--out", str(out)]) == 0
            outs.append(_tree_bytes(out))
        assert outs[0] == outs[1]
        assert outs[0] != _tree_bytes(src)


def test_stylize_missing_bank(tmp_path, capsys):
    src = _write_images(tmp_path / "in", 1)
    code = main(["stylize", "--input", str(src), "--style", str(tmp_path / "nope.ssbk"),
                 "--out", str(tmp_path / "o")])
    assert code == 2
    assert "style bank not found" in capsys.readouterr().err


def test_stylize_bad_factor(tmp_path, bank_path):
    src = _write_images(tmp_path / "in", 1)
    assert main(["stylize", "--input", str(src), "--style", str(bank_path), "--alpha", "a,b",
                 "--out", str(tmp_path / "o")]) == 2
    assert main(["stylize", "--input", str(src), "--style", str(bank_path), "--alpha", "0.5,0.1",
                 "--out", str(tmp_path / "o")]) == 2


def test_export_embeddings(tmp_path, bank_path):
    bank = StyleBank(np.random.default_rng(0).normal(size=(3, 100)).astype(np.float32))
    save_bank(bank, tmp_path / "b3.ssbk")
    out = tmp_path / "e.csv"
    assert main(["export-embeddings", "--bank", str(tmp_path / "b3.ssbk"), "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == [f"dim_{j}" for j in range(100)]
    assert len(rows) == 4 and all(len(r) == 100 for r in rows[1:])
    parsed = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float32)
    assert parsed.tobytes() == bank.embeddings.tobytes()


def test_export_embeddings_from_images(tmp_path, style_dir, bank_path):
    out = tmp_path / "e.csv"
    assert main(["export-embeddings", "--images", str(style_dir), "--out", str(out)]) == 0
    parsed = np.array([[float(v) for v in r] for r in list(csv.reader(out.open()))[1:]], np.float32)
    # batched extraction vs one image at a time: float32 summation order only
    np.testing.assert_allclose(parsed, load_bank(bank_path).embeddings, atol=1e-5)


@pytest.fixture(scope="module")
def pretrained(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    (root / "cfg.ini").write_text(TINY_CONFIG)
    assert main(["pretrain", "--config", str(root / "cfg.ini"), "--out", str(root / "out")]) == 0
    return root


def test_pretrain_outputs(pretrained):
    out = pretrained / "out"
    assert {p.name for p in out.iterdir()} == {"metrics.csv", "config.ini", "model.ssck", "summary.json"}
    rows = list(csv.reader((out / "metrics.csv").open()))
    assert rows[0] == ["step", "loss", "lr", "m"] and len(rows) == 4
    summary = json.loads((out / "summary.json").read_text())
    assert summary["steps"] == 3 and summary["sassl"] is True
    assert parse_config((out / "config.ini").read_text()) == parse_config(TINY_CONFIG)
    assert load_checkpoint(out / "model.ssck").step == 3


def test_pretrain_deterministic(pretrained):
    again = pretrained / "again"
    assert main(["pretrain", "--config", str(pretrained / "cfg.ini"), "--out", str(again)]) == 0
    assert _tree_bytes(again) == _tree_bytes(pretrained / "out")


def test_probe_and_fewshot(pretrained, capsys):
    ckpt = str(pretrained / "out" / "model.ssck")
    cfg = str(pretrained / "cfg.ini")
    assert main(["probe", "--ckpt", ckpt, "--data", cfg, "--out", str(pretrained / "p.json")]) == 0
    probe = json.loads((pretrained / "p.json").read_text())
    assert 0 <= probe["top1"] <= 1 and probe["n_train"] == 16 and probe["chance"] == 0.25
    capsys.readouterr()
    assert main(["fewshot", "--ckpt", ckpt, "--data", cfg, "--k", "1"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["trials"] == 5 and report["k"] == 1


def test_probe_on_dataset_folder(pretrained, tmp_path):
    assert main(["gen-data", "--config", str(pretrained / "cfg.ini"), "--out", str(tmp_path / "d")]) == 0
    ckpt = str(pretrained / "out" / "model.ssck")
    assert main(["probe", "--ckpt", ckpt, "--data", str(tmp_path / "d"), "--out", str(tmp_path / "a.json")]) == 0
    assert main(["probe", "--ckpt", ckpt, "--data", str(pretrained / "cfg.ini"),
                 "--out", str(tmp_path / "b.json")]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_probe_missing_checkpoint(tmp_path, capsys):
    assert main(["probe", "--ckpt", str(tmp_path / "none.ssck")]) == 2
    assert "checkpoint not found" in capsys.readouterr().err


def test_probe_corrupt_checkpoint(tmp_path):
    (tmp_path / "bad.ssck").write_bytes(b"garbage")
    assert main(["probe", "--ckpt", str(tmp_path / "bad.ssck")]) == 1


def test_invariance_command(pretrained, bank_path, tmp_path):
    ckpt = str(pretrained / "out" / "model.ssck")
    cfg = str(pretrained / "cfg.ini")
    outs = []
    for i in range(2):
        out = tmp_path / f"inv{i}.json"
        assert main(["invariance", "--ckpt", ckpt, "--data", cfg, "--bank", str(bank_path),
                     "--n", "4", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert -1 <= json.loads(outs[0])["texture_invariance"] <= 1


def test_gen_data_deterministic(tmp_path, pretrained):
    cfg = str(pretrained / "cfg.ini")
    for name in ("a", "b"):
        assert main(["gen-data", "--config", cfg, "--seed", "2", "--out", str(tmp_path / name)]) == 0
    assert _tree_bytes(tmp_path / "a") == _tree_bytes(tmp_path / "b")
    assert len(list((tmp_path / "a").glob("*.ppm"))) == 24
    assert main(["gen-data", "--styles", "3", "--out", str(tmp_path / "s")]) == 0
    assert len(list((tmp_path / "s").glob("*.ppm"))) == 3


def test_bench_command(tmp_path, pretrained, capsys):
    cfg = tmp_path / "bench.ini"
    cfg.write_text(TINY_CONFIG + "\n[bench]\nruns = 1\nbatch_size = 4\n")
    assert main(["bench", "--config", str(cfg), "--mode", "sassl", "--out", str(tmp_path / "r.json")]) == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["label"] == "sassl" and rep["runs"] == 1 and rep["batch_size"] == 4 and rep["workers"] == 1
    assert rep["relative_change_percent"] == pytest.approx(
        relative_change(rep["baseline_images_per_second"], rep["images_per_second"]))


def test_bad_config_exit_code(tmp_path, capsys):
    (tmp_path / "c.ini").write_text("[train]\nbogus = 1\n")
    assert main(["pretrain", "--config", str(tmp_path / "c.ini")]) == 2
    assert main(["pretrain", "--config", str(tmp_path / "missing.ini")]) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sassl.cli.main", "probe", "--ckpt", str(tmp_path / "x")],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and "checkpoint not found" in proc.stderr
    proc = subprocess.run([sys.executable, "-m", "sassl.cli.main", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "export-embeddings" in proc.stdout
