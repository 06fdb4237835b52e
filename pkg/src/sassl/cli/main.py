"""``sassl`` command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..evaluation import (encode_dataset, few_shot_eval, gen_style_images, gen_synth, linear_probe,
                          texture_invariance_score)
from ..evaluation.synth import LabeledDataset
from ..nst import StyleTransfer
from ..nst.augment import SasslParams
from ..nst.networks import StyleExtractor, StylizationNetwork
from ..rng import RngStream
from ..ssltrain import SslModel, pretrain, smoothed
from ..stylebank import BankError, StyleBank, build_bank, load_bank, resolve_styles, save_bank
from . import imageio
from .bench import run_bench
from .checkpoint import CheckpointError, load_model, load_styler, save_model
from .config import ConfigError, RunConfig, load_config, serialize_config

log = logging.getLogger("sassl")

BANK_SOURCES = ("external_bank", "gaussian_noise")


class UsageError(Exception):
    """Bad arguments or missing inputs; exit code 2."""


# ------------------------------------------------------------------ helpers


def _config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    if not Path(path).is_file():
        raise UsageError(f"config file not found: {path}")
    return load_config(path)


def _styler(weights: str | None, seed: int, styled_layers="all") -> StyleTransfer:
    if weights:
        if not Path(weights).is_file():
            raise UsageError(f"weights file not found: {weights}")
        return load_styler(weights)
    extractor = StyleExtractor(seed=seed)
    return StyleTransfer(extractor, StylizationNetwork(styled_layers=styled_layers, seed=seed))


def _load_bank(path) -> StyleBank:
    if not Path(path).is_file():
        raise UsageError(f"style bank not found: {path}")
    return load_bank(path)


def _config_bank(cfg: RunConfig, styler: StyleTransfer) -> StyleBank | None:
    """The configured bank, or one built from generated style images."""
    if not cfg.sassl.enabled or cfg.sassl.style_source not in BANK_SOURCES:
        return None
    if cfg.sassl.bank:
        return _load_bank(cfg.sassl.bank)
    styles = gen_style_images(cfg.sassl.style_images, cfg.data.image_size, seed=cfg.seed)
    return build_bank(styles, styler, source_tag="generated")


def _dataset(data) -> LabeledDataset:
    """A dataset folder (``labels.csv`` + PPMs), a config file, or the default synthetic set."""
    if data is None:
        return gen_synth(RunConfig().synth_spec())
    path = Path(data)
    if path.is_dir():
        return imageio.read_dataset(path)
    if path.is_file():
        return gen_synth(load_config(path).synth_spec())
    raise UsageError(f"data not found: {data}")


def _model(ckpt):
    if not Path(ckpt).is_file():
        raise UsageError(f"checkpoint not found: {ckpt}")
    model, _ = load_model(ckpt)
    return model


def _factor_range(text: str, name: str) -> tuple[float, float]:
    try:
        parts = [float(t) for t in text.split(",")]
    except ValueError:
        raise UsageError(f"--{name} expects a number or 'min,max', got {text!r}") from None
    if len(parts) == 1:
        parts *= 2
    if len(parts) != 2:
        raise UsageError(f"--{name} expects a number or 'min,max', got {text!r}")
    return parts[0], parts[1]


def _write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def _emit(payload: dict, out) -> None:
    text = json.dumps(payload, indent=2)
    print(text)
    if out:
        Path(out).write_text(text + "\n")


# ----------------------------------------------------------------- commands


def cmd_gen_data(args) -> int:
    cfg = _config(args.config)
    out = Path(args.out)
    if args.styles:
        out.mkdir(parents=True, exist_ok=True)
        for i, img in enumerate(gen_style_images(args.styles, cfg.data.image_size, seed=args.seed or 0)):
            imageio.write_ppm(out / f"style_{i:05d}.ppm", img)
        return 0
    spec = cfg.synth_spec()
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    ds = gen_synth(spec)
    imageio.write_dataset(out, ds.images, ds.labels, ds.split)
    return 0


def cmd_stylize(args) -> int:
    style_path = Path(args.style)
    if not style_path.exists():
        raise UsageError(f"style bank not found: {args.style}")
    names, images = imageio.read_folder(args.input)
    styler = _styler(args.weights, args.seed)
    if style_path.is_dir():
        _, style_images = imageio.read_folder(style_path)
        bank = build_bank(style_images, styler, source_tag=str(style_path))
    else:
        bank = load_bank(style_path)
    a_lo, a_hi = _factor_range(args.alpha, "alpha")
    b_lo, b_hi = _factor_range(args.beta, "beta")
    try:
        params = SasslParams(args.p, a_lo, a_hi, b_lo, b_hi, args.source)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rng = RngStream(args.seed).child("stylize")
    styles = resolve_styles(params, images, rng.child("styles"), bank)
    result = styler.style_augment_batch(images, styles, params, rng)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, img in zip(names, result):
        imageio.write_ppm(out / name, img)
    log.info("stylized %d images into %s", len(names), out)
    return 0


def cmd_build_bank(args) -> int:
    names, images = imageio.read_folder(args.images)
    styler = _styler(args.weights, args.seed)
    save_bank(build_bank(images, styler, source_tag=str(args.images)), args.out)
    log.info("wrote %d style codes to %s", len(names), args.out)
    return 0


def cmd_pretrain(args) -> int:
    cfg = _config(args.config)
    out = Path(args.out or cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    data = gen_synth(cfg.synth_spec())
    policy = cfg.policy()
    styler = _styler(cfg.sassl.weights, cfg.seed, cfg.styled_layers()) if policy.sassl else None
    bank = _config_bank(cfg, styler) if styler else None
    train_cfg = cfg.train_config()
    model = SslModel(cfg.model_config())
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "loss", "lr", "m"])

        def on_step(r):
            writer.writerow([r.step, repr(r.loss), repr(r.lr), repr(r.m)])

        model, history = pretrain(data.train.images, model, train_cfg, policy, styler, bank,
                                  cfg.sassl.inbatch_offset, on_step)
    config_text = serialize_config(cfg)
    (out / "config.ini").write_text(config_text)
    save_model(out / "model.ssck", model, train_cfg.steps, config_text)
    losses = [r.loss for r in history]
    sm = smoothed(losses)
    ref = sm[min(9, len(sm) - 1)]
    summary = {
        "steps": train_cfg.steps,
        "sassl": policy.sassl is not None,
        "final_loss": losses[-1],
        "smoothed_loss_step10": float(ref),
        "smoothed_loss_final": float(sm[-1]),
        "smoothed_drop_percent": float((ref - sm[-1]) / ref * 100),
        "checkpoint": "model.ssck",
    }
    _write_json(out / "summary.json", summary)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_probe(args) -> int:
    model = _model(args.ckpt)
    ds = _dataset(args.data)
    train, test = ds.train, ds.test
    if len(train.labels) == 0 or len(test.labels) == 0:
        raise UsageError("probe needs both train and test examples")
    f_train = encode_dataset(model, train.images)
    f_test = encode_dataset(model, test.images)
    acc = linear_probe(f_train, train.labels, f_test, test.labels, args.epochs, args.lr)
    _emit({"top1": acc, "n_train": int(len(train.labels)), "n_test": int(len(test.labels)),
           "chance": 1.0 / ds.num_classes}, args.out)
    return 0


def cmd_fewshot(args) -> int:
    model = _model(args.ckpt)
    ds = _dataset(args.data)
    features = encode_dataset(model, ds.images)
    acc = few_shot_eval(features, ds.labels, args.k, args.trials, RngStream(args.seed))
    _emit({"k": args.k, "trials": args.trials, "mean_top1": acc}, args.out)
    return 0


def cmd_invariance(args) -> int:
    model = _model(args.ckpt)
    ds = _dataset(args.data)
    styler = _styler(args.weights, args.seed)
    bank = _load_bank(args.bank) if args.bank else build_bank(
        gen_style_images(64, ds.images.shape[-1], seed=args.seed), styler, source_tag="generated")
    score = texture_invariance_score(model, ds.test.images, styler, bank, n=args.n, seed=args.seed)
    _emit({"texture_invariance": score, "n": min(args.n, len(ds.test.labels))}, args.out)
    return 0


def cmd_bench(args) -> int:
    cfg = _config(args.config)
    runs = args.runs if args.runs is not None else cfg.bench.runs
    workers = args.workers if args.workers is not None else cfg.bench.workers
    spec = replace(cfg.synth_spec(), n_train=max(cfg.bench.batch_size, cfg.data.classes), n_test=0)
    batch = gen_synth(spec).images[:cfg.bench.batch_size]
    policy = cfg.policy()
    if args.mode == "sassl" and policy.sassl is None:
        policy = replace(policy, sassl=cfg.sassl_params(), sassl_views=("left",))
    styler = _styler(cfg.sassl.weights, cfg.seed, cfg.styled_layers()) if args.mode == "sassl" else None
    bank = _config_bank(replace(cfg, sassl=replace(cfg.sassl, enabled=True)), styler) if styler else None
    report = run_bench(batch, policy, args.mode, runs, styler, bank, workers, cfg.seed)
    _emit(report.to_dict(), args.out)
    return 0


def cmd_export_embeddings(args) -> int:
    if args.bank:
        emb = _load_bank(args.bank).embeddings
    else:
        _, images = imageio.read_folder(args.images)
        emb = _styler(args.weights, args.seed).extract_style(images)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"dim_{j}" for j in range(emb.shape[1])])
        for row in np.asarray(emb, dtype=np.float64):
            writer.writerow(["%.17g" % v for v in row])
    return 0


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sassl", description="Style-augmented self-supervised learning lab.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write the synthetic dataset (or style images) as PPM files")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--styles", type=int, default=0, help="write N style images instead")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("stylize", help="style-augment a folder of images")
    p.add_argument("--input", required=True)
    p.add_argument("--style", required=True, help="a .ssbk bank or a folder of style images")
    p.add_argument("--alpha", default="0.1,0.3", help="value or 'min,max'")
    p.add_argument("--beta", default="0.1,0.3", help="value or 'min,max'")
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--source", default="external_bank",
                   choices=("external_bank", "in_batch", "content_self", "gaussian_noise"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weights")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stylize)

    p = sub.add_parser("build-bank", help="precompute style codes of a folder of images")
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--weights")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_build_bank)

    p = sub.add_parser("pretrain", help="contrastive pretraining from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("probe", help="linear probe on frozen encoder features")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", help="dataset folder or config file")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("fewshot", help="k-shot linear probing averaged over trials")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fewshot)

    p = sub.add_parser("invariance", help="texture-invariance score of a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data")
    p.add_argument("--bank")
    p.add_argument("--weights")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_invariance)

    p = sub.add_parser("bench", help="augmentation throughput against the SASSL-free pipeline")
    p.add_argument("--config")
    p.add_argument("--runs", type=int)
    p.add_argument("--mode", choices=("default", "sassl"), default="sassl")
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export-embeddings", help="style codes as CSV")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--bank")
    src.add_argument("--images")
    p.add_argument("--weights")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_embeddings)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        print(f"sassl {args.command}: {exc}", file=sys.stderr)
        return 2
    except (BankError, CheckpointError, imageio.ImageFormatError, ValueError, RuntimeError, OSError) as exc:
        print(f"sassl {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
