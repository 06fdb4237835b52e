"""Run configuration as an INI document.

Every key has a default, so an empty file is a valid configuration.
Unknown sections or keys are rejected. ``serialize`` writes every key in a
fixed order, which makes parse -> serialize -> parse a fixed point.

Sections and defaults::

    [run]      seed = 0, out = run
    [data]     classes = 4, n_train = 1000, n_test = 200, image_size = 32,
               hue_jitter = 0.25, noise_scale = 0.08, seed = 0
    [augment]  crop/flip/jitter/grayscale/blur/solarize settings (see AugmentSection)
    [sassl]    enabled = true, p = 0.8, alpha/beta in [0.1, 0.3],
               style_source = external_bank, styled_layers = all,
               bank = (empty: build from generated style images), style_images = 64,
               weights = (empty: seeded initialisation), inbatch_offset = 1
    [train]    TrainConfig and model-shape keys (see TrainSection)
    [bench]    runs = 10, batch_size = 64, workers = 1
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field, fields

from ..augpipe import AugPolicy
from ..evaluation.synth import SynthSpec
from ..nst.augment import SasslParams
from ..nst.networks import STYLED_PRESETS, resolve_styled_layers
from ..ssltrain.model import ModelConfig
from ..ssltrain.train import TrainConfig


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


_AUG = AugPolicy()
_SASSL = SasslParams()
_TRAIN = TrainConfig()
_MODEL = ModelConfig()
_DATA = SynthSpec()


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    out: str = "run"


@dataclass(frozen=True)
class DataSection:
    classes: int = _DATA.classes
    n_train: int = _DATA.n_train
    n_test: int = _DATA.n_test
    image_size: int = _DATA.image_size
    hue_jitter: float = _DATA.hue_jitter
    noise_scale: float = _DATA.noise_scale
    seed: int = _DATA.seed


@dataclass(frozen=True)
class AugmentSection:
    crop_area_min: float = _AUG.crop_area_range[0]
    crop_area_max: float = _AUG.crop_area_range[1]
    crop_aspect_min: float = _AUG.crop_aspect_range[0]
    crop_aspect_max: float = _AUG.crop_aspect_range[1]
    output_size: int = _AUG.output_size
    hflip_p: float = _AUG.hflip_p
    jitter_p: float = _AUG.jitter_p
    brightness: float = _AUG.brightness
    contrast: float = _AUG.contrast
    saturation: float = _AUG.saturation
    hue: float = _AUG.hue
    grayscale_p: float = _AUG.grayscale_p
    blur_p_left: float = _AUG.blur_p["left"]
    blur_p_right: float = _AUG.blur_p["right"]
    blur_sigma_min: float = _AUG.blur_sigma_range[0]
    blur_sigma_max: float = _AUG.blur_sigma_range[1]
    solarize_p_left: float = _AUG.solarize_p["left"]
    solarize_p_right: float = _AUG.solarize_p["right"]
    solarize_threshold: float = _AUG.solarize_threshold


@dataclass(frozen=True)
class SasslSection:
    enabled: bool = True
    p: float = _SASSL.p
    alpha_min: float = _SASSL.alpha_min
    alpha_max: float = _SASSL.alpha_max
    beta_min: float = _SASSL.beta_min
    beta_max: float = _SASSL.beta_max
    style_source: str = _SASSL.style_source
    views: tuple = _AUG.sassl_views
    styled_layers: str = "all"
    bank: str = ""
    style_images: int = 64
    weights: str = ""
    inbatch_offset: int = 1


@dataclass(frozen=True)
class TrainSection:
    steps: int = _TRAIN.steps
    batch_size: int = _TRAIN.batch_size
    base_lr: float = _TRAIN.base_lr
    warmup_fraction: float = _TRAIN.warmup_fraction
    temperature: float = _TRAIN.temperature
    weight_decay: float = _TRAIN.weight_decay
    trust_coefficient: float = _TRAIN.trust_coefficient
    lars_momentum: float = _TRAIN.lars_momentum
    momentum_m0: float = _TRAIN.momentum_m0
    use_momentum_encoder: bool = _TRAIN.use_momentum_encoder
    encoder_widths: tuple = _MODEL.encoder_widths
    projector_hidden: int = _MODEL.projector_hidden
    projector_out: int = _MODEL.projector_out
    use_predictor: bool = _MODEL.use_predictor


@dataclass(frozen=True)
class BenchSection:
    runs: int = 10
    batch_size: int = 64
    workers: int = 1


SECTIONS = {
    "run": RunSection,
    "data": DataSection,
    "augment": AugmentSection,
    "sassl": SasslSection,
    "train": TrainSection,
    "bench": BenchSection,
}


@dataclass(frozen=True)
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    data: DataSection = field(default_factory=DataSection)
    augment: AugmentSection = field(default_factory=AugmentSection)
    sassl: SasslSection = field(default_factory=SasslSection)
    train: TrainSection = field(default_factory=TrainSection)
    bench: BenchSection = field(default_factory=BenchSection)

    def __post_init__(self):
        # building every derived object surfaces range errors at load time
        try:
            self.policy()
            self.train_config()
            self.synth_spec()
            resolve_styled_layers(self.styled_layers())
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def seed(self) -> int:
        return self.run.seed

    def sassl_params(self) -> SasslParams:
        s = self.sassl
        return SasslParams(s.p, s.alpha_min, s.alpha_max, s.beta_min, s.beta_max, s.style_source)

    def policy(self) -> AugPolicy:
        a = self.augment
        pol = AugPolicy(
            crop_area_range=(a.crop_area_min, a.crop_area_max),
            crop_aspect_range=(a.crop_aspect_min, a.crop_aspect_max),
            output_size=a.output_size, hflip_p=a.hflip_p, jitter_p=a.jitter_p,
            brightness=a.brightness, contrast=a.contrast, saturation=a.saturation, hue=a.hue,
            grayscale_p=a.grayscale_p,
            blur_p={"left": a.blur_p_left, "right": a.blur_p_right},
            blur_sigma_range=(a.blur_sigma_min, a.blur_sigma_max),
            solarize_p={"left": a.solarize_p_left, "right": a.solarize_p_right},
            solarize_threshold=a.solarize_threshold,
            sassl=self.sassl_params(), sassl_views=tuple(self.sassl.views))
        return pol if self.sassl.enabled else pol.without_sassl()

    def styled_layers(self):
        """A preset name, or the explicit layer ids of a comma-separated list."""
        text = self.sassl.styled_layers.strip()
        if text in STYLED_PRESETS:
            return text
        try:
            return tuple(int(t) for t in text.split(",") if t.strip())
        except ValueError:
            raise ValueError(f"styled_layers must be a preset or layer ids, got {text!r}") from None

    def train_config(self) -> TrainConfig:
        t = self.train
        return TrainConfig(
            temperature=t.temperature, base_lr=t.base_lr, warmup_fraction=t.warmup_fraction,
            steps=t.steps, weight_decay=t.weight_decay, trust_coefficient=t.trust_coefficient,
            lars_momentum=t.lars_momentum, momentum_m0=t.momentum_m0, batch_size=t.batch_size,
            use_momentum_encoder=t.use_momentum_encoder, seed=self.run.seed)

    def model_config(self) -> ModelConfig:
        t = self.train
        return ModelConfig(tuple(t.encoder_widths), t.projector_hidden, t.projector_out,
                           t.use_predictor, seed=self.run.seed)

    def synth_spec(self) -> SynthSpec:
        return SynthSpec(**dataclasses.asdict(self.data))


# ------------------------------------------------------------------ parsing


def _parse_value(text: str, default, where: str):
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            items = [t.strip() for t in text.split(",") if t.strip()]
            if default and isinstance(default[0], int):
                return tuple(int(t) for t in items)
            return tuple(items)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {text!r} as {type(default).__name__}") from None
    return text


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    return str(value)


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    sections = {}
    for name in parser.sections():
        if name not in SECTIONS:
            raise ConfigError(f"unknown section [{name}]; expected one of {sorted(SECTIONS)}")
        cls = SECTIONS[name]
        known = {f.name: f for f in fields(cls)}
        defaults = cls()
        values = {}
        for key, raw in parser.items(name):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{name}]")
            values[key] = _parse_value(raw, getattr(defaults, key), f"[{name}] {key}")
        sections[name] = cls(**values)
    return RunConfig(**sections)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def serialize_config(config: RunConfig) -> str:
    out = io.StringIO()
    for name in SECTIONS:
        section = getattr(config, name)
        out.write(f"[{name}]\n")
        for f in fields(section):
            value = _format_value(getattr(section, f.name))
            out.write(f"{f.name} = {value}\n" if value else f"{f.name} =\n")
        out.write("\n")
    return out.getvalue()
