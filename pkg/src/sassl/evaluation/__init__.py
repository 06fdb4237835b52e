"""Downstream evaluation of frozen encoders and the synthetic dataset generator."""

from .probe import (
    LinearProbe,
    encode_dataset,
    few_shot_eval,
    few_shot_split,
    linear_probe,
    texture_invariance_score,
)
from .synth import SHAPES, LabeledDataset, SynthSpec, gen_style_images, gen_synth

__all__ = [
    "LinearProbe", "encode_dataset", "few_shot_eval", "few_shot_split", "linear_probe",
    "texture_invariance_score", "SHAPES", "LabeledDataset", "SynthSpec",
    "gen_style_images", "gen_synth",
]
