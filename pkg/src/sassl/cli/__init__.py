"""Command line, run configuration, checkpoints and the throughput benchmark."""

from .bench import BenchReport, relative_change, run_bench
from .checkpoint import (Checkpoint, CheckpointError, load_checkpoint, load_model, load_styler,
                         save_checkpoint, save_model, save_styler)
from .config import ConfigError, RunConfig, load_config, parse_config, serialize_config

__all__ = [
    "BenchReport", "relative_change", "run_bench",
    "Checkpoint", "CheckpointError", "load_checkpoint", "load_model", "load_styler",
    "save_checkpoint", "save_model", "save_styler",
    "ConfigError", "RunConfig", "load_config", "parse_config", "serialize_config",
]
