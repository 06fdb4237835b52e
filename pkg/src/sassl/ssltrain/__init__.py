"""Contrastive pretraining: towers, losses, LARS and schedules."""

from .losses import cosine_similarity, nt_xent, nt_xent_momentum
from .model import MLP, Encoder, ModelConfig, SslModel
from .optim import LARS, cosine_lr, ema_update, lars_step, momentum_schedule, scaled_update
from .train import StepResult, TrainConfig, Trainer, TrainingDiverged, pretrain, smoothed

__all__ = [
    "cosine_similarity", "nt_xent", "nt_xent_momentum", "MLP", "Encoder", "ModelConfig",
    "SslModel", "LARS", "cosine_lr", "ema_update", "lars_step", "momentum_schedule",
    "scaled_update", "StepResult", "TrainConfig", "Trainer", "TrainingDiverged",
    "pretrain", "smoothed",
]
