"""Small numpy network engine with explicit backward passes."""

from .checkpoint import read_checkpoint, write_checkpoint
from .layers import (
    Context,
    Dense,
    Dropout,
    GraphConv,
    Sequential,
    VertexResample,
    backward_dense,
    dropout,
    forward_dense,
    reparameterize,
)
from .losses import kl_gaussian, mse, projection_loss, vae_loss
from .optim import adam_step
from .params import ParamStore
from .training import TrainConfig, TrainState, learning_rate_at, train_loop

__all__ = [
    "Context",
    "Dense",
    "Dropout",
    "GraphConv",
    "ParamStore",
    "Sequential",
    "TrainConfig",
    "TrainState",
    "VertexResample",
    "adam_step",
    "backward_dense",
    "dropout",
    "forward_dense",
    "kl_gaussian",
    "learning_rate_at",
    "mse",
    "projection_loss",
    "read_checkpoint",
    "reparameterize",
    "train_loop",
    "vae_loss",
    "write_checkpoint",
]
