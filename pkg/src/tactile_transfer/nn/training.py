"""Mini-batch training loop with per-epoch learning-rate decay and early stopping."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import DivergedLossError, EmptyDatasetError
from .layers import Context
from .optim import adam_step

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    lr_decay_per_epoch: float = 1.0
    beta_kl: float = 0.005
    batch_size: int = 32
    max_epochs: int = 300
    early_stop_patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.lr_decay_per_epoch <= 1:
            raise ValueError("lr_decay_per_epoch must lie in (0, 1]")
        if self.batch_size < 1 or self.max_epochs < 1 or self.early_stop_patience < 0:
            raise ValueError("batch_size, max_epochs must be >= 1 and patience >= 0")


def learning_rate_at(config, epoch):
    """Learning rate used during ``epoch`` (1-based)."""
    return config.learning_rate * config.lr_decay_per_epoch ** (epoch - 1)


@dataclass
class TrainState:
    """Everything needed to continue a run: counters, best snapshot, history."""

    epoch: int = 0
    best_val: float = math.inf
    best_epoch: int = 0
    bad_epochs: int = 0
    best_params: dict = field(default_factory=dict)
    last_params: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    stopped_early: bool = False


def _n_samples(data):
    n = len(data[0])
    if any(len(d) != n for d in data):
        raise ValueError("all arrays in a dataset tuple must share their first dimension")
    return n


def train_loop(model, train_data, config, val_data, state=None, on_epoch=None):
    """Train ``model`` in place and leave the best-validation parameters loaded.

    ``model`` provides ``params`` (a ParamStore), ``batch_loss(batch, ctx)``
    which fills gradients and returns the loss, and ``eval_loss(data)``.
    Datasets are tuples of arrays indexed along axis 0. Passing a previous
    :class:`TrainState` (with the optimizer moments still on the store)
    resumes the epoch count.
    """
    train_data = tuple(train_data)
    val_data = tuple(val_data)
    n = _n_samples(train_data)
    if n == 0 or _n_samples(val_data) == 0:
        raise EmptyDatasetError("training and validation splits must be non-empty")
    state = state or TrainState()
    params = model.params
    if state.last_params:
        params.load_state(state.last_params)
    if state.stopped_early:
        params.load_state(state.best_params)
        return state

    for epoch in range(state.epoch + 1, config.max_epochs + 1):
        lr = learning_rate_at(config, epoch)
        rng = np.random.default_rng([config.seed, epoch])
        order = rng.permutation(n)
        ctx = Context(training=True, rng=rng)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = np.sort(order[start:start + config.batch_size])
            batch = tuple(d[idx] for d in train_data)
            params.zero_grad()
            loss = model.batch_loss(batch, ctx)
            if not math.isfinite(loss):
                raise DivergedLossError(f"non-finite training loss at epoch {epoch}")
            adam_step(params, lr)
            total += loss * len(idx)
        train_loss = total / n
        val_loss = float(model.eval_loss(val_data))
        if not math.isfinite(val_loss):
            raise DivergedLossError(f"non-finite validation loss at epoch {epoch}")
        state.history.append(
            {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss, "lr": lr}
        )
        state.epoch = epoch
        if val_loss < state.best_val:
            state.best_val = val_loss
            state.best_epoch = epoch
            state.bad_epochs = 0
            state.best_params = params.state()
        else:
            state.bad_epochs += 1
        log.info("epoch %d train %.6g val %.6g lr %.3g", epoch, train_loss, val_loss, lr)
        if on_epoch is not None:
            on_epoch(state)
        if state.bad_epochs > config.early_stop_patience:
            state.stopped_early = True
            break

    state.last_params = params.state()
    params.load_state(state.best_params)
    return state


def write_history(path, history):
    lines = ["epoch,train_loss,val_loss,lr"]
    lines += [f"{h['epoch']},{h['train_loss']!r},{h['val_loss']!r},{h['lr']!r}" for h in history]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_history(path):
    rows = []
    with open(path) as fh:
        next(fh)
        for line in fh:
            if line.strip():
                e, tr, va, lr = line.strip().split(",")
                rows.append({"epoch": int(e), "train_loss": float(tr), "val_loss": float(va), "lr": float(lr)})
    return rows
