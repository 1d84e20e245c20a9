"""Mini-batch training with Adam."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .model import Model, ModelSpec, NumericError
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


class TrainingDiverged(NumericError):
    def __init__(self, epoch, batch, reason):
        super().__init__(f"training diverged at epoch {epoch}, batch {batch}: {reason}")
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 10
    seed: int = 0
    patience: Optional[int] = None
    dtype: str = "float32"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate < 0 or self.eps <= 0:
            raise ValueError("learning rate must be >= 0 and eps > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be >= 1")
        np.dtype(self.dtype)

    def to_dict(self):
        return asdict(self)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: Optional[float] = None
    val_accuracy: Optional[float] = None


@dataclass
class TrainResult:
    model: Model
    history: List[EpochMetrics] = field(default_factory=list)


def evaluate(model: Model, x, y, batch_size=256):
    """Mean loss and accuracy in eval mode."""
    y = np.asarray(y).astype(int)
    total = 0.0
    correct = 0
    for s in range(0, len(x), batch_size):
        z = model.logits(x[s:s + batch_size])
        yy = y[s:s + batch_size]
        zmax = z.max(axis=1, keepdims=True)
        lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
        total += float(np.sum(lse - z[np.arange(len(yy)), yy]))
        correct += int(np.sum(np.argmax(z, axis=1) == yy))
    return total / len(x), correct / len(x)


def _batches(order, batch_size):
    chunks = [order[s:s + batch_size] for s in range(0, len(order), batch_size)]
    # batch norm cannot train on a single example
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2] = np.concatenate([chunks[-2], chunks.pop()])
    return chunks


def train(spec: ModelSpec, x, y, config: TrainConfig = TrainConfig(),
          x_val=None, y_val=None, model: Optional[Model] = None) -> TrainResult:
    """Train a fresh model (He-uniform init from ``config.seed``).

    With ``patience`` and a validation set, training stops once validation
    loss has not improved for ``patience`` epochs and the best parameters are
    restored.
    """
    dtype = np.dtype(config.dtype)
    x = np.asarray(x, dtype=dtype)
    y = np.asarray(y).astype(int)
    if len(x) == 0:
        raise ValueError("empty training set")
    if len(x) < 2:
        raise ValueError("batch norm needs at least 2 training examples")
    rng = np.random.default_rng(config.seed)
    if model is None:
        model = Model(spec, rng=rng, dtype=dtype)
    params = model.parameters()
    state = AdamState.zeros_like(params)
    has_val = x_val is not None and len(x_val) > 0
    if has_val:
        x_val = np.asarray(x_val, dtype=dtype)
    history = []
    best = (np.inf, None)
    stale = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(x))
        loss_sum = 0.0
        correct = 0
        for b, idx in enumerate(_batches(order, config.batch_size)):
            try:
                loss, grads = model.loss_and_grad(x[idx], y[idx], train=True)
                loss_sum += loss * len(idx)
                correct += int(np.sum(np.argmax(model.last_logits, axis=1) == y[idx]))
                adam_step(params, grads, state, config.learning_rate,
                          config.beta1, config.beta2, config.eps)
            except NumericError as exc:
                raise TrainingDiverged(epoch, b, exc) from None
            if not all(np.all(np.isfinite(p)) for p in params):
                raise TrainingDiverged(epoch, b, "non-finite parameters")
        # running averages over the epoch's mini-batches (train mode)
        m = EpochMetrics(epoch, loss_sum / len(x), correct / len(x))
        if has_val:
            m.val_loss, m.val_accuracy = evaluate(model, x_val, y_val)
        history.append(m)
        log.info("epoch %d: %s", epoch, m)
        if has_val and config.patience is not None:
            if m.val_loss < best[0]:
                best = (m.val_loss, [p.copy() for p in params], _copy_state(model))
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    model.set_parameters(best[1])
                    _restore_state(model, best[2])
                    break
    return TrainResult(model, history)


def _copy_state(model):
    return [{k: v.copy() for k, v in layer.state.items()} for layer in model.layers]


def _restore_state(model, saved):
    for layer, st in zip(model.layers, saved):
        layer.state.update(st)
