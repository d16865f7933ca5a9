"""Mini-batch training loop."""
from dataclasses import dataclass, asdict

import numpy as np

from .models import loss_and_grad
from .optim import AdamState, adam_step


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 5
    local_epochs: int = 1
    dropout_enabled: bool = True
    head: str = "direct"  # or "pairwise"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.local_epochs < 1:
            raise ValueError("local_epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.head not in ("direct", "pairwise"):
            raise ValueError(f"unknown head {self.head!r}")

    def to_dict(self):
        return asdict(self)


def batches(n, batch_size, rng):
    """Seeded shuffle, then consecutive slices; the last may be short."""
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


class Trainer:
    """Owns a model, its Adam state and its random stream.

    The state persists across calls, so ten one-epoch calls equal one
    ten-epoch call.
    """

    def __init__(self, model, config, rng):
        self.model = model
        self.config = config
        self.rng = rng
        self.adam = AdamState.zeros_like(model.weights)
        self.steps = 0

    def step(self, loss_grad):
        loss, grads = loss_grad
        new, self.adam = adam_step(self.model.weights, grads, self.adam, self.config.learning_rate)
        self.model.set_weights(new)
        self.steps += 1
        return loss

    def epoch(self, X, y):
        if len(y) == 0:
            raise ValueError("empty training set")
        if hasattr(self.model, "pair_epoch"):
            return self.model.pair_epoch(self, X, y)
        total = 0.0
        for idx in batches(len(y), self.config.batch_size, self.rng):
            loss = self.step(loss_and_grad(self.model, X[idx], y[idx], self.config.dropout_enabled, self.rng))
            total += loss * len(idx)
        return total / len(y)

    def fit(self, X, y, epochs=None):
        epochs = self.config.local_epochs if epochs is None else epochs
        return [self.epoch(X, y) for _ in range(epochs)]


def train_epochs(model, data, config, epochs=None, rng=None):
    """Train ``model`` in place; returns ``(model, per-epoch mean losses)``."""
    X, y = data
    rng = rng if rng is not None else np.random.default_rng(0)
    trainer = Trainer(model, config, rng)
    history = trainer.fit(np.asarray(X, dtype=float), np.asarray(y, dtype=float), epochs)
    return model, history
