"""Adam updates and validation-loss early stopping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, UsageError


@dataclass
class AdamState:
    """First and second moment estimates, one slot per parameter name."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              learning_rate: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              epsilon: float = 1e-8, step_index: int = 1) -> dict[str, np.ndarray]:
    """One bias-corrected Adam update. Updates ``state`` in place and returns new parameters."""
    if step_index < 1:
        raise UsageError(f"step_index starts at 1, got {step_index}")
    if set(params) != set(state.m) or set(params) != set(grads):
        raise UsageError("parameters, gradients and optimizer state must share the same names")
    c1 = 1.0 - beta1**step_index
    c2 = 1.0 - beta2**step_index
    out = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape or state.m[name].shape != p.shape:
            raise UsageError(f"{name}: shape mismatch between parameter, gradient and state")
        m = state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        v = state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        update = learning_rate * (m / c1) / (np.sqrt(v / c2) + epsilon)
        out[name] = (p - update).astype(p.dtype, copy=False)
    return out


@dataclass
class EarlyStopping:
    """Stop once the validation loss fails to improve by more than ``min_delta``
    for ``patience`` consecutive epochs."""

    patience: int = 10
    min_delta: float = 1e-4
    best_loss: float = float("inf")
    best_epoch: int = 0
    wait: int = 0
    epoch: int = 0

    def __post_init__(self):
        if self.patience < 1:
            raise ConfigurationError(f"patience must be >= 1, got {self.patience}")

    def update(self, val_loss: float) -> bool:
        """Record one epoch. Returns True when training should stop."""
        self.epoch += 1
        if self.best_epoch == 0 or self.best_loss - val_loss > self.min_delta:
            self.best_loss = val_loss
            self.best_epoch = self.epoch
            self.wait = 0
            return False
        self.wait += 1
        return self.wait >= self.patience

    @property
    def improved(self) -> bool:
        return self.best_epoch == self.epoch


def early_stopping_update(history: list[float], new_val_loss: float, patience: int,
                          min_delta: float) -> tuple[bool, int]:
    """Functional form: replay ``history`` plus the new loss.

    Returns ``(stop, best_epoch)`` with 1-based epochs.
    """
    tracker = EarlyStopping(patience, min_delta)
    stop = False
    for loss in [*history, new_val_loss]:
        stop = tracker.update(loss)
    return stop, tracker.best_epoch
