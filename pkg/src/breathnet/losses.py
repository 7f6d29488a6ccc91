"""Speech-preserving magnitude loss: MAE plus a speech-weighted term."""

from __future__ import annotations

from .errors import InputError
from .tensor import Tensor, add, as_tensor, mean, mul, sub, tabs


def _check(y_true: Tensor, y_pred: Tensor) -> tuple[Tensor, Tensor]:
    y_true, y_pred = as_tensor(y_true), as_tensor(y_pred)
    if y_true.shape != y_pred.shape:
        raise InputError(f"shape mismatch: y_true {y_true.shape}, y_pred {y_pred.shape}")
    return y_true, y_pred


def mae_loss(y_true, y_pred) -> Tensor:
    """Mean absolute error over all entries."""
    y_true, y_pred = _check(y_true, y_pred)
    return mean(tabs(sub(y_true, y_pred)))


def speech_loss(y_true, y_pred) -> Tensor:
    """``2 * mean(|y_true**2 - y_pred * y_true|)``.

    Errors are weighted by the true magnitude, so under-predicting loud
    (speech) bins costs more than leaving residue in quiet ones.
    """
    y_true, y_pred = _check(y_true, y_pred)
    return mul(mean(tabs(sub(mul(y_true, y_true), mul(y_pred, y_true)))), 2.0)


def total_loss(y_true, y_pred) -> Tensor:
    return add(mae_loss(y_true, y_pred), speech_loss(y_true, y_pred))
