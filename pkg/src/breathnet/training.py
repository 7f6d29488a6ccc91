"""Patch-based training loop: Adam on the speech-preserving loss with early stopping."""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .data import AudioPair
from .dsp import SpectrogramConfig, split, stft
from .errors import ConfigurationError, DivergenceError, InputError
from .losses import total_loss
from .model import ModelParams, UNetConfig, init_params, unet_forward
from .optim import AdamState, EarlyStopping, adam_step
from .tensor import Tensor, backward, log1p, mul

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 4
    max_epochs: int = 60
    patience: int = 10
    min_delta: float = 1e-4
    seed: int = 0
    loss_domain: str = "linear"
    # random crops per epoch, weighted by mean log magnitude; 0 uses the fixed grid
    patches_per_epoch: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigurationError("beta1 and beta2 must lie in [0, 1)")
        if self.patches_per_epoch < 0:
            raise ConfigurationError("patches_per_epoch must be >= 0")
        if self.patience < 1 or self.max_epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("patience, max_epochs and batch_size must be >= 1")
        if self.loss_domain not in ("linear", "log"):
            raise ConfigurationError(f"loss_domain must be 'linear' or 'log', got {self.loss_domain!r}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    seconds: float

    def log_line(self) -> str:
        return (f"epoch={self.epoch} train_loss={self.train_loss:.6g} "
                f"val_loss={self.val_loss:.6g} seconds={self.seconds:.3f}")


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0

    @property
    def val_losses(self) -> list[float]:
        return [r.val_loss for r in self.records]

    def write_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["epoch", "train_loss", "val_loss", "seconds"])
            for r in self.records:
                writer.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), f"{r.seconds:.6f}"])


def read_history_csv(path: str | os.PathLike) -> list[EpochRecord]:
    with open(path, newline="", encoding="utf-8") as f:
        return [EpochRecord(int(r["epoch"]), float(r["train_loss"]), float(r["val_loss"]),
                            float(r["seconds"])) for r in csv.DictReader(f)]


@dataclass
class PatchSet:
    """Aligned training patches: network input, input magnitude, target magnitude.

    Arrays are float32 with shape [P, frames, bins, 1].
    """

    inputs: np.ndarray
    mags: np.ndarray
    targets: np.ndarray

    def __len__(self):
        return len(self.inputs)

    def batch(self, idx) -> "PatchSet":
        return PatchSet(self.inputs[idx], self.mags[idx], self.targets[idx])

    @property
    def weights(self) -> np.ndarray:
        """Sampling weight per patch: its mean network input."""
        return self.inputs.reshape(len(self), -1).mean(axis=1).astype(np.float64)


def model_magnitude(clip, stft_config: SpectrogramConfig):
    """Magnitude and phase of ``clip`` with the Nyquist column dropped for the model."""
    mag, phase = split(stft(clip, stft_config))
    return mag, phase, mag.data[:, : stft_config.frame_length // 2]


def _starts(total: int, size: int) -> list[int]:
    if total <= size:
        return [0]
    starts = list(range(0, total - size + 1, max(size // 2, 1)))
    if starts[-1] != total - size:
        starts.append(total - size)
    return starts


def _pad_to(a: np.ndarray, frames: int, bins: int) -> np.ndarray:
    return np.pad(a, ((0, max(frames - a.shape[0], 0)), (0, max(bins - a.shape[1], 0))))


@dataclass
class SpectrogramBank:
    """Model-domain input and target magnitudes of every pair, padded to one patch."""

    mags: list[np.ndarray]
    targets: list[np.ndarray]
    patch: tuple[int, int]

    @classmethod
    def from_pairs(cls, pairs: list[AudioPair], unet_config: UNetConfig,
                   stft_config: SpectrogramConfig = SpectrogramConfig()) -> "SpectrogramBank":
        if not pairs:
            raise InputError("no pairs to extract patches from")
        pf, pb = unet_config.input_frames, unet_config.input_bins
        mags, targets = [], []
        for pair in pairs:
            _, _, mi = model_magnitude(pair.input, stft_config)
            _, _, mt = model_magnitude(pair.target, stft_config)
            n = min(len(mi), len(mt))
            mags.append(_pad_to(mi[:n], pf, pb).astype(np.float32))
            targets.append(_pad_to(mt[:n], pf, pb).astype(np.float32))
        return cls(mags, targets, (pf, pb))

    def crop(self, corners) -> PatchSet:
        """Patches at ``(pair, frame, bin)`` corners."""
        pf, pb = self.patch
        mags = np.stack([self.mags[p][f:f + pf, b:b + pb] for p, f, b in corners])[..., None]
        targets = np.stack([self.targets[p][f:f + pf, b:b + pb] for p, f, b in corners])[..., None]
        return PatchSet(np.log1p(mags), mags, targets)

    def grid(self) -> PatchSet:
        """Half-overlapping patches on a regular grid covering every pair."""
        pf, pb = self.patch
        return self.crop([(p, f, b) for p, m in enumerate(self.mags)
                          for f in _starts(m.shape[0], pf) for b in _starts(m.shape[1], pb)])

    def sample(self, count: int, rng: np.random.Generator, pool: int = 4) -> PatchSet:
        """``count`` random crops, energy-weighted.

        A pool of ``pool * count`` uniformly placed crops is drawn, then
        ``count`` of them are kept without replacement with probability
        proportional to their mean log magnitude, so near-silent crops are
        visited rarely but not never. Arbitrary offsets mean every
        structure is also seen near patch edges.
        """
        pf, pb = self.patch
        which = rng.integers(0, len(self.mags), size=pool * count)
        corners = [(int(p), int(rng.integers(0, self.mags[p].shape[0] - pf + 1)),
                    int(rng.integers(0, self.mags[p].shape[1] - pb + 1))) for p in which]
        candidates = self.crop(corners)
        w = candidates.weights + 1e-6
        keep = rng.choice(len(candidates), size=count, replace=False, p=w / w.sum())
        return candidates.batch(keep)


def extract_patches(pairs: list[AudioPair], unet_config: UNetConfig,
                    stft_config: SpectrogramConfig = SpectrogramConfig()) -> PatchSet:
    """Crop half-overlapping, input/target-aligned patches on a regular grid."""
    return SpectrogramBank.from_pairs(pairs, unet_config, stft_config).grid()


def patch_loss(params, batch: PatchSet, unet_config: UNetConfig, mode: str = "train",
               rng: np.random.Generator | None = None, loss_domain: str = "linear",
               dropout_masks: dict | None = None, stats_out: dict | None = None) -> Tensor:
    """Total loss of the masked input magnitudes against the targets for one batch."""
    mask = unet_forward(params, batch.inputs, unet_config, mode, rng=rng,
                        dropout_masks=dropout_masks, stats_out=stats_out)
    pred = mul(mask, Tensor(batch.mags))
    target = Tensor(batch.targets)
    if loss_domain == "log":
        return total_loss(Tensor(np.log1p(batch.targets)), log1p(pred))
    return total_loss(target, pred)


class Trainer:
    """Owns the single mutable copy of the parameters and the optimizer state."""

    def __init__(self, params: ModelParams, train_config: TrainConfig):
        self.params = params.copy()
        self.config = train_config
        self.learnable = params.learnable_names()
        self.state = AdamState.zeros_like({k: self.params[k] for k in self.learnable})
        self.step_index = 0
        self.dropout_rng = np.random.default_rng([train_config.seed, 2])

    def step(self, batch: PatchSet) -> float:
        """One forward/backward/Adam update; returns the batch loss."""
        cfg = self.config
        tensors = {k: Tensor(v, requires_grad=k in self.learnable) for k, v in self.params.tensors.items()}
        stats: dict[str, np.ndarray] = {}
        loss = patch_loss(tensors, batch, self.params.config, "train", self.dropout_rng,
                          cfg.loss_domain, stats_out=stats)
        value = float(loss.data)
        if not math.isfinite(value):
            raise DivergenceError(f"non-finite training loss at step {self.step_index + 1}")
        grads = backward(loss, [tensors[k] for k in self.learnable])
        self.step_index += 1
        updated = adam_step({k: self.params[k] for k in self.learnable},
                            dict(zip(self.learnable, grads)), self.state,
                            cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon, self.step_index)
        self.params.tensors.update(updated)
        self.params.tensors.update(stats)
        return value


def evaluate_loss(params: ModelParams, patches: PatchSet, batch_size: int = 16,
                  loss_domain: str = "linear") -> float:
    """Patch-weighted mean eval-mode loss over a patch set."""
    total = 0.0
    for start in range(0, len(patches), batch_size):
        batch = patches.batch(slice(start, start + batch_size))
        loss = patch_loss(params, batch, params.config, "eval", loss_domain=loss_domain)
        total += float(loss.data) * len(batch)
    return total / len(patches)


def train(train_pairs: list[AudioPair], val_pairs: list[AudioPair], unet_config: UNetConfig,
          train_config: TrainConfig = TrainConfig(),
          stft_config: SpectrogramConfig = SpectrogramConfig(),
          initial: ModelParams | None = None) -> tuple[ModelParams, TrainHistory]:
    """Train from scratch (or from ``initial``) and return the best-epoch parameters."""
    if not train_pairs or not val_pairs:
        raise InputError("training needs non-empty train and validation splits")
    cfg = train_config
    bank = SpectrogramBank.from_pairs(train_pairs, unet_config, stft_config)
    grid = bank.grid() if cfg.patches_per_epoch == 0 else None
    val_set = extract_patches(val_pairs, unet_config, stft_config)
    log.info("training on %d patches per epoch, validating on %d",
             len(grid) if grid is not None else cfg.patches_per_epoch, len(val_set))

    params = initial.copy() if initial is not None else init_params(unet_config, cfg.seed)
    trainer = Trainer(params, cfg)
    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    stopper = EarlyStopping(cfg.patience, cfg.min_delta)
    history = TrainHistory()
    best = trainer.params.copy()

    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        if grid is not None:
            epoch_set = grid.batch(shuffle_rng.permutation(len(grid)))
        else:
            epoch_set = bank.sample(cfg.patches_per_epoch, shuffle_rng)
        weighted = 0.0
        for start in range(0, len(epoch_set), cfg.batch_size):
            batch = epoch_set.batch(slice(start, start + cfg.batch_size))
            weighted += trainer.step(batch) * len(batch)
        train_loss = weighted / len(epoch_set)
        val_loss = evaluate_loss(trainer.params, val_set, loss_domain=cfg.loss_domain)
        if not math.isfinite(val_loss):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
        record = EpochRecord(epoch, train_loss, val_loss, time.perf_counter() - t0)
        history.records.append(record)
        log.info(record.log_line())
        stop = stopper.update(val_loss)
        if stopper.improved:
            best = trainer.params.copy()
        history.stopped_epoch = epoch
        history.best_epoch = stopper.best_epoch
        if stop:
            log.info("early stopping at epoch %d (best epoch %d)", epoch, stopper.best_epoch)
            break
    return best, history
