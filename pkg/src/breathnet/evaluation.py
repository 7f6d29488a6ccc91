"""MFCC distance and frame-level breath accuracy."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct

from .data import AudioPair, frame_breath_labels
from .dsp import AudioClip, MagnitudeSpectrogram, SpectrogramConfig, stft
from .errors import ConfigurationError, InputError
from .inference import enhance
from .model import ModelParams


@dataclass(frozen=True)
class MfccConfig:
    mel_bands: int = 40
    coefficients: int = 13
    fmin: float = 0.0
    fmax: float | None = None  # defaults to Nyquist
    frame_length: int = 2048
    hop: int = 512
    log_floor: float = 1e-10
    sample_rate: int = 22050

    def __post_init__(self):
        if self.coefficients > self.mel_bands - 1:
            raise ConfigurationError("coefficients 1..n must fit inside the mel bands")
        if not self.fmin < self.upper_hz:
            raise ConfigurationError("fmin must be below fmax")

    @property
    def upper_hz(self) -> float:
        return self.sample_rate / 2 if self.fmax is None else self.fmax

    @property
    def stft_config(self) -> SpectrogramConfig:
        return SpectrogramConfig(self.frame_length, self.hop, "hann", True, self.sample_rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(config: MfccConfig) -> np.ndarray:
    """Triangular filters on the HTK mel scale, shape [mel_bands, frame_length // 2 + 1]."""
    edges = mel_to_hz(np.linspace(hz_to_mel(config.fmin), hz_to_mel(config.upper_hz),
                                  config.mel_bands + 2))
    freqs = np.arange(config.frame_length // 2 + 1) * config.sample_rate / config.frame_length
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lower) / (center - lower)
    falling = (upper - freqs) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def mfcc(clip: AudioClip, config: MfccConfig = MfccConfig()) -> np.ndarray:
    """Cepstral coefficients 1..n per frame, shape [frames, coefficients]."""
    if clip.sample_rate != config.sample_rate:
        raise InputError(f"sample-rate mismatch: clip {clip.sample_rate} Hz, "
                         f"config {config.sample_rate} Hz")
    power = np.abs(stft(clip, config.stft_config).data) ** 2
    mel = power @ mel_filterbank(config).T
    logmel = np.log(np.maximum(mel, config.log_floor))
    cep = dct(logmel, type=2, axis=1, norm="ortho")
    return cep[:, 1: config.coefficients + 1]


def mfcc_distance(a: AudioClip, b: AudioClip, config: MfccConfig = MfccConfig()) -> float:
    """Mean per-frame Euclidean MFCC distance, divided by the coefficient count.

    Clips may differ in length by up to one hop; both are trimmed to the shorter.
    """
    if abs(len(a) - len(b)) > config.hop:
        raise InputError(f"clip lengths {len(a)} and {len(b)} differ by more than one hop")
    n = min(len(a), len(b))
    ca = mfcc(AudioClip(a.samples[:n], a.sample_rate), config)
    cb = mfcc(AudioClip(b.samples[:n], b.sample_rate), config)
    return float(np.mean(np.linalg.norm(ca - cb, axis=1)) / config.coefficients)


def breath_accuracy(labels_true, labels_pred) -> float:
    """Fraction of frames whose predicted breath label matches the truth."""
    labels_true = np.asarray(labels_true, dtype=bool)
    labels_pred = np.asarray(labels_pred, dtype=bool)
    if labels_true.shape != labels_pred.shape:
        raise InputError(f"label length mismatch: {labels_true.shape} vs {labels_pred.shape}")
    if labels_true.size == 0:
        raise InputError("cannot score empty label sequences")
    return float(np.mean(labels_true == labels_pred))


@dataclass(frozen=True)
class PairResult:
    pair: str
    mfcc_distance: float
    accuracy: float
    duration_s: float
    baseline_mfcc_distance: float  # unprocessed input vs target


@dataclass
class EvalReport:
    rows: list[PairResult] = field(default_factory=list)

    def _weighted(self, attr: str) -> float:
        w = np.array([r.duration_s for r in self.rows])
        v = np.array([getattr(r, attr) for r in self.rows])
        return float(np.sum(w * v) / np.sum(w))

    @property
    def mfcc_distance(self) -> float:
        return self._weighted("mfcc_distance")

    @property
    def accuracy(self) -> float:
        return self._weighted("accuracy")

    @property
    def baseline_mfcc_distance(self) -> float:
        return self._weighted("baseline_mfcc_distance")

    def summary(self) -> str:
        return (f"pairs={len(self.rows)} mfcc_distance={self.mfcc_distance:.6f} "
                f"accuracy={self.accuracy:.4f} input_mfcc_distance={self.baseline_mfcc_distance:.6f}")

    def write_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["pair", "mfcc_distance", "accuracy", "duration_s"])
            for r in self.rows:
                writer.writerow([r.pair, repr(r.mfcc_distance), repr(r.accuracy), repr(r.duration_s)])


def evaluate_pair(pair: AudioPair, params: ModelParams | None,
                  stft_config: SpectrogramConfig = SpectrogramConfig(),
                  mfcc_config: MfccConfig = MfccConfig(), theta: float = 0.5,
                  floor_db: float = -60.0, mask_override: float | None = None,
                  mask_floor: float = 0.0) -> PairResult:
    result = enhance(pair.input, params, stft_config, mask_override, mask_floor)
    target_mag = np.abs(stft(pair.target, stft_config).data)
    truth = frame_breath_labels(result.input_mag, MagnitudeSpectrogram(target_mag, stft_config),
                                theta, floor_db)
    pred = frame_breath_labels(result.input_mag, result.output_mag, theta, floor_db)
    return PairResult(
        pair=pair.pair_id,
        mfcc_distance=mfcc_distance(result.output, pair.target, mfcc_config),
        accuracy=breath_accuracy(truth, pred),
        duration_s=pair.duration,
        baseline_mfcc_distance=mfcc_distance(pair.input, pair.target, mfcc_config),
    )


def evaluate(params: ModelParams | None, pairs: list[AudioPair],
             stft_config: SpectrogramConfig = SpectrogramConfig(),
             mfcc_config: MfccConfig = MfccConfig(), theta: float = 0.5,
             floor_db: float = -60.0, mask_override: float | None = None,
             mask_floor: float = 0.0) -> EvalReport:
    """Run inference on every pair and score it against its target."""
    if not pairs:
        raise InputError("nothing to evaluate: the split is empty")
    return EvalReport([evaluate_pair(p, params, stft_config, mfcc_config, theta, floor_db,
                                     mask_override, mask_floor) for p in pairs])
