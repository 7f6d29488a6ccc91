"""Time-frequency analysis and synthesis.

All computations run in float64. Spectrograms are stored frames x bins.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InputError, InvariantError

WOLA_EPS = 1e-10


@dataclass(frozen=True)
class AudioClip:
    """Mono sample buffer with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise InputError(f"AudioClip must be mono, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise InvariantError("AudioClip samples must be finite")
        if int(self.sample_rate) <= 0:
            raise InvariantError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class SpectrogramConfig:
    frame_length: int = 4096
    hop: int = 512
    window_kind: str = "hann"
    centered: bool = True
    sample_rate: int = 22050

    def __post_init__(self):
        if not 0 < self.hop <= self.frame_length:
            raise ConfigurationError(
                f"need 0 < hop <= frame_length, got hop={self.hop}, frame_length={self.frame_length}")
        if self.frame_length % 2:
            raise ConfigurationError(f"frame_length must be even, got {self.frame_length}")
        if self.sample_rate <= 0:
            raise ConfigurationError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.window_kind != "hann":
            raise ConfigurationError(f"unsupported window kind {self.window_kind!r}")

    @property
    def bins(self) -> int:
        return self.frame_length // 2 + 1

    def num_frames(self, num_samples: int) -> int:
        if self.centered:
            return num_samples // self.hop + 1
        return 1 + (num_samples - self.frame_length) // self.hop


@dataclass(frozen=True)
class ComplexSpectrogram:
    data: np.ndarray
    config: SpectrogramConfig = field(default_factory=SpectrogramConfig)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        if data.ndim != 2 or data.shape[1] != self.config.bins:
            raise InputError(
                f"expected frames x {self.config.bins} bins, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InvariantError("spectrogram values must be finite")
        object.__setattr__(self, "data", data)

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def bins(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class MagnitudeSpectrogram:
    data: np.ndarray
    config: SpectrogramConfig = field(default_factory=SpectrogramConfig)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise InputError(f"magnitude spectrogram must be 2-D, got shape {data.shape}")
        if np.any(data < 0) or not np.all(np.isfinite(data)):
            raise InvariantError("magnitudes must be finite and nonnegative")
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class PhaseSpectrogram:
    data: np.ndarray
    config: SpectrogramConfig = field(default_factory=SpectrogramConfig)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if np.any(data <= -np.pi) or np.any(data > np.pi):
            raise InvariantError("phases must lie in (-pi, pi]")
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


def make_window(kind: str, frame_length: int) -> np.ndarray:
    """Periodic analysis window of ``frame_length`` samples."""
    if kind != "hann":
        raise ConfigurationError(f"unsupported window kind {kind!r}")
    if frame_length < 1:
        raise ConfigurationError(f"frame_length must be >= 1, got {frame_length}")
    n = np.arange(frame_length)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * n / frame_length))


def stft(clip: AudioClip, config: SpectrogramConfig = SpectrogramConfig()) -> ComplexSpectrogram:
    """Short-time Fourier transform of ``clip``.

    In centered mode the signal is reflect-padded by ``frame_length // 2`` on
    both ends so frame ``k`` is centered on sample ``k * hop``.
    """
    if clip.sample_rate != config.sample_rate:
        raise InputError(
            f"sample-rate mismatch: clip {clip.sample_rate} Hz, config {config.sample_rate} Hz")
    if len(clip) == 0:
        raise InputError("cannot analyse an empty clip")
    n_fft = config.frame_length
    x = clip.samples
    if config.centered:
        x = np.pad(x, n_fft // 2, mode="reflect") if len(x) > 1 else np.pad(x, n_fft // 2)
    elif len(x) < n_fft:
        raise InputError(f"uncentered STFT needs at least {n_fft} samples, got {len(x)}")
    frames = np.lib.stride_tricks.sliding_window_view(x, n_fft)[:: config.hop]
    frames = frames[: config.num_frames(len(clip))]
    window = make_window(config.window_kind, n_fft)
    return ComplexSpectrogram(np.fft.rfft(frames * window, axis=1), config)


def istft(spec: ComplexSpectrogram) -> AudioClip:
    """Weighted overlap-add inverse of :func:`stft`.

    Centered spectrograms yield ``(frames - 1) * hop`` samples.
    """
    config = spec.config
    n_fft, hop = config.frame_length, config.hop
    if spec.bins != n_fft // 2 + 1:
        raise InputError(f"expected {n_fft // 2 + 1} bins, got {spec.bins}")
    window = make_window(config.window_kind, n_fft)
    frames = np.fft.irfft(spec.data, n=n_fft, axis=1) * window
    total = n_fft + (spec.frames - 1) * hop
    out = np.zeros(total)
    norm = np.zeros(total)
    wsq = window**2
    for k, frame in enumerate(frames):
        start = k * hop
        out[start:start + n_fft] += frame
        norm[start:start + n_fft] += wsq
    out /= np.maximum(norm, WOLA_EPS)
    if config.centered:
        out = out[n_fft // 2: n_fft // 2 + (spec.frames - 1) * hop]
    return AudioClip(out, config.sample_rate)


def split(spec: ComplexSpectrogram) -> tuple[MagnitudeSpectrogram, PhaseSpectrogram]:
    """Split into magnitude and phase; zero bins get phase 0."""
    mag = np.abs(spec.data)
    phase = np.angle(spec.data)
    # angle() can return -pi for negative reals with a -0.0 imaginary part
    phase = np.where(phase <= -np.pi, np.pi, phase)
    phase = np.where(mag == 0, 0.0, phase)
    return MagnitudeSpectrogram(mag, spec.config), PhaseSpectrogram(phase, spec.config)


def recombine(mag: MagnitudeSpectrogram, phase: PhaseSpectrogram) -> ComplexSpectrogram:
    if mag.shape != phase.shape:
        raise InputError(f"shape mismatch: magnitude {mag.shape}, phase {phase.shape}")
    return ComplexSpectrogram(mag.data * np.exp(1j * phase.data), mag.config)


def log_compress(mag: MagnitudeSpectrogram | np.ndarray) -> np.ndarray:
    """Elementwise ``log(1 + m)``."""
    data = mag.data if isinstance(mag, MagnitudeSpectrogram) else np.asarray(mag, dtype=np.float64)
    if np.any(data < 0):
        raise InvariantError("log_compress expects nonnegative magnitudes")
    return np.log1p(data)


def apply_mask(mag: MagnitudeSpectrogram, mask) -> MagnitudeSpectrogram:
    """Scale magnitudes by a soft mask with entries in [0, 1]."""
    mask = np.asarray(getattr(mask, "data", mask), dtype=np.float64)
    if mask.shape != mag.shape:
        raise InputError(f"shape mismatch: magnitude {mag.shape}, mask {mask.shape}")
    if np.any(mask < 0) or np.any(mask > 1) or not np.all(np.isfinite(mask)):
        raise InvariantError("mask entries must lie in [0, 1]")
    return MagnitudeSpectrogram(mag.data * mask, mag.config)


def frame_rms(mag: np.ndarray, frame_length: int, window_kind: str = "hann") -> np.ndarray:
    """Window-weighted RMS of each analysis frame, recovered from magnitudes.

    Uses Parseval over the one-sided spectrum. A missing Nyquist column
    (``frame_length // 2`` bins) is treated as zero.
    """
    mag = np.asarray(mag, dtype=np.float64)
    half = frame_length // 2
    if mag.shape[-1] not in (half, half + 1):
        raise InputError(f"expected {half} or {half + 1} bins, got {mag.shape[-1]}")
    weights = np.full(mag.shape[-1], 2.0)
    weights[0] = 1.0
    if mag.shape[-1] == half + 1:
        weights[-1] = 1.0
    window = make_window(window_kind, frame_length)
    energy = (mag**2 * weights).sum(axis=-1) / (frame_length * np.sum(window**2))
    return np.sqrt(energy)
