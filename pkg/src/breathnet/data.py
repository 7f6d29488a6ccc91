"""Paired corpora: manifests of real recordings, seeded synthetic pairs,
duration-based splits, and per-frame breath labels."""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal

from .dsp import AudioClip, MagnitudeSpectrogram, SpectrogramConfig, frame_rms
from .errors import ConfigurationError, InputError
from .wavio import read_wav, write_wav

log = logging.getLogger(__name__)

SPLIT_FRACTIONS = (0.80, 0.11, 0.09)


@dataclass(frozen=True)
class ManifestEntry:
    input_path: str
    target_path: str
    duration_seconds: float


@dataclass(frozen=True)
class PairManifest:
    entries: tuple[ManifestEntry, ...]

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i) -> ManifestEntry:
        return self.entries[i]


@dataclass(frozen=True)
class AudioPair:
    """One (raw, breath-free) recording pair."""

    pair_id: str
    input: AudioClip
    target: AudioClip

    @property
    def duration(self) -> float:
        return self.input.duration


def read_manifest(path: str | os.PathLike, hop: int = 512) -> PairManifest:
    """Load a ``input,target`` CSV; paths are relative to the manifest's directory.

    Every file is decoded to check that the pair shares a sample rate and has
    lengths within one hop of each other.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"manifest not found: {path}")
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or [n.strip() for n in reader.fieldnames] != ["input", "target"]:
            raise InputError(f"{path}: expected header 'input,target', got {reader.fieldnames}")
        rows = list(reader)
    entries = []
    for row in rows:
        inp = str(path.parent / row["input"].strip())
        tgt = str(path.parent / row["target"].strip())
        a, b = read_wav(inp), read_wav(tgt)
        if a.sample_rate != b.sample_rate:
            raise InputError(f"{inp} and {tgt} have different sample rates")
        if abs(len(a) - len(b)) > hop:
            raise InputError(f"{inp} and {tgt} differ in length by more than one hop")
        entries.append(ManifestEntry(inp, tgt, a.duration))
    return PairManifest(tuple(entries))


def write_manifest(path: str | os.PathLike, entries) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["input", "target"])
        for e in entries:
            writer.writerow([os.path.relpath(e.input_path, path.parent),
                             os.path.relpath(e.target_path, path.parent)])


def load_pair(manifest: PairManifest, index: int) -> AudioPair:
    """Decode one manifest row, trimming both clips to the shorter length."""
    entry = manifest[index]
    a, b = read_wav(entry.input_path), read_wav(entry.target_path)
    n = min(len(a), len(b))
    return AudioPair(str(index), AudioClip(a.samples[:n], a.sample_rate),
                     AudioClip(b.samples[:n], b.sample_rate))


@dataclass(frozen=True)
class CorpusSplit:
    train: list[int]
    validation: list[int]
    test: list[int]
    fractions: tuple[float, float, float] = SPLIT_FRACTIONS


def split_corpus(manifest: PairManifest, fractions=SPLIT_FRACTIONS, seed: int = 0) -> CorpusSplit:
    """Seeded shuffle, then greedy assignment by duration.

    Each pair goes to the split whose duration deficit against its target
    share is currently largest (ties go to train, then validation).
    """
    if len(manifest) == 0:
        raise InputError("cannot split an empty manifest")
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigurationError(f"split fractions must be 3 nonnegative values summing to 1, got {fractions}")
    durations = np.array([e.duration_seconds for e in manifest])
    total = durations.sum()
    order = np.random.default_rng(seed).permutation(len(manifest))
    assigned = np.zeros(3)
    parts: list[list[int]] = [[], [], []]
    for i in order:
        deficit = np.array(fractions) * total - assigned
        k = int(np.argmax(deficit))
        parts[k].append(int(i))
        assigned[k] += durations[i]
    if not parts[1] or not parts[2]:
        log.warning("split left validation or test empty (%d pairs in total)", len(manifest))
    return CorpusSplit(parts[0], parts[1], parts[2], fractions)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    clip_seconds: float = 4.0
    sample_rate: int = 22050
    f0_min: float = 90.0
    f0_max: float = 250.0
    harmonics: int = 12
    vibrato_depth: float = 0.02
    vibrato_rate: float = 5.0
    pause_density: float = 0.25  # breath-free pauses per second
    bursts_per_clip: int = 2
    burst_min_seconds: float = 0.15
    burst_max_seconds: float = 0.5
    band_low: float = 300.0
    band_high: float = 2000.0
    attack_ms: float = 40.0
    decay_ms: float = 60.0
    breath_gain_db: float = -12.0
    pause_margin_seconds: float = 0.2  # silence between speech and a burst
    room_tone_db: float = -55.0  # white noise floor shared by input and target, re speech RMS
    headroom: float = 0.9

    def __post_init__(self):
        if not (0 < self.f0_min <= self.f0_max):
            raise ConfigurationError("need 0 < f0_min <= f0_max")
        if not (0 < self.burst_min_seconds <= self.burst_max_seconds):
            raise ConfigurationError("need 0 < burst_min_seconds <= burst_max_seconds")
        if not (0 < self.band_low < self.band_high < self.sample_rate / 2):
            raise ConfigurationError("breath band must lie strictly inside (0, Nyquist)")
        if not (np.isfinite(self.breath_gain_db) and np.isfinite(self.room_tone_db)):
            raise ConfigurationError("breath_gain_db and room_tone_db must be finite")
        if not 0 < self.headroom <= 1:
            raise ConfigurationError("headroom must lie in (0, 1]")
        if self.bursts_per_clip < 0 or self.harmonics < 1:
            raise ConfigurationError("bursts_per_clip must be >= 0 and harmonics >= 1")


@dataclass(frozen=True)
class SynthPair:
    input: AudioClip
    target: AudioClip
    labels: np.ndarray
    bursts: list[tuple[int, int]] = field(default_factory=list)
    speech: list[tuple[int, int]] = field(default_factory=list)

    def as_pair(self, pair_id: str) -> AudioPair:
        return AudioPair(pair_id, self.input, self.target)


MIN_SPEECH_SECONDS = 0.3
EDGE_SECONDS = 0.1


def _raised_cosine_envelope(n: int, attack: int, decay: int) -> np.ndarray:
    env = np.ones(n)
    attack, decay = min(attack, n // 2), min(decay, n // 2)
    if attack:
        env[:attack] = 0.5 - 0.5 * np.cos(np.pi * np.arange(attack) / attack)
    if decay:
        env[n - decay:] = 0.5 + 0.5 * np.cos(np.pi * (np.arange(decay) + 1) / decay)
    return env


def _speech_segment(rng: np.random.Generator, n: int, sr: int, f0: float,
                    config: SynthConfig) -> np.ndarray:
    t = np.arange(n) / sr
    start_f0 = f0 * rng.uniform(0.9, 1.1)
    end_f0 = f0 * rng.uniform(0.9, 1.1)
    glide = np.linspace(start_f0, end_f0, n)
    vibrato = 1.0 + config.vibrato_depth * np.sin(
        2 * np.pi * config.vibrato_rate * t + rng.uniform(0, 2 * np.pi))
    inst_f0 = glide * vibrato
    phase = 2 * np.pi * np.cumsum(inst_f0) / sr
    out = np.zeros(n)
    nyquist_guard = 0.45 * sr / inst_f0.max()
    for k in range(1, config.harmonics + 1):
        gain = rng.uniform(0.5, 1.0) / k
        offset = rng.uniform(0, 2 * np.pi)
        if k < nyquist_guard:
            out += gain * np.sin(k * phase + offset)
    syllable_rate = rng.uniform(3.0, 5.0)
    envelope = 0.55 + 0.45 * np.sin(np.pi * syllable_rate * t + rng.uniform(0, np.pi)) ** 2
    fade = int(0.03 * sr)
    return out * envelope * _raised_cosine_envelope(n, fade, fade)


def synth_pair(config: SynthConfig, index: int,
               stft_config: SpectrogramConfig | None = None) -> SynthPair:
    """Generate pair ``index`` of a synthetic corpus.

    The target is a harmonic "voice" broken up by pauses; the input adds
    band-passed noise bursts (breaths) inside some of those pauses. Output is
    a pure function of ``(config.seed, index)``.
    """
    stft_config = stft_config or SpectrogramConfig(sample_rate=config.sample_rate)
    sr = config.sample_rate
    rng = np.random.default_rng([config.seed, index])
    n_total = int(round(config.clip_seconds * sr))

    bursts = [rng.uniform(config.burst_min_seconds, config.burst_max_seconds)
              for _ in range(config.bursts_per_clip)]
    margins = [config.pause_margin_seconds + rng.uniform(0.0, 0.05) for _ in bursts]
    n_plain = int(round(config.pause_density * config.clip_seconds))
    pauses = [("breath", d + 2 * m, m, d) for d, m in zip(bursts, margins)]
    pauses += [("plain", rng.uniform(0.15, 0.35), 0.0, 0.0) for _ in range(n_plain)]
    pauses = [pauses[i] for i in rng.permutation(len(pauses))]

    n_segments = len(pauses) + 1
    speech_time = config.clip_seconds - 2 * EDGE_SECONDS - sum(p[1] for p in pauses)
    spare = speech_time - MIN_SPEECH_SECONDS * n_segments
    if spare < 0:
        raise ConfigurationError(
            f"clip_seconds={config.clip_seconds} is too short for {len(pauses)} pauses")
    seg_seconds = MIN_SPEECH_SECONDS + spare * rng.dirichlet(np.full(n_segments, 4.0))

    target = np.zeros(n_total)
    speaker_f0 = rng.uniform(config.f0_min, config.f0_max)
    speech_spans, burst_spans = [], []
    t = EDGE_SECONDS
    for i, seconds in enumerate(seg_seconds):
        a, b = int(round(t * sr)), min(int(round((t + seconds) * sr)), n_total)
        target[a:b] = _speech_segment(rng, b - a, sr, speaker_f0, config)
        speech_spans.append((a, b))
        t += seconds
        if i < len(pauses):
            kind, length, margin, burst = pauses[i]
            if kind == "breath":
                s = int(round((t + margin) * sr))
                burst_spans.append((s, s + int(round(burst * sr))))
            t += length

    active = np.concatenate([target[a:b] for a, b in speech_spans])
    speech_rms = np.sqrt(np.mean(active**2))
    sos = signal.butter(4, [config.band_low, config.band_high], btype="bandpass", fs=sr, output="sos")
    breath = np.zeros(n_total)
    warmup = int(0.1 * sr)
    for s, e in burst_spans:
        n = e - s
        noise = signal.sosfilt(sos, rng.standard_normal(n + warmup))[warmup:]
        noise *= _raised_cosine_envelope(n, int(config.attack_ms * sr / 1000),
                                         int(config.decay_ms * sr / 1000))
        gain = speech_rms * 10 ** (config.breath_gain_db / 20) / np.sqrt(np.mean(noise**2))
        breath[s:e] = noise * gain

    target += rng.standard_normal(n_total) * speech_rms * 10 ** (config.room_tone_db / 20)
    noisy = target + breath
    scale = config.headroom / np.max(np.abs(noisy))
    inp = AudioClip(noisy * scale, sr)
    tgt = AudioClip(target * scale, sr)
    labels = burst_frame_labels(n_total, burst_spans, stft_config)
    return SynthPair(inp, tgt, labels, burst_spans, speech_spans)


def burst_frame_labels(num_samples: int, bursts, config: SpectrogramConfig) -> np.ndarray:
    """Mark STFT frames whose window overlaps a burst where the window weight is >= 0.5.

    For a Hann window that is the central half of the frame. Tails further
    out carry too little energy to register in the frame's spectrum.
    """
    frames = config.num_frames(num_samples)
    centers = np.arange(frames) * config.hop + (0 if config.centered else config.frame_length // 2)
    reach = config.frame_length // 4
    labels = np.zeros(frames, dtype=bool)
    for s, e in bursts:
        labels |= (centers - reach < e) & (centers + reach > s)
    return labels


def frame_breath_labels(input_mag: MagnitudeSpectrogram, target_mag: MagnitudeSpectrogram,
                        theta: float = 0.5, floor_db: float = -60.0) -> np.ndarray:
    """Label a frame as breath when removing it cost more than ``theta`` of its RMS.

    A frame qualifies only if its input RMS is above ``floor_db`` dBFS.
    """
    if input_mag.shape != target_mag.shape:
        raise InputError(f"shape mismatch: {input_mag.shape} vs {target_mag.shape}")
    n_fft = input_mag.config.frame_length
    rms_in = frame_rms(input_mag.data, n_fft)
    rms_tgt = frame_rms(target_mag.data, n_fft)
    loud = rms_in > 10 ** (floor_db / 20)
    drop = np.divide(rms_in - rms_tgt, rms_in, out=np.zeros_like(rms_in), where=rms_in > 0)
    return loud & (drop > theta)


def synthetic_corpus(config: SynthConfig, count: int,
                     stft_config: SpectrogramConfig | None = None) -> list[SynthPair]:
    return [synth_pair(config, i, stft_config) for i in range(count)]


def write_synthetic_corpus(out_dir: str | os.PathLike, count: int, config: SynthConfig,
                           stft_config: SpectrogramConfig | None = None) -> Path:
    """Materialize ``count`` pairs as float WAVs plus manifest.csv and labels.csv.

    Returns the manifest path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if count == 0:
        log.warning("synthesizing an empty corpus")
    entries = []
    label_rows = []
    for i in range(count):
        pair = synth_pair(config, i, stft_config)
        inp = out_dir / f"pair_{i:04d}_input.wav"
        tgt = out_dir / f"pair_{i:04d}_target.wav"
        write_wav(inp, pair.input)
        write_wav(tgt, pair.target)
        entries.append(ManifestEntry(str(inp), str(tgt), pair.input.duration))
        label_rows.extend((i, k, int(v)) for k, v in enumerate(pair.labels))
    manifest_path = out_dir / "manifest.csv"
    write_manifest(manifest_path, entries)
    with open(out_dir / "labels.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["pair_index", "frame_index", "is_breath"])
        writer.writerows(label_rows)
    return manifest_path
