"""Mono WAV reading and writing (16-bit PCM and 32-bit float)."""

from __future__ import annotations

import os

import numpy as np
from scipy.io import wavfile

from .dsp import AudioClip
from .errors import InputError, UnsupportedAudioFormatError

PCM16 = "pcm16"
FLOAT32 = "float32"


def read_wav(path: str | os.PathLike) -> AudioClip:
    """Read a mono WAV file into an :class:`AudioClip`.

    16-bit samples are scaled into [-1, 1) by dividing by 32768. Anything
    other than mono 16-bit PCM or mono 32-bit float is rejected.
    """
    if not os.path.exists(path):
        raise InputError(f"no such file: {path}")
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise UnsupportedAudioFormatError(f"{path}: {exc}") from exc
    if data.ndim != 1:
        raise UnsupportedAudioFormatError(
            f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise UnsupportedAudioFormatError(f"{path}: unsupported sample format {data.dtype}")
    return AudioClip(samples, rate)


def write_wav(path: str | os.PathLike, clip: AudioClip, subformat: str = FLOAT32) -> None:
    if subformat == FLOAT32:
        data = clip.samples.astype(np.float32)
    elif subformat == PCM16:
        scaled = np.round(clip.samples * 32768.0)
        data = np.clip(scaled, -32768, 32767).astype(np.int16)
    else:
        raise UnsupportedAudioFormatError(f"unsupported subformat {subformat!r}")
    wavfile.write(path, clip.sample_rate, data)
