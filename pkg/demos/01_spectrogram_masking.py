"""
Spectrogram masking by hand
===========================

Take a clip apart with the STFT, scale its magnitudes with a mask, and put it
back together with the original phase. A mask of ones gives the clip back;
zeroing a band of bins removes exactly that band.
"""

import numpy as np

from breathnet import AudioClip, SpectrogramConfig, apply_mask, istft, recombine, split, stft

sr = 22050
t = np.arange(sr) / sr
# a 220 Hz tone plus a 3 kHz tone, one second long
x = 0.5 * np.sin(2 * np.pi * 220 * t) + 0.2 * np.sin(2 * np.pi * 3000 * t)
clip = AudioClip(x, sr)

cfg = SpectrogramConfig()  # 4096-sample Hann frames, hop 512, centered
spec = stft(clip, cfg)
mag, phase = split(spec)
print("spectrogram:", mag.shape, "(frames, bins)")

# pass-through: the round trip is exact to rounding
same = istft(recombine(apply_mask(mag, np.ones(mag.shape)), phase)).samples
n = len(same)
print("round-trip relative error: %.2e" % (np.linalg.norm(same - x[:n]) / np.linalg.norm(x[:n])))

# silence everything above 1 kHz; only the low tone survives
freqs = np.arange(mag.shape[1]) * sr / cfg.frame_length
mask = np.ones(mag.shape)
mask[:, freqs > 1000] = 0.0
low = istft(recombine(apply_mask(mag, mask), phase)).samples
target = 0.5 * np.sin(2 * np.pi * 220 * t[:n])
print("after removing the 3 kHz tone, error against the 220 Hz tone: %.2e"
      % (np.linalg.norm(low - target) / np.linalg.norm(target)))
