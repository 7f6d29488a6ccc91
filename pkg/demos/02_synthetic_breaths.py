"""
A synthetic breath corpus
=========================

Each synthetic pair is a harmonic "voice" with pauses (the target) and the
same voice with band-passed noise bursts placed inside some pauses (the
input). Frame labels mark where the bursts are, and the magnitude-based
labeling used for scoring should agree with them.
"""

import numpy as np

from breathnet import SpectrogramConfig, SynthConfig, frame_breath_labels, split, stft, synth_pair

cfg = SynthConfig(seed=0)
pair = synth_pair(cfg, 0)
sr = cfg.sample_rate
print("clip: %.1f s, %d speech segments" % (pair.input.duration, len(pair.speech)))
for s, e in pair.bursts:
    print("  breath burst at %.2f-%.2f s" % (s / sr, e / sr))

# the difference between input and target is the breath alone
breath = pair.input.samples - pair.target.samples
speech = np.concatenate([pair.target.samples[a:b] for a, b in pair.speech])
burst = np.concatenate([breath[s:e] for s, e in pair.bursts])
print("breath level re speech: %.1f dB" % (20 * np.log10(np.std(burst) / np.std(speech))))

# labels from the magnitudes (drop of more than half the frame RMS) against the
# labels written down when the bursts were placed
stft_cfg = SpectrogramConfig()
mag_in, _ = split(stft(pair.input, stft_cfg))
mag_tgt, _ = split(stft(pair.target, stft_cfg))
measured = frame_breath_labels(mag_in, mag_tgt)
print("breath frames: %d placed, %d measured, agreement %.1f%%"
      % (pair.labels.sum(), measured.sum(), 100 * np.mean(measured == pair.labels)))
