"""
Training a small breath remover
===============================

Train the desk-scale network (configs/desk.conf) on a handful of synthetic
pairs, then run it on a held-out pair and measure how much the breath frames
and the speech frames changed. The full recipe runs for up to 60 epochs; pass
a smaller epoch count on the command line for a quicker look, e.g.

    python demos/03_train_and_enhance.py 10
"""

import sys
from pathlib import Path

import numpy as np

from breathnet import enhance, evaluate, synth_pair, train
from breathnet.config import load_run_config

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 60
cfg = load_run_config(Path(__file__).resolve().parents[1] / "configs" / "desk.conf",
                      overrides=[f"train.max_epochs={epochs}"])

pairs = [synth_pair(cfg.synth, i, cfg.stft).as_pair(str(i)) for i in range(8)]
train_pairs, val_pairs, held_out = pairs[:6], pairs[6:7], pairs[7]

params, history = train(train_pairs, val_pairs, cfg.model, cfg.train, cfg.stft)
print("trained %d epochs, best epoch %d, val loss %.4g"
      % (history.stopped_epoch, history.best_epoch, min(history.val_losses)))

report = evaluate(params, [held_out], cfg.stft, cfg.mfcc, mask_floor=cfg.infer.mask_floor)
print(report.summary())

# energy around each labeled breath frame and each speech-only frame, before and after
ref = synth_pair(cfg.synth, 7, cfg.stft)
x = ref.input.samples
y = enhance(ref.input, params, cfg.stft, mask_floor=cfg.infer.mask_floor).output.samples
hop = cfg.stft.hop
centres = np.arange(len(ref.labels)) * hop
in_speech = np.zeros(len(centres), bool)
for a, b in ref.speech:
    in_speech |= (centres >= a) & (centres < b)


def energy(sig, frames):
    return sum(np.sum(sig[max(k * hop - hop // 2, 0): k * hop + hop // 2] ** 2) for k in frames)


breath = np.flatnonzero(ref.labels & (centres < len(y)))
speech = np.flatnonzero(in_speech & ~ref.labels & (centres < len(y)))
print("breath frames: %.1f dB quieter" % (10 * np.log10(energy(x, breath) / energy(y, breath))))
print("speech frames: %+.3f dB" % (10 * np.log10(energy(y, speech) / energy(x, speech))))
