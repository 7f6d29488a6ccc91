"""Full-clip inference: tile the log spectrogram, predict a mask, resynthesize."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import (AudioClip, MagnitudeSpectrogram, PhaseSpectrogram, SpectrogramConfig,
                  apply_mask, istft, log_compress, recombine)
from .errors import InputError
from .model import ModelParams, unet_forward
from .training import model_magnitude


@dataclass(frozen=True)
class Enhanced:
    output: AudioClip
    input_mag: MagnitudeSpectrogram
    output_mag: MagnitudeSpectrogram
    phase: PhaseSpectrogram
    mask: np.ndarray  # frames x bins, Nyquist column included (always 0)


def predict_mask(params: ModelParams, log_mag: np.ndarray, batch_size: int = 32) -> np.ndarray:
    """Predict a mask for a frames x bins log-magnitude array.

    The array is zero-padded up to whole tiles of the configured input size;
    tiles do not overlap and are stitched back before trimming the padding.
    """
    config = params.config
    pf, pb = config.input_frames, config.input_bins
    frames, bins = log_mag.shape
    nf, nb = -(-frames // pf), -(-bins // pb)
    padded = np.zeros((nf * pf, nb * pb), dtype=np.float32)
    padded[:frames, :bins] = log_mag
    tiles = padded.reshape(nf, pf, nb, pb).transpose(0, 2, 1, 3).reshape(-1, pf, pb, 1)
    out = np.empty(tiles.shape, dtype=np.float32)
    for start in range(0, len(tiles), batch_size):
        out[start:start + batch_size] = unet_forward(params, tiles[start:start + batch_size], config).data
    stitched = out.reshape(nf, nb, pf, pb).transpose(0, 2, 1, 3).reshape(nf * pf, nb * pb)
    return stitched[:frames, :bins].astype(np.float64)


def enhance(clip: AudioClip, params: ModelParams | None,
            stft_config: SpectrogramConfig = SpectrogramConfig(),
            mask_override: float | None = None, mask_floor: float = 0.0) -> Enhanced:
    """Remove breaths from ``clip``.

    stft -> log compress -> tiled network -> mask the linear magnitude ->
    recombine with the original phase -> istft. ``mask_override`` replaces
    the network with a constant mask (1.0 gives a pass-through).
    ``mask_floor`` raises predicted mask values below it, which leaves a
    little residual instead of carving spectral holes where a breath was.
    """
    if not 0.0 <= mask_floor <= 1.0:
        raise InputError(f"mask_floor must lie in [0, 1], got {mask_floor}")
    if clip.sample_rate != stft_config.sample_rate:
        raise InputError(f"sample-rate mismatch: clip {clip.sample_rate} Hz, "
                         f"config {stft_config.sample_rate} Hz")
    mag, phase, model_mag = model_magnitude(clip, stft_config)
    mask = np.zeros(mag.shape)
    if mask_override is not None:
        mask[:] = mask_override
    else:
        if params is None:
            raise InputError("enhance needs model parameters or a mask override")
        mask[:, : model_mag.shape[1]] = np.maximum(predict_mask(params, log_compress(model_mag)),
                                                   mask_floor)
    out_mag = apply_mask(mag, mask)
    output = istft(recombine(out_mag, phase))
    return Enhanced(output, mag, out_mag, phase, mask)
