"""Breath-sound removal: STFT masking with an attention U-Net, in numpy."""

from .data import (AudioPair, CorpusSplit, PairManifest, SynthConfig, frame_breath_labels,
                   read_manifest, split_corpus, synth_pair, write_synthetic_corpus)
from .dsp import (AudioClip, ComplexSpectrogram, MagnitudeSpectrogram, PhaseSpectrogram,
                  SpectrogramConfig, apply_mask, istft, log_compress, recombine, split, stft)
from .errors import (BadMagicError, BreathnetError, ConfigurationError, DivergenceError,
                     FormatError, InputError, UnsupportedVersionError)
from .evaluation import MfccConfig, breath_accuracy, evaluate, mfcc, mfcc_distance
from .inference import enhance
from .model import ModelParams, UNetConfig, count_parameters, init_params, unet_forward
from .modelio import load_model, save_model
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "AudioClip",
    "AudioPair",
    "BadMagicError",
    "BreathnetError",
    "ComplexSpectrogram",
    "ConfigurationError",
    "CorpusSplit",
    "DivergenceError",
    "FormatError",
    "InputError",
    "MagnitudeSpectrogram",
    "MfccConfig",
    "ModelParams",
    "PairManifest",
    "PhaseSpectrogram",
    "SpectrogramConfig",
    "SynthConfig",
    "TrainConfig",
    "UNetConfig",
    "UnsupportedVersionError",
    "apply_mask",
    "breath_accuracy",
    "count_parameters",
    "enhance",
    "evaluate",
    "frame_breath_labels",
    "init_params",
    "istft",
    "load_model",
    "log_compress",
    "mfcc",
    "mfcc_distance",
    "read_manifest",
    "recombine",
    "save_model",
    "split",
    "split_corpus",
    "stft",
    "synth_pair",
    "train",
    "unet_forward",
    "write_synthetic_corpus",
]
