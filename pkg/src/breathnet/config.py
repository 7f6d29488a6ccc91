"""Run configuration: a flat ``key = value`` file with dotted keys.

Every key belongs to one section backed by a config dataclass::

    seed = 0            # single run seed: synthesis, split, init, shuffling
    stft.hop = 512
    model.depth = 2
    train.loss_domain = log
    synth.room_tone_db = -55
    mfcc.mel_bands = 40
    split.train = 0.80
    eval.theta = 0.5
    infer.mask_floor = 0.01

Precedence is ``--set`` flag > config file > built-in default. Unknown keys
and malformed values are errors, never silently ignored.
"""

from __future__ import annotations

import dataclasses
import os
import typing
from dataclasses import dataclass, field

from .data import SPLIT_FRACTIONS, SynthConfig
from .dsp import SpectrogramConfig
from .errors import ConfigurationError, InputError
from .evaluation import MfccConfig
from .model import UNetConfig
from .training import TrainConfig


@dataclass(frozen=True)
class SplitConfig:
    train: float = SPLIT_FRACTIONS[0]
    validation: float = SPLIT_FRACTIONS[1]
    test: float = SPLIT_FRACTIONS[2]

    @property
    def fractions(self) -> tuple[float, float, float]:
        return (self.train, self.validation, self.test)


@dataclass(frozen=True)
class EvalConfig:
    theta: float = 0.5
    floor_db: float = -60.0


@dataclass(frozen=True)
class InferConfig:
    mask_floor: float = 0.0  # lower bound applied to predicted masks

    def __post_init__(self):
        if not 0.0 <= self.mask_floor <= 1.0:
            raise ConfigurationError(f"infer.mask_floor must lie in [0, 1], got {self.mask_floor}")


SECTIONS: dict[str, type] = {
    "stft": SpectrogramConfig,
    "model": UNetConfig,
    "train": TrainConfig,
    "synth": SynthConfig,
    "mfcc": MfccConfig,
    "split": SplitConfig,
    "eval": EvalConfig,
    "infer": InferConfig,
}
# the run seed feeds these fields, so they are not separately settable
_SEEDED = {("train", "seed"), ("synth", "seed")}


def _field_types(cls) -> dict[str, typing.Any]:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls)}


def schema() -> dict[str, typing.Any]:
    """Every accepted key mapped to its value type."""
    keys: dict[str, typing.Any] = {"seed": int}
    for section, cls in SECTIONS.items():
        for name, tp in _field_types(cls).items():
            if (section, name) not in _SEEDED:
                keys[f"{section}.{name}"] = tp
    return keys


def _parse_value(key: str, text: str, tp) -> typing.Any:
    text = text.strip()
    args = typing.get_args(tp)
    if args and type(None) in args:
        if text.lower() == "none":
            return None
        tp = next(a for a in args if a is not type(None))
    try:
        if tp is bool:
            lowered = text.lower()
            if lowered in ("true", "yes", "on", "1"):
                return True
            if lowered in ("false", "no", "off", "0"):
                return False
            raise ValueError(text)
        if tp is int:
            return int(text)
        if tp is float:
            return float(text)
        if tp is str:
            return text
    except ValueError:
        raise ConfigurationError(f"{key}: cannot parse {text!r} as {tp.__name__}") from None
    raise ConfigurationError(f"{key}: unsupported value type {tp!r}")


def parse_assignments(lines: typing.Iterable[str], origin: str = "<config>") -> dict[str, typing.Any]:
    """Parse ``key = value`` lines (``#`` starts a comment) into typed values."""
    keys = schema()
    values: dict[str, typing.Any] = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{origin}:{lineno}: expected 'key = value', got {line!r}")
        key, text = (part.strip() for part in line.split("=", 1))
        if key not in keys:
            raise ConfigurationError(f"{origin}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigurationError(f"{origin}:{lineno}: key {key!r} given twice")
        values[key] = _parse_value(key, text, keys[key])
    return values


def read_config_file(path: str | os.PathLike) -> dict[str, typing.Any]:
    try:
        with open(path, encoding="utf-8") as f:
            return parse_assignments(f, os.fspath(path))
    except OSError as exc:
        raise InputError(f"cannot read config file {os.fspath(path)!r}: {exc}") from exc


def parse_overrides(items: typing.Iterable[str]) -> dict[str, typing.Any]:
    """Parse repeated ``--set key=value`` items; later items win."""
    values: dict[str, typing.Any] = {}
    for item in items:
        values.update(parse_assignments([item], "--set"))
    return values


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    stft: SpectrogramConfig = field(default_factory=SpectrogramConfig)
    model: UNetConfig = field(default_factory=UNetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    mfcc: MfccConfig = field(default_factory=MfccConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    infer: InferConfig = field(default_factory=InferConfig)

    def __post_init__(self):
        rates = {self.stft.sample_rate, self.synth.sample_rate, self.mfcc.sample_rate}
        if len(rates) != 1:
            raise ConfigurationError(
                "stft.sample_rate, synth.sample_rate and mfcc.sample_rate must agree, got "
                f"{self.stft.sample_rate}, {self.synth.sample_rate}, {self.mfcc.sample_rate}")

    @classmethod
    def from_values(cls, values: dict[str, typing.Any]) -> "RunConfig":
        unknown = set(values) - set(schema())
        if unknown:
            raise ConfigurationError(f"unknown keys: {sorted(unknown)}")
        seed = values.get("seed", 0)
        if seed < 0:
            raise ConfigurationError(f"seed must be non-negative, got {seed}")
        sections = {}
        for section, cls_ in SECTIONS.items():
            kwargs = {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith(section + ".")}
            if section in ("train", "synth"):
                kwargs["seed"] = seed
            sections[section] = cls_(**kwargs)
        return cls(seed=seed, **sections)

    def as_values(self) -> dict[str, typing.Any]:
        """Flat key/value view, the inverse of ``from_values``."""
        out: dict[str, typing.Any] = {"seed": self.seed}
        for section in SECTIONS:
            obj = getattr(self, section)
            for f in dataclasses.fields(obj):
                if (section, f.name) not in _SEEDED:
                    out[f"{section}.{f.name}"] = getattr(obj, f.name)
        return out


def load_run_config(config_path: str | os.PathLike | None = None, seed: int | None = None,
                    overrides: typing.Iterable[str] = ()) -> RunConfig:
    """Merge defaults, an optional config file, ``--seed`` and ``--set`` items."""
    values = read_config_file(config_path) if config_path is not None else {}
    if seed is not None:
        values["seed"] = seed
    values.update(parse_overrides(overrides))
    return RunConfig.from_values(values)
