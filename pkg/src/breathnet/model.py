"""Attention U-Net mapping a log-magnitude patch to a soft mask in (0, 1).

Layout is NHWC throughout: [batch, frames, bins, channels].
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import ConfigurationError, InputError
from .tensor import (
    Tensor, batch_norm, concat, conv2d, conv_transpose2d, dropout, max_pool2d, mul,
    relu, sigmoid, upsample_nearest, add,
)

Mode = Literal["train", "eval"]

CONV_KERNEL = "conv_kernel"
BIAS = "bias"
BN_GAIN = "bn_gain"
BN_SHIFT = "bn_shift"
BN_MEAN = "bn_running_mean"
BN_VAR = "bn_running_var"
RUNNING_KINDS = (BN_MEAN, BN_VAR)


@dataclass(frozen=True)
class UNetConfig:
    depth: int = 4
    base_filters: int = 16
    dropout_rate: float = 0.2
    use_batch_norm: bool = True
    out_classes: int = 1
    input_frames: int = 64
    input_bins: int = 64

    def __post_init__(self):
        if self.depth < 1 or self.base_filters < 1:
            raise ConfigurationError("depth and base_filters must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.out_classes != 1:
            raise ConfigurationError("only a single output class is supported")
        unit = 2**self.depth
        if self.input_frames % unit or self.input_bins % unit or self.input_frames < 1 or self.input_bins < 1:
            raise ConfigurationError(
                f"input_frames and input_bins must be positive multiples of 2**depth = {unit}, "
                f"got {self.input_frames} x {self.input_bins}")

    @classmethod
    def paper(cls) -> "UNetConfig":
        """Full-size configuration: 3872 frames x 2048 bins, 4 levels, 16 filters."""
        return cls(depth=4, base_filters=16, dropout_rate=0.2, use_batch_norm=True,
                   input_frames=3872, input_bins=2048)

    @classmethod
    def desk(cls) -> "UNetConfig":
        return cls(depth=2, base_filters=4, input_frames=64, input_bins=64)

    def filters(self, level: int) -> int:
        return self.base_filters * 2**level


def param_specs(config: UNetConfig) -> dict[str, tuple[tuple[int, ...], str]]:
    """Canonical, ordered list of every tensor the architecture owns."""
    specs: dict[str, tuple[tuple[int, ...], str]] = {}

    def conv(name, k, cin, cout, bias=True):
        specs[f"{name}.kernel"] = ((k, k, cin, cout), CONV_KERNEL)
        if bias:
            specs[f"{name}.bias"] = ((cout,), BIAS)

    def bn(name, c):
        specs[f"{name}.gain"] = ((c,), BN_GAIN)
        specs[f"{name}.shift"] = ((c,), BN_SHIFT)
        specs[f"{name}.running_mean"] = ((c,), BN_MEAN)
        specs[f"{name}.running_var"] = ((c,), BN_VAR)

    def block(prefix, cin, cout):
        conv(f"{prefix}.conv1", 3, cin, cout)
        if config.use_batch_norm:
            bn(f"{prefix}.bn1", cout)
        conv(f"{prefix}.conv2", 3, cout, cout)
        if config.use_batch_norm:
            bn(f"{prefix}.bn2", cout)

    cin = 1
    for level in range(config.depth):
        block(f"enc{level}", cin, config.filters(level))
        cin = config.filters(level)
    block("bottleneck", cin, config.filters(config.depth))
    for level in reversed(range(config.depth)):
        coarse, fine = config.filters(level + 1), config.filters(level)
        conv(f"dec{level}.up", 2, coarse, fine)
        conv(f"dec{level}.att.wg", 1, coarse, fine)
        conv(f"dec{level}.att.wx", 1, fine, fine, bias=False)
        conv(f"dec{level}.att.psi", 1, fine, 1)
        block(f"dec{level}", 2 * fine, fine)
    conv("head", 1, config.filters(0), config.out_classes)
    return specs


def count_parameters(config: UNetConfig) -> int:
    """Number of learnable values; batch-norm running statistics are excluded."""
    return sum(int(np.prod(shape)) for shape, kind in param_specs(config).values()
               if kind not in RUNNING_KINDS)


@dataclass
class ModelParams:
    config: UNetConfig
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        specs = param_specs(self.config)
        if list(self.tensors) != list(specs):
            missing = set(specs) - set(self.tensors)
            extra = set(self.tensors) - set(specs)
            if missing or extra:
                raise InputError(f"parameter names do not match architecture "
                                 f"(missing {sorted(missing)}, unexpected {sorted(extra)})")
            self.tensors = {name: self.tensors[name] for name in specs}
        for name, (shape, _) in specs.items():
            if self.tensors[name].shape != shape:
                raise InputError(f"{name}: expected shape {shape}, got {self.tensors[name].shape}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def learnable_names(self) -> list[str]:
        return [n for n, (_, kind) in param_specs(self.config).items() if kind not in RUNNING_KINDS]

    def running_names(self) -> list[str]:
        return [n for n, (_, kind) in param_specs(self.config).items() if kind in RUNNING_KINDS]

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.config, {k: v.astype(dtype) for k, v in self.tensors.items()})


# initial head bias: sigmoid(3) ~ 0.95, so an untrained model is close to pass-through
HEAD_BIAS_INIT = 3.0


def init_params(config: UNetConfig, seed: int = 0, dtype=np.float32,
                head_bias: float = HEAD_BIAS_INIT) -> ModelParams:
    """He-normal kernels, zero biases, unit BN gains; deterministic in ``seed``.

    The head bias starts at ``head_bias`` so the initial mask is near one:
    the network then only has to learn where to suppress.
    """
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, (shape, kind) in param_specs(config).items():
        if kind == CONV_KERNEL:
            kh, kw, cin, _ = shape
            std = np.sqrt(2.0 / (kh * kw * cin))
            value = rng.normal(0.0, std, size=shape)
        elif kind in (BN_GAIN, BN_VAR):
            value = np.ones(shape)
        else:
            value = np.zeros(shape)
        tensors[name] = value.astype(dtype)
    tensors["head.bias"][:] = head_bias
    return ModelParams(config, tensors)


def attention_gate(gating: Tensor, skip: Tensor, wg_kernel, wg_bias, wx_kernel,
                   psi_kernel, psi_bias) -> Tensor:
    """Additive attention on a skip connection.

    ``gating`` comes from the coarser decoder level and has half the spatial
    extent of ``skip``. The coefficients are computed at the coarse
    resolution and upsampled by nearest neighbour before scaling ``skip``.
    """
    gh, gw = gating.shape[1:3]
    sh, sw = skip.shape[1:3]
    if (2 * gh, 2 * gw) != (sh, sw):
        raise InputError(f"gating extent {(gh, gw)} must be half the skip extent {(sh, sw)}")
    theta_g = conv2d(gating, wg_kernel, wg_bias)
    theta_x = conv2d(skip, wx_kernel, None, stride=2)
    alpha = sigmoid(conv2d(relu(add(theta_g, theta_x)), psi_kernel, psi_bias))
    return mul(upsample_nearest(alpha, 2), skip)


def _as_tensor_map(params) -> Mapping:
    if isinstance(params, ModelParams):
        params = params.tensors
    return params


def unet_forward(params, x, config: UNetConfig, mode: Mode = "eval",
                 rng: np.random.Generator | None = None,
                 dropout_masks: dict[str, np.ndarray] | None = None,
                 stats_out: dict[str, np.ndarray] | None = None) -> Tensor:
    """Run the network on ``x`` of shape [N, frames, bins, 1].

    ``params`` maps names to arrays or Tensors (pass Tensors with
    ``requires_grad`` to train). In train mode, dropout masks are taken from
    ``dropout_masks`` when present, otherwise drawn from ``rng`` and stored
    there; updated batch-norm running statistics are written to ``stats_out``.
    """
    if mode not in ("train", "eval"):
        raise ConfigurationError(f"mode must be 'train' or 'eval', got {mode!r}")
    p = _as_tensor_map(params)
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.data.ndim != 4 or x.shape[-1] != 1:
        raise InputError(f"expected input of shape [N, frames, bins, 1], got {x.shape}")
    unit = 2**config.depth
    if x.shape[1] % unit or x.shape[2] % unit:
        raise ConfigurationError(f"input extent {x.shape[1:3]} not divisible by 2**depth = {unit}")
    training = mode == "train"
    if training and dropout_masks is None:
        dropout_masks = {}

    def t(name):
        v = p[name]
        return v if isinstance(v, Tensor) else Tensor(v)

    def raw(name):
        v = p[name]
        return v.data if isinstance(v, Tensor) else v

    def block(prefix, h):
        for i in (1, 2):
            h = conv2d(h, t(f"{prefix}.conv{i}.kernel"), t(f"{prefix}.conv{i}.bias"))
            if config.use_batch_norm:
                bn = f"{prefix}.bn{i}"
                h, new_mean, new_var = batch_norm(
                    h, t(f"{bn}.gain"), t(f"{bn}.shift"),
                    raw(f"{bn}.running_mean"), raw(f"{bn}.running_var"), training)
                if training and stats_out is not None:
                    stats_out[f"{bn}.running_mean"] = new_mean
                    stats_out[f"{bn}.running_var"] = new_var
            h = relu(h)
        return h

    def drop(name, h):
        if not training or config.dropout_rate == 0:
            return h
        mask = dropout_masks.get(name)
        if mask is None and rng is None:
            raise InputError("train-mode forward with dropout needs rng or dropout_masks")
        h, mask = dropout(h, config.dropout_rate, mask=mask, rng=rng)
        dropout_masks[name] = mask
        return h

    skips = []
    h = x
    for level in range(config.depth):
        h = block(f"enc{level}", h)
        skips.append(h)
        h = max_pool2d(h, 2)
    h = drop("bottleneck", block("bottleneck", h))
    for level in reversed(range(config.depth)):
        pre = f"dec{level}"
        up = conv_transpose2d(h, t(f"{pre}.up.kernel"), t(f"{pre}.up.bias"))
        gated = attention_gate(h, skips[level], t(f"{pre}.att.wg.kernel"), t(f"{pre}.att.wg.bias"),
                               t(f"{pre}.att.wx.kernel"), t(f"{pre}.att.psi.kernel"),
                               t(f"{pre}.att.psi.bias"))
        h = drop(pre, block(pre, concat([up, gated], axis=-1)))
    return sigmoid(conv2d(h, t("head.kernel"), t("head.bias")))
