"""Binary model files ("BRNM").

Layout, all little-endian::

    b"BRNM"  u16 version
    u32 depth  u32 base_filters  f32 dropout_rate  u32 use_batch_norm
    u32 out_classes  u32 input_frames  u32 input_bins
    u32 tensor_count
    per tensor: u16 name_length, UTF-8 name, u8 rank, u32 extents[rank],
                f32 values (row-major)
"""

from __future__ import annotations

import io
import os
import struct

import numpy as np

from .errors import BadMagicError, ConfigurationError, FormatError, InputError, UnsupportedVersionError
from .model import ModelParams, UNetConfig

MAGIC = b"BRNM"
VERSION = 1

_CONFIG = struct.Struct("<IIfIIII")


def _f32_value(x: float) -> float:
    # shortest decimal that round-trips through float32, so 0.2 reads back as 0.2
    return float(str(np.float32(x)))


def encode_model(params: ModelParams) -> bytes:
    c = params.config
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<H", VERSION))
    out.write(_CONFIG.pack(c.depth, c.base_filters, c.dropout_rate, int(c.use_batch_norm),
                           c.out_classes, c.input_frames, c.input_bins))
    out.write(struct.pack("<I", len(params.tensors)))
    for name, value in params.tensors.items():
        raw = name.encode("utf-8")
        out.write(struct.pack("<H", len(raw)))
        out.write(raw)
        out.write(struct.pack("<B", value.ndim))
        out.write(struct.pack(f"<{value.ndim}I", *value.shape))
        out.write(np.ascontiguousarray(value, dtype="<f4").tobytes())
    return out.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"model file truncated at byte {self.pos} (wanted {n} more)")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))


def decode_model(data: bytes) -> ModelParams:
    r = _Reader(data)
    magic = r.take(4) if len(data) >= 4 else data
    if magic != MAGIC:
        raise BadMagicError(f"not a model file: magic {magic!r}, expected {MAGIC!r}")
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise UnsupportedVersionError(f"model format version {version} is not supported (expected {VERSION})")
    depth, base, rate, bn, classes, frames, bins = r.unpack(_CONFIG.format)
    try:
        config = UNetConfig(depth, base, _f32_value(rate), bool(bn), classes, frames, bins)
    except ConfigurationError as exc:
        raise FormatError(f"model file holds an invalid configuration: {exc}") from exc
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        (length,) = r.unpack("<H")
        try:
            name = r.take(length).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("tensor name is not valid UTF-8") from exc
        (rank,) = r.unpack("<B")
        shape = r.unpack(f"<{rank}I")
        size = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(r.take(4 * size), dtype="<f4").astype(np.float32)
        if name in tensors:
            raise FormatError(f"duplicate tensor {name!r}")
        tensors[name] = values.reshape(shape)
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes after the last tensor")
    try:
        return ModelParams(config, tensors)
    except InputError as exc:
        raise FormatError(f"tensors do not match the stored configuration: {exc}") from exc


def save_model(params: ModelParams, path: str | os.PathLike) -> None:
    with open(path, "wb") as f:
        f.write(encode_model(params))


def load_model(path: str | os.PathLike) -> ModelParams:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as exc:
        raise InputError(f"cannot read model file {os.fspath(path)!r}: {exc}") from exc
    return decode_model(data)
