"""Binary weight files.

Layout (all integers little-endian)::

    b"AHWT"                 magic
    u16                     format version (1)
    32 bytes                SHA-256 of the model's canonical spec encoding
    u32                     tensor count
    per tensor:
        u16 + utf-8         tensor name ("<layer>.<param>")
        u8 + u32 * ndim     shape
        f64 * size          row-major payload
    u32                     CRC-32 of every preceding byte
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .model import ParameterBundle, expected_shapes
from .spec import ModelSpec

MAGIC = b"AHWT"
VERSION = 1


class WeightFileError(ValueError):
    """Weight stream is truncated, corrupt, or of an unknown version."""


class WeightMismatchError(WeightFileError):
    """Weight stream is intact but belongs to a different model."""


def save_weights(params: ParameterBundle, spec: ModelSpec) -> bytes:
    parts = [MAGIC, struct.pack("<H", VERSION), spec.fingerprint(), struct.pack("<I", len(params))]
    for name, tensor in params.items():
        encoded = name.encode()
        parts.append(struct.pack("<H", len(encoded)) + encoded)
        parts.append(struct.pack(f"<B{tensor.ndim}I", tensor.ndim, *tensor.shape))
        parts.append(np.ascontiguousarray(tensor, dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise WeightFileError("weight stream is truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_weights(data: bytes, spec: ModelSpec) -> ParameterBundle:
    if len(data) < 4 + 2 + 32 + 4 + 4 or data[:4] != MAGIC:
        raise WeightFileError("not a weight file (bad magic or truncated header)")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise WeightFileError("weight stream checksum mismatch (corrupt or truncated)")
    reader = _Reader(body)
    reader.take(4)
    (version,) = reader.unpack("<H")
    if version != VERSION:
        raise WeightFileError(f"unsupported weight file version {version}")
    fingerprint = reader.take(32)
    (count,) = reader.unpack("<I")
    tensors = {}
    for _ in range(count):
        (n,) = reader.unpack("<H")
        name = reader.take(n).decode()
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I")
        size = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(reader.take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    if reader.pos != len(body):
        raise WeightFileError("trailing bytes after last tensor")

    expected = expected_shapes(spec)
    got = {k: v.shape for k, v in tensors.items()}
    if got != expected or list(got) != list(expected):
        total = sum(int(np.prod(s)) for s in got.values())
        want = sum(int(np.prod(s)) for s in expected.values())
        raise WeightMismatchError(
            f"weights hold {total} parameters in {len(got)} tensors; "
            f"model {spec.name!r} needs {want} in {len(expected)}"
        )
    if fingerprint != spec.fingerprint():
        raise WeightMismatchError(f"weights were saved for a different spec than {spec.name!r}")
    return ParameterBundle(tensors)
