"""Binary dataset cache.

Layout (little-endian)::

    b"AHWC"        magic
    u16            format version (1)
    u32            header length, then UTF-8 JSON header:
                   {"n", "length", "channels", "segments", "provenance"}
    f64 [n, length, channels]   windows
    i64 [n] x 4                 labels, subjects, window_segment, offsets
    i64 [segments, 4]           segment table
    u32            CRC-32 of all preceding bytes
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from .dataset import WindowedDataset

MAGIC = b"AHWC"
VERSION = 1


class CacheError(ValueError):
    """Cache is truncated, corrupt, or written by another format version."""


def write_cache(ds: WindowedDataset) -> bytes:
    n, length, channels = ds.x.shape
    header = json.dumps({
        "n": n, "length": length, "channels": channels, "segments": len(ds.segments),
        "provenance": ds.provenance,
    }, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<HI", VERSION, len(header)), header,
             np.ascontiguousarray(ds.x, dtype="<f8").tobytes()]
    for arr in (ds.labels, ds.subjects, ds.window_segment, ds.offsets, ds.segments):
        parts.append(np.ascontiguousarray(arr, dtype="<i8").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def read_cache(data: bytes) -> WindowedDataset:
    if len(data) < 14 or data[:4] != MAGIC:
        raise CacheError("not a dataset cache (bad magic or truncated)")
    version, hlen = struct.unpack("<HI", data[4:10])
    if version != VERSION:
        raise CacheError(f"cache format version {version} does not match expected {VERSION}")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CacheError("cache checksum mismatch (truncated or corrupt)")
    try:
        header = json.loads(body[10:10 + hlen])
    except ValueError as exc:
        raise CacheError(f"unreadable cache header: {exc}") from None
    n, length, channels, m = header["n"], header["length"], header["channels"], header["segments"]
    pos = 10 + hlen

    def take(count, dtype, shape):
        nonlocal pos
        nbytes = count * 8
        if pos + nbytes > len(body):
            raise CacheError("cache payload is shorter than its header declares")
        arr = np.frombuffer(body, dtype=dtype, count=count, offset=pos).reshape(shape)
        pos += nbytes
        return arr.astype(np.float64 if dtype == "<f8" else np.int64)

    x = take(n * length * channels, "<f8", (n, length, channels))
    labels, subjects, seg, offsets = (take(n, "<i8", (n,)) for _ in range(4))
    segments = take(m * 4, "<i8", (m, 4))
    if pos != len(body):
        raise CacheError("cache has trailing bytes")
    return WindowedDataset(x, labels, subjects, seg, offsets, segments, header["provenance"])
