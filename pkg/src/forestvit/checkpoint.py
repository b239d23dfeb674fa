"""Binary checkpoint container.

Layout (all integers little-endian):

    bytes 0..3   magic b"PWCK"
    u32          format version (currently 1)
    u64          header byte length
    bytes        header, UTF-8 "key=value\\n" lines sorted by key
    u32          block count
    per block    u32 name length, name UTF-8, u32 ndim, ndim * u64 dims,
                 then the float64 values in row-major order

Blocks are written sorted by name and every value is float64, so saving the
result of a load reproduces the original file byte for byte.
"""

from __future__ import annotations

import struct
from typing import Dict, Tuple

import numpy as np

from .errors import FormatError

MAGIC = b"PWCK"
VERSION = 1


def header_to_text(header: Dict[str, str]) -> str:
    for key, value in header.items():
        if "=" in key or "\n" in key:
            raise FormatError(f"invalid header key: {key!r}")
        if "\n" in str(value):
            raise FormatError(f"invalid header value for {key!r}")
    return "".join(f"{k}={header[k]}\n" for k in sorted(header))


def header_from_text(text: str) -> Dict[str, str]:
    header: Dict[str, str] = {}
    for line in text.splitlines():
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"malformed header line: {line!r}")
        key, value = line.split("=", 1)
        header[key] = value
    return header


def save_checkpoint(path: str, header: Dict[str, str],
                    blocks: Dict[str, np.ndarray]) -> None:
    head = header_to_text(header).encode("utf-8")
    out = [MAGIC, struct.pack("<I", VERSION),
           struct.pack("<Q", len(head)), head,
           struct.pack("<I", len(blocks))]
    for name in sorted(blocks):
        arr = np.asarray(blocks[name], dtype=np.float64)
        raw_name = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw_name)))
        out.append(raw_name)
        out.append(struct.pack("<I", arr.ndim))
        for dim in arr.shape:
            out.append(struct.pack("<Q", dim))
        out.append(arr.astype("<f8").tobytes(order="C"))
    with open(path, "wb") as fh:
        fh.write(b"".join(out))


def _take(buf: bytes, offset: int, count: int) -> Tuple[bytes, int]:
    if offset + count > len(buf):
        raise FormatError("checkpoint truncated")
    return buf[offset:offset + count], offset + count


def load_checkpoint(path: str) -> Tuple[Dict[str, str], Dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        buf = fh.read()
    raw, off = _take(buf, 0, 4)
    if raw != MAGIC:
        raise FormatError(f"bad checkpoint magic: {raw!r}")
    raw, off = _take(buf, off, 4)
    version = struct.unpack("<I", raw)[0]
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version: {version}")
    raw, off = _take(buf, off, 8)
    head_len = struct.unpack("<Q", raw)[0]
    raw, off = _take(buf, off, head_len)
    header = header_from_text(raw.decode("utf-8"))
    raw, off = _take(buf, off, 4)
    count = struct.unpack("<I", raw)[0]
    blocks: Dict[str, np.ndarray] = {}
    for _ in range(count):
        raw, off = _take(buf, off, 4)
        name_len = struct.unpack("<I", raw)[0]
        raw, off = _take(buf, off, name_len)
        name = raw.decode("utf-8")
        raw, off = _take(buf, off, 4)
        ndim = struct.unpack("<I", raw)[0]
        shape = []
        for _ in range(ndim):
            raw, off = _take(buf, off, 8)
            shape.append(struct.unpack("<Q", raw)[0])
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw, off = _take(buf, off, 8 * size)
        blocks[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    if off != len(buf):
        raise FormatError("trailing bytes after last checkpoint block")
    return header, blocks
