"""UNETW1 weight files and REAL1 matrices, byte-compatible with the Rust crate."""

import json
import struct
import zlib
from pathlib import Path

import numpy as np

UNETW1_MAGIC = b"UNETW1\0\0"
REAL1_MAGIC = b"REAL1\0\0\0"


def signature(name, shape):
    return f"{name}:{'x'.join(str(d) for d in shape)}"


def fingerprint(layers):
    crc = 0
    for name, shape in layers:
        crc = zlib.crc32(signature(name, shape).encode(), crc)
    return crc & 0xFFFFFFFF


def encode_unetw1(tensors):
    """`tensors` is an ordered list of (name, float32 ndarray)."""
    out = bytearray(UNETW1_MAGIC)
    out += struct.pack("<I", len(tensors))
    for name, arr in tensors:
        arr = np.ascontiguousarray(arr, dtype="<f4")
        raw = name.encode()
        out += struct.pack("<H", len(raw)) + raw
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    out += struct.pack("<I", fingerprint([(n, a.shape) for n, a in tensors]))
    return bytes(out)


def decode_unetw1(data):
    if data[:8] != UNETW1_MAGIC:
        raise ValueError("not a UNETW1 file")
    pos = 8
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    tensors = []
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos : pos + n].decode()
        pos += n
        ndim = data[pos]
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(shape).copy()
        pos += 4 * size
        tensors.append((name, arr))
    (stored,) = struct.unpack_from("<I", data, pos)
    if pos + 4 != len(data):
        raise ValueError("trailing bytes after footer")
    if stored != fingerprint([(n, a.shape) for n, a in tensors]):
        raise ValueError("fingerprint mismatch")
    return tensors


def write_real1(path, arr, meta=None):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    rows, cols = arr.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(REAL1_MAGIC + struct.pack("<II", rows, cols) + arr.tobytes())
    if meta is not None:
        Path(str(path) + ".json").write_text(json.dumps(meta, indent=2))


def read_real1(path):
    data = Path(path).read_bytes()
    if data[:8] != REAL1_MAGIC:
        raise ValueError(f"{path}: not a REAL1 file")
    rows, cols = struct.unpack_from("<II", data, 8)
    if len(data) != 16 + 8 * rows * cols:
        raise ValueError(f"{path}: wrong length for {rows}x{cols}")
    return np.frombuffer(data, dtype="<f8", offset=16).reshape(rows, cols).copy()
