"""Little-endian framed binary primitives shared by the file formats."""

from __future__ import annotations

import struct

import numpy as np

from .errors import DecodeError


def write_u32(fh, v: int) -> None:
    fh.write(struct.pack("<I", v))


def read_u32(fh) -> int:
    raw = fh.read(4)
    if len(raw) != 4:
        raise DecodeError("truncated stream while reading u32")
    return struct.unpack("<I", raw)[0]


def write_u8(fh, v: int) -> None:
    fh.write(struct.pack("<B", v))


def read_u8(fh) -> int:
    raw = fh.read(1)
    if len(raw) != 1:
        raise DecodeError("truncated stream while reading u8")
    return raw[0]


def write_f64(fh, v: float) -> None:
    fh.write(struct.pack("<d", v))


def read_f64(fh) -> float:
    raw = fh.read(8)
    if len(raw) != 8:
        raise DecodeError("truncated stream while reading f64")
    return struct.unpack("<d", raw)[0]


def write_str(fh, s: str) -> None:
    blob = s.encode("utf-8")
    write_u32(fh, len(blob))
    fh.write(blob)


def read_str(fh) -> str:
    n = read_u32(fh)
    raw = fh.read(n)
    if len(raw) != n:
        raise DecodeError("truncated stream while reading string")
    return raw.decode("utf-8")


def write_f64_array(fh, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    write_u32(fh, arr.ndim)
    for d in arr.shape:
        write_u32(fh, d)
    fh.write(arr.tobytes())


def read_f64_array(fh) -> np.ndarray:
    ndim = read_u32(fh)
    if ndim > 4:
        raise DecodeError(f"implausible array rank {ndim}")
    shape = tuple(read_u32(fh) for _ in range(ndim))
    count = int(np.prod(shape)) if shape else 1
    raw = fh.read(8 * count)
    if len(raw) != 8 * count:
        raise DecodeError("truncated stream while reading array data")
    return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)


def expect_magic(fh, magic: bytes, what: str) -> None:
    got = fh.read(len(magic))
    if got != magic:
        raise DecodeError(f"not a {what} file (bad magic {got!r})")
