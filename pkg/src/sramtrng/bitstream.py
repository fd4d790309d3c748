"""TRNB bitstream files.

Layout (all offsets in bytes)::

    0   4  magic  b"TRNB"
    4   1  version (1)
    5   1  flags  (bit0 = conditioned)
    6   8  bit count, little-endian unsigned
    14  -  payload, bits packed LSB-first, ceil(count / 8) bytes
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"TRNB"
VERSION = 1
FLAG_CONDITIONED = 0x01
_HEADER = struct.Struct("<4sBBQ")


class BitstreamFormatError(ValueError):
    """Malformed TRNB data; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int, path=None):
        where = f"{path}: " if path else ""
        super().__init__(f"{where}byte {offset}: {message}")
        self.offset = offset
        self.path = path


@dataclass
class Bitstream:
    bits: np.ndarray  # uint8 0/1
    conditioned: bool = False


def pack_bits(bits) -> bytes:
    return np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little").tobytes()


def unpack_bits(data: bytes, count: int) -> np.ndarray:
    arr = np.frombuffer(data, dtype=np.uint8)
    return np.unpackbits(arr, bitorder="little", count=count)


def encode(bits, conditioned: bool = False) -> bytes:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.ndim != 1:
        raise ValueError("bitstream must be one-dimensional")
    if np.any(bits > 1):
        raise ValueError("bitstream must contain only 0/1")
    flags = FLAG_CONDITIONED if conditioned else 0
    return _HEADER.pack(MAGIC, VERSION, flags, bits.size) + pack_bits(bits)


def decode(data: bytes, path=None) -> Bitstream:
    if len(data) < _HEADER.size:
        raise BitstreamFormatError(f"truncated header ({len(data)} of {_HEADER.size} bytes)",
                                   len(data), path)
    magic, version, flags, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BitstreamFormatError(f"bad magic {magic!r}", 0, path)
    if version != VERSION:
        raise BitstreamFormatError(f"unsupported version {version}", 4, path)
    if flags & ~FLAG_CONDITIONED:
        raise BitstreamFormatError(f"unknown flag bits 0x{flags:02x}", 5, path)
    need = (count + 7) // 8
    payload = data[_HEADER.size:]
    if len(payload) != need:
        raise BitstreamFormatError(
            f"payload holds {len(payload)} bytes, header declares {count} bits ({need} bytes)",
            _HEADER.size + min(len(payload), need), path)
    if count % 8:
        # padding bits in the last byte must be zero
        if payload[-1] >> (count % 8):
            raise BitstreamFormatError("nonzero padding bits", len(data) - 1, path)
    return Bitstream(unpack_bits(payload, count), bool(flags & FLAG_CONDITIONED))


def write(path, bits, conditioned: bool = False) -> None:
    Path(path).write_bytes(encode(bits, conditioned))


def read(path) -> Bitstream:
    return decode(Path(path).read_bytes(), path=str(path))
