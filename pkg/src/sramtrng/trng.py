"""True random number generation from undervolted SRAM reads.

The pipeline reads one characterized high-entropy row at its best
operating point until the credited entropy reaches the target (256 bits),
then compresses the raw reads with SHA-256.  Direct mode instead emits the
raw sensed bits of individual cells whose measured entropy is
indistinguishable from a fair coin.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import bitstream
from .characterize import binary_entropy
from .faultmodel import (
    OperatingPoint,
    ReadStream,
    SramBlock,
    read_all_rows,
    read_row_many,
    write_row,
)

DIGEST_BITS = 256
STREAM_GENERATE = 2
STREAM_DIRECT = 3


@dataclass
class TrngConfig:
    row_entropy: float
    op: OperatingPoint = field(default_factory=lambda: OperatingPoint(550.0))
    block: int = 0
    row: int = 0
    entropy_target: float = 256.0
    direct_cell_threshold: float = 0.9999

    def __post_init__(self):
        if not self.entropy_target > 0:
            raise ValueError("entropy_target must be positive")
        if not self.row_entropy > 0:
            raise ValueError("row_entropy must be positive")
        if not 0 < self.direct_cell_threshold <= 1:
            raise ValueError("direct_cell_threshold must lie in (0, 1]")

    def to_dict(self) -> dict:
        return {
            "row_entropy": self.row_entropy,
            "op": self.op.to_dict(),
            "block": self.block,
            "row": self.row,
            "entropy_target": self.entropy_target,
            "direct_cell_threshold": self.direct_cell_threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrngConfig":
        known = {"row_entropy", "op", "block", "row", "entropy_target", "direct_cell_threshold"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown trng keys: {sorted(unknown)}")
        kw = dict(d)
        if "op" in kw:
            kw["op"] = OperatingPoint.from_dict(kw["op"])
        return cls(**kw)


@dataclass
class RandomBitstream:
    bits: np.ndarray
    conditioned: bool
    n_reads_consumed: int
    source_op: OperatingPoint

    def __len__(self) -> int:
        return int(self.bits.size)

    def to_bytes(self) -> bytes:
        return bitstream.encode(self.bits, self.conditioned)


def n_reads_required(entropy_target: float, row_entropy: float) -> int:
    if not row_entropy > 0:
        raise ValueError(f"row_entropy must be positive, got {row_entropy!r}")
    if not entropy_target > 0:
        raise ValueError(f"entropy_target must be positive, got {entropy_target!r}")
    ratio = entropy_target / row_entropy
    # absorb float noise so that e.g. 256 / (256 / 3) still needs 3 reads
    n = math.ceil(ratio - 1e-9 * ratio)
    return max(1, n)


def sha256(message: bytes) -> bytes:
    return hashlib.sha256(message).digest()


def _all_ones(width: int) -> np.ndarray:
    return np.ones(width, dtype=np.uint8)


def accumulate_raw(block: SramBlock, cfg: TrngConfig, stream: ReadStream) -> RandomBitstream:
    """Write all-ones to the source row and read it until the entropy target is met."""
    n = n_reads_required(cfg.entropy_target, cfg.row_entropy)
    write_row(block, cfg.row, _all_ones(block.geometry.cols))
    reads = read_row_many(block, cfg.row, cfg.op, stream, n)
    return RandomBitstream(reads.reshape(-1), False, n, cfg.op)


def condition(raw_bits) -> np.ndarray:
    """SHA-256 of the LSB-first packed raw bits, as 256 bits (LSB-first per byte)."""
    digest = sha256(bitstream.pack_bits(raw_bits))
    return np.unpackbits(np.frombuffer(digest, dtype=np.uint8), bitorder="little")


def generate(block: SramBlock, cfg: TrngConfig, n_bits: int,
             stream: ReadStream | None = None) -> RandomBitstream:
    """Produce ``n_bits`` conditioned random bits (one digest per accumulated raw block)."""
    if n_bits <= 0:
        raise ValueError("n_bits must be positive")
    if stream is None:
        stream = ReadStream(block.seed, STREAM_GENERATE)
    n_digests = -(-n_bits // DIGEST_BITS)
    out = np.empty(n_digests * DIGEST_BITS, dtype=np.uint8)
    consumed = 0
    for i in range(n_digests):
        raw = accumulate_raw(block, cfg, stream)
        out[i * DIGEST_BITS:(i + 1) * DIGEST_BITS] = condition(raw.bits)
        consumed += raw.n_reads_consumed
    return RandomBitstream(out[:n_bits], True, consumed, cfg.op)


def _screen_bound(reads: int, threshold: float) -> float:
    """Loosened entropy threshold for a ``reads``-sample screening pass.

    A cell that truly meets ``threshold`` has |p - 0.5| <= d; at ``reads``
    samples its estimate stays within d + 6 standard errors essentially
    always, so screening at that wider deviation drops no real candidate.
    """
    d = _deviation_for_entropy(threshold)
    wide = min(0.5, d + 6.0 * 0.5 / math.sqrt(reads))
    return float(binary_entropy(0.5 - wide))


def _deviation_for_entropy(h: float) -> float:
    lo, hi = 0.0, 0.5
    for _ in range(80):
        mid = (lo + hi) / 2
        if binary_entropy(0.5 - mid) >= h:
            lo = mid
        else:
            hi = mid
    return lo


def find_direct_cells(block: SramBlock, op: OperatingPoint, reads: int = 100_000,
                      threshold: float = 0.9999, stream: ReadStream | None = None,
                      confirm: int = 1) -> list:
    """Cells whose measured entropy over ``reads`` reads of all-ones is >= ``threshold``.

    Every read is preceded by rewriting all-ones, as in generation, so the
    destructive channel cannot erase a candidate mid-measurement.

    Rows are screened with progressively longer read runs (1000, 10x more,
    ... up to ``reads``) and only rows still holding a plausible candidate
    are read further; the final decision uses the last ``reads`` reads of
    each surviving row.

    A single measurement over many cells admits cells whose true bias
    exceeds the threshold by sampling luck. Each of ``confirm`` further
    independent runs of ``reads`` reads must also clear the threshold.
    """
    if reads < 1000:
        raise ValueError("reads must be >= 1000")
    if confirm < 0:
        raise ValueError("confirm must be >= 0")
    if stream is None:
        stream = ReadStream(block.seed, STREAM_DIRECT)
    cols = block.geometry.cols
    for r in range(block.geometry.total_rows):
        write_row(block, r, _all_ones(cols))
    rows = np.arange(block.geometry.total_rows)
    n = 1000
    while True:
        n = min(n, reads)
        counts = read_all_rows(block, op, stream, n, rows=rows, refresh=True)
        ent = binary_entropy(counts / n)
        if n == reads:
            ok = ent >= threshold
            for _ in range(confirm):
                live = np.any(ok, axis=1)
                if not live.any():
                    break
                again = read_all_rows(block, op, stream, reads, rows=rows[live], refresh=True)
                ok[live] &= binary_entropy(again / reads) >= threshold
            hits = np.argwhere(ok)
            return sorted((int(rows[i]), int(c)) for i, c in hits)
        keep = np.any(ent >= _screen_bound(n, threshold), axis=1)
        rows = rows[keep]
        if rows.size == 0:
            return []
        n *= 10


def direct_stream(block: SramBlock, cell: tuple, op: OperatingPoint, n_bits: int,
                  stream: ReadStream | None = None) -> RandomBitstream:
    """Unconditioned bits from one cell: its sensed value over ``n_bits`` write-then-read cycles."""
    row, col = cell
    if stream is None:
        stream = ReadStream(block.seed, STREAM_DIRECT + 1)
    write_row(block, row, _all_ones(block.geometry.cols))
    reads = read_row_many(block, row, op, stream, n_bits, refresh=True)
    return RandomBitstream(reads[:, col].copy(), False, n_bits, op)
