"""Trace-driven model of the generator embedded in a drowsy-style cache.

Line reads at reduced voltage are placed only inside idle intervals of the
cache. Each read deposits ``line_entropy`` bits of entropy into the random
buffer; every 256 bits of accumulated entropy are compressed by one SHA-256
invocation running on the CPU.

Two SHA timing models are offered. Serialized (the default) stops line
reads until the running hash finishes. Overlapped lets reads keep filling
the buffer while the hash runs, pausing only when the buffer is full.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

OUTPUT_BITS = 256


@dataclass
class CacheTrngConfig:
    cpu_freq: float = 3.6e9  # Hz
    cycles_per_line_read: int = 4
    line_bits: int = 512
    line_entropy: float = 128.0
    buffer_bits: int = 1024
    sha_bps: float = 27.984e9
    overlap: bool = False

    def __post_init__(self):
        if self.cpu_freq <= 0 or self.sha_bps <= 0:
            raise ValueError("cpu_freq and sha_bps must be positive")
        if self.cycles_per_line_read < 1:
            raise ValueError("cycles_per_line_read must be >= 1")
        if not 0 < self.line_entropy <= self.line_bits:
            raise ValueError("line_entropy must lie in (0, line_bits]")
        if self.buffer_bits < OUTPUT_BITS:
            raise ValueError(f"buffer_bits must hold at least {OUTPUT_BITS} bits")

    @property
    def sha_cycles(self) -> int:
        return math.ceil(OUTPUT_BITS / self.sha_bps * self.cpu_freq)

    @property
    def reads_per_output(self) -> int:
        return math.ceil(OUTPUT_BITS / self.line_entropy)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CacheTrngConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown cachesim keys: {sorted(unknown)}")
        return cls(**d)


class TraceFormatError(ValueError):
    def __init__(self, message: str, offset: int | None = None, path=None):
        parts = [str(path)] if path else []
        if offset is not None:
            parts.append(f"byte {offset}")
        parts.append(message)
        super().__init__(": ".join(parts))
        self.offset = offset
        self.path = path


@dataclass
class IdleTrace:
    total_cycles: int
    idle_intervals: list = field(default_factory=list)

    def __post_init__(self):
        if self.total_cycles < 0:
            raise ValueError("total_cycles must be non-negative")
        self.idle_intervals = [(int(s), int(n)) for s, n in self.idle_intervals]
        end = 0
        for i, (start, length) in enumerate(self.idle_intervals):
            if start < 0 or length <= 0:
                raise ValueError(f"interval {i} ({start}, {length}) must have start >= 0, length > 0")
            if start < end:
                raise ValueError(f"interval {i} overlaps or precedes its predecessor")
            end = start + length
            if end > self.total_cycles:
                raise ValueError(f"interval {i} ends at {end}, past total_cycles {self.total_cycles}")

    @property
    def idle_cycles(self) -> int:
        return sum(n for _, n in self.idle_intervals)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["start_cycle", "length_cycles"])
        w.writerows(self.idle_intervals)
        return buf.getvalue()


def parse_trace_csv(text: str, total_cycles: int | None = None, path=None) -> IdleTrace:
    """Parse a ``start_cycle,length_cycles`` CSV.

    ``total_cycles`` defaults to the end of the last interval.
    """
    lines = text.splitlines(keepends=True)
    if not lines or lines[0].strip() != "start_cycle,length_cycles":
        raise TraceFormatError("expected header 'start_cycle,length_cycles'", 0, path)
    offset = len(lines[0].encode())
    intervals = []
    for line in lines[1:]:
        stripped = line.strip()
        if stripped:
            cells = stripped.split(",")
            try:
                if len(cells) != 2:
                    raise ValueError
                intervals.append((int(cells[0]), int(cells[1])))
            except ValueError:
                raise TraceFormatError(f"malformed row {stripped!r}", offset, path) from None
        offset += len(line.encode())
    if total_cycles is None:
        total_cycles = max((s + n for s, n in intervals), default=0)
    try:
        return IdleTrace(total_cycles, intervals)
    except ValueError as exc:
        raise TraceFormatError(str(exc), None, path) from None


def read_trace(path, total_cycles: int | None = None) -> IdleTrace:
    return parse_trace_csv(Path(path).read_text(), total_cycles, path=str(path))


@dataclass
class CacheSimReport:
    bits_generated: int
    achieved_bps: float
    line_reads: int
    sha_invocations: int
    interference_events: int
    total_cycles: int
    idle_cycles: int
    entropy_deposited: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def schedule(trace: IdleTrace, cfg: CacheTrngConfig | None = None) -> CacheSimReport:
    """Greedily fill idle intervals with line reads and hash work.

    Line reads are whole ``cycles_per_line_read`` blocks inside one idle
    interval. Hashing runs on the CPU while the cache is idle, so SHA work
    also consumes idle cycles, but it may be split across intervals. A hash
    is invoked (and its 256 bits counted) as soon as the buffer holds 256
    bits of entropy; it drains the buffer when the SHA unit starts it.
    """
    cfg = cfg or CacheTrngConfig()
    c_read = cfg.cycles_per_line_read
    c_sha = cfg.sha_cycles
    entropy = 0.0  # deposited, not yet handed to a hash
    waiting = 0  # invoked hashes not yet started (overlap mode)
    sha_left = 0  # remaining cycles of the running hash
    reads = hashes = interference = 0

    def run_sha(budget):
        # advance hash work by ``budget`` idle cycles; returns cycles unused
        nonlocal sha_left, waiting
        while True:
            if sha_left == 0 and waiting:
                waiting -= 1
                sha_left = c_sha
            if budget == 0 or sha_left == 0:
                return budget
            used = min(budget, sha_left)
            sha_left -= used
            budget -= used

    for s, length in trace.idle_intervals:
        end = s + length
        t = s
        if not cfg.overlap:
            t = end - run_sha(end - t)
            while t + c_read <= end:
                if t < s:
                    interference += 1
                t += c_read
                reads += 1
                entropy += cfg.line_entropy
                if entropy >= OUTPUT_BITS:
                    entropy -= OUTPUT_BITS
                    hashes += 1
                    sha_left = c_sha
                    t = end - run_sha(end - t)
            run_sha(end - t)
            continue
        while True:
            if entropy + OUTPUT_BITS * waiting >= cfg.buffer_bits:
                # buffer full: finish the running hash so a waiting one can start
                step = min(sha_left, end - t)
                if step == 0:
                    break
                run_sha(step)
                t += step
                continue
            if t + c_read > end:
                run_sha(end - t)
                break
            if t < s:
                interference += 1
            run_sha(c_read)
            t += c_read
            reads += 1
            entropy += cfg.line_entropy
            while entropy >= OUTPUT_BITS:
                entropy -= OUTPUT_BITS
                hashes += 1
                waiting += 1
            run_sha(0)

    bits = OUTPUT_BITS * hashes
    bps = bits * cfg.cpu_freq / trace.total_cycles if trace.total_cycles else 0.0
    return CacheSimReport(bits, bps, reads, hashes, interference, trace.total_cycles,
                          trace.idle_cycles, reads * cfg.line_entropy)


def closed_form_bps(cfg: CacheTrngConfig | None = None) -> float:
    """Throughput of a fully idle cache in the limit of a long trace."""
    cfg = cfg or CacheTrngConfig()
    read_cycles = cfg.reads_per_output * cfg.cycles_per_line_read
    if cfg.overlap:
        period = max(read_cycles, cfg.sha_cycles)
    else:
        period = read_cycles + cfg.sha_cycles
    return OUTPUT_BITS * cfg.cpu_freq / period


def synth_trace(total_cycles: int, idle_fraction: float, min_interval: int = 8,
                seed: int = 0) -> IdleTrace:
    """Seeded synthetic idle trace.

    The timeline is cut into ``min_interval``-cycle slots (the last slot
    absorbs the remainder) and a seeded random ordering of slots picks the
    idle ones; adjacent idle slots merge. Because the ordering depends only
    on the seed, traces for a larger ``idle_fraction`` contain the idle
    cycles of every smaller one.
    """
    if not 0.0 <= idle_fraction <= 1.0:
        raise ValueError("idle_fraction must lie in [0, 1]")
    if min_interval < 1 or total_cycles < 0:
        raise ValueError("min_interval must be >= 1 and total_cycles >= 0")
    n_slots = total_cycles // min_interval
    if n_slots == 0:
        return IdleTrace(total_cycles, [(0, total_cycles)] if idle_fraction == 1.0 and total_cycles else [])
    k = int(round(idle_fraction * n_slots))
    order = np.random.default_rng(seed).permutation(n_slots)
    chosen = np.zeros(n_slots, dtype=bool)
    chosen[order[:k]] = True
    intervals = []
    i = 0
    while i < n_slots:
        if not chosen[i]:
            i += 1
            continue
        j = i
        while j < n_slots and chosen[j]:
            j += 1
        stop = total_cycles if j == n_slots else j * min_interval
        intervals.append((i * min_interval, stop - i * min_interval))
        i = j
    return IdleTrace(total_cycles, intervals)
