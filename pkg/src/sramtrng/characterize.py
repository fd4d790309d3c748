"""Entropy characterization of undervolted SRAM rows.

Write a data pattern into every row, read each row ``reads`` times at an
operating point, and turn per-cell ones counts into Shannon entropy.
Entropy is summed per row and per 32-cell window; with 16-column rows a
window is two vertically adjacent rows.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .faultmodel import (
    MIN_OPERATING_MV,
    OperatingPoint,
    ReadStream,
    SramBlock,
    pattern_bits,
    read_all_rows,
)

WINDOW_BITS = 32
STREAM_CHARACTERIZE = 1

_SINGLE = {"F": 0xFFFF, "A": 0xAAAA, "5": 0x5555, "0": 0x0000, "3": 0x3333, "C": 0xCCCC}
_ALTERNATING = {"A5": (0xAAAA, 0x5555), "C3": (0xCCCC, 0x3333)}
PATTERN_KINDS = ("F", "A", "5", "0", "3", "C", "A5", "C3")


class NoEntropySourceError(RuntimeError):
    """Raised when a characterization found no row with nonzero entropy."""


@dataclass(frozen=True)
class DataPattern:
    kind: str = "F"

    def __post_init__(self):
        if self.kind not in PATTERN_KINDS:
            raise ValueError(f"unknown data pattern {self.kind!r}; expected one of {PATTERN_KINDS}")

    def row_value(self, row: int, width: int = 16) -> int:
        if self.kind in _SINGLE:
            word = _SINGLE[self.kind]
        else:
            word = _ALTERNATING[self.kind][row % 2]
        # 16-bit words repeat across wider rows and are truncated for narrower ones
        reps = -(-width // 16)
        full = int(f"{word:016b}" * reps, 2)
        return full >> (16 * reps - width)

    def __str__(self) -> str:
        return self.kind


def shannon_entropy(p1: float) -> float:
    """Binary Shannon entropy in bits, with 0*log2(0) taken as 0."""
    if not 0.0 <= p1 <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {p1!r}")
    h = 0.0
    for p in (p1, 1.0 - p1):
        if p > 0.0:
            h -= p * math.log2(p)
    return h


def binary_entropy(p) -> np.ndarray:
    """Vectorized :func:`shannon_entropy`."""
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    out = np.zeros_like(p)
    m = (p > 0) & (p < 1)
    pm = p[m]
    out[m] = -(pm * np.log2(pm) + (1 - pm) * np.log2(1 - pm))
    return out


def window_sums(values: np.ndarray, rows_per_bank: int) -> np.ndarray:
    """Sum per-cell values over consecutive 32-cell windows within each bank.

    Cells are taken in row-major order, so with 16 columns each window is
    rows ``(2i, 2i+1)``.  A trailing partial window is kept.
    """
    total_rows, cols = values.shape
    out = []
    for start in range(0, total_rows, rows_per_bank):
        flat = values[start:start + rows_per_bank].reshape(-1)
        idx = np.arange(0, flat.size, WINDOW_BITS)
        out.append(np.add.reduceat(flat, idx))
    return np.concatenate(out)


def window_start_row(window: int, rows_per_bank: int, cols: int) -> int:
    per_bank = -(-rows_per_bank * cols // WINDOW_BITS)
    bank, local = divmod(window, per_bank)
    return bank * rows_per_bank + (local * WINDOW_BITS) // cols


def window_rows(window: int, rows_per_bank: int, cols: int) -> range:
    per_bank = -(-rows_per_bank * cols // WINDOW_BITS)
    bank, local = divmod(window, per_bank)
    first = (local * WINDOW_BITS) // cols
    last = min(-(-((local + 1) * WINDOW_BITS) // cols), rows_per_bank)
    return range(bank * rows_per_bank + first, bank * rows_per_bank + last)


@dataclass
class EntropyRecord:
    op: OperatingPoint
    pattern: DataPattern
    reads: int
    ones_count: np.ndarray
    cell_entropy: np.ndarray
    row_entropy: np.ndarray
    block32_entropy: np.ndarray
    rows_per_bank: int

    @property
    def max_block32(self) -> float:
        return float(self.block32_entropy.max())

    @property
    def avg_block32(self) -> float:
        return float(self.block32_entropy.mean())

    def best_window(self) -> int:
        # argmax returns the first maximum, i.e. the lowest row
        return int(np.argmax(self.block32_entropy))

    def best_row_in_window(self, window: int) -> int:
        rows = window_rows(window, self.rows_per_bank, self.cell_entropy.shape[1])
        ent = self.row_entropy[rows.start:rows.stop]
        return rows.start + int(np.argmax(ent))


def entropy_record(ones_count: np.ndarray, reads: int, op: OperatingPoint, pattern: DataPattern,
                   rows_per_bank: int) -> EntropyRecord:
    cell = binary_entropy(ones_count / reads)
    return EntropyRecord(
        op=op,
        pattern=pattern,
        reads=reads,
        ones_count=ones_count,
        cell_entropy=cell,
        row_entropy=cell.sum(axis=1),
        block32_entropy=window_sums(cell, rows_per_bank),
        rows_per_bank=rows_per_bank,
    )


def write_pattern(block: SramBlock, pattern: DataPattern) -> None:
    cols = block.geometry.cols
    for r in range(block.geometry.total_rows):
        local = r % block.geometry.rows
        block.stored[r] = pattern_bits(pattern.row_value(local, cols), cols)


def characterize_rows(block: SramBlock, op: OperatingPoint, pattern: DataPattern = DataPattern("F"),
                      reads: int = 1000, stream: ReadStream | None = None) -> EntropyRecord:
    """Write ``pattern`` to every row, read every row ``reads`` times, measure entropy."""
    if reads < 1:
        raise ValueError("reads must be >= 1")
    if isinstance(pattern, str):
        pattern = DataPattern(pattern)
    if stream is None:
        stream = ReadStream(block.seed, STREAM_CHARACTERIZE)
    write_pattern(block, pattern)
    counts = read_all_rows(block, op, stream, reads)
    return entropy_record(counts, reads, op, pattern, block.geometry.rows)


def default_voltages(start: float = MIN_OPERATING_MV, stop: float = 580.0, step: float = 5.0) -> list[float]:
    n = int(round((stop - start) / step))
    return [start + i * step for i in range(n + 1)]


@dataclass
class SweepConfig:
    voltages: list = field(default_factory=default_voltages)
    frequencies: list = field(default_factory=lambda: [200.0])
    temperatures: list = field(default_factory=lambda: [45.0])
    patterns: list = field(default_factory=lambda: ["F"])
    reads_per_row: int = 1000
    voltage_step: float = 5.0

    def __post_init__(self):
        for name in ("voltages", "frequencies", "temperatures", "patterns"):
            if not list(getattr(self, name)):
                raise ValueError(f"sweep axis {name!r} is empty")
        if self.reads_per_row < 1:
            raise ValueError("reads_per_row must be >= 1")
        if self.voltage_step <= 0:
            raise ValueError("voltage_step must be positive")
        self.patterns = [p if isinstance(p, DataPattern) else DataPattern(str(p)) for p in self.patterns]

    def points(self):
        for f, t, v, p in itertools.product(self.frequencies, self.temperatures, self.voltages,
                                            self.patterns):
            yield OperatingPoint(float(v), float(f), float(t)), p

    def to_dict(self) -> dict:
        return {
            "voltages": list(self.voltages),
            "frequencies": list(self.frequencies),
            "temperatures": list(self.temperatures),
            "patterns": [p.kind for p in self.patterns],
            "reads_per_row": self.reads_per_row,
            "voltage_step": self.voltage_step,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        known = {"voltages", "frequencies", "temperatures", "patterns", "reads_per_row", "voltage_step"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown sweep keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class PointSummary:
    op: OperatingPoint
    pattern: DataPattern
    max_block32_entropy: float
    avg_block32_entropy: float
    best_block: int
    best_window_row: int
    best_row: int
    best_row_entropy: float

    def to_dict(self) -> dict:
        return {
            **self.op.to_dict(),
            "pattern": self.pattern.kind,
            "max_block32_entropy": self.max_block32_entropy,
            "avg_block32_entropy": self.avg_block32_entropy,
            "best_block": self.best_block,
            "best_window_row": self.best_window_row,
            "best_row": self.best_row,
            "best_row_entropy": self.best_row_entropy,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PointSummary":
        return cls(OperatingPoint.from_dict(d), DataPattern(d["pattern"]),
                   float(d["max_block32_entropy"]), float(d["avg_block32_entropy"]),
                   int(d["best_block"]), int(d["best_window_row"]), int(d["best_row"]),
                   float(d["best_row_entropy"]))


@dataclass
class CharacterizationReport:
    points: list
    seeds: list
    reads_per_row: int

    def _best(self) -> PointSummary:
        if not self.points:
            raise ValueError("empty characterization report")
        top = max(p.max_block32_entropy for p in self.points)
        cands = [p for p in self.points if p.max_block32_entropy == top]
        return min(cands, key=lambda p: (p.best_block, p.best_window_row, p.op.voltage))

    @property
    def best_op(self) -> OperatingPoint:
        return self._best().op

    @property
    def best_row(self) -> tuple[int, int]:
        b = self._best()
        return b.best_block, b.best_window_row

    @property
    def max_block32_entropy(self) -> float:
        return self._best().max_block32_entropy

    @property
    def avg_block32_entropy(self) -> float:
        return self._best().avg_block32_entropy

    def select(self, **match) -> list:
        """Point summaries whose op/pattern fields equal the given values."""
        out = []
        for p in self.points:
            d = {"voltage": p.op.voltage, "frequency": p.op.frequency,
                 "temperature": p.op.temperature, "pattern": p.pattern.kind}
            if all(d[k] == v for k, v in match.items()):
                out.append(p)
        return out

    def to_dict(self) -> dict:
        b = self._best()
        return {
            "seeds": list(self.seeds),
            "reads_per_row": self.reads_per_row,
            "best": {
                "block": b.best_block,
                "row": b.best_window_row,
                "op": b.op.to_dict(),
                "pattern": b.pattern.kind,
                "max_block32_entropy": b.max_block32_entropy,
                "avg_block32_entropy": b.avg_block32_entropy,
            },
            "points": [p.to_dict() for p in self.points],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CharacterizationReport":
        return cls([PointSummary.from_dict(p) for p in d["points"]], list(d["seeds"]),
                   int(d["reads_per_row"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["voltage_mv", "freq_mhz", "temp_c", "pattern", "max_block32_entropy",
                    "avg_block32_entropy"])
        for p in self.points:
            w.writerow([p.op.voltage, p.op.frequency, p.op.temperature, p.pattern.kind,
                        repr(p.max_block32_entropy), repr(p.avg_block32_entropy)])
        return buf.getvalue()


def thread_limit(default: int | None = None) -> int:
    """Worker cap from ``TURAN_THREADS`` (falls back to the CPU count)."""
    env = os.environ.get("TURAN_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"TURAN_THREADS must be an integer, got {env!r}") from None
        return max(1, n)
    return default or os.cpu_count() or 1


def _characterize_task(block: SramBlock, op: OperatingPoint, pattern: DataPattern, reads: int):
    rec = characterize_rows(block.copy(), op, pattern, reads)
    w = rec.best_window()
    start = window_start_row(w, rec.rows_per_bank, rec.cell_entropy.shape[1])
    row = rec.best_row_in_window(w)
    return (rec.block32_entropy, start, row, float(rec.row_entropy[row]))


def sweep(blocks: list, cfg: SweepConfig, workers: int | None = None) -> CharacterizationReport:
    """Characterize every block at every point of the sweep grid.

    Tasks run on a thread pool capped by ``TURAN_THREADS``; results are
    merged in grid order, so the report does not depend on scheduling.
    """
    if not blocks:
        raise ValueError("sweep needs at least one block")
    points = list(cfg.points())
    tasks = [(pi, bi) for pi in range(len(points)) for bi in range(len(blocks))]
    n_workers = min(workers or thread_limit(), len(tasks))

    def run(task):
        pi, bi = task
        op, pat = points[pi]
        return _characterize_task(blocks[bi], op, pat, cfg.reads_per_row)

    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as ex:
            results = list(ex.map(run, tasks))
    else:
        results = [run(t) for t in tasks]

    by_task = dict(zip(tasks, results))
    summaries = []
    for pi, (op, pat) in enumerate(points):
        per_block = [by_task[(pi, bi)] for bi in range(len(blocks))]
        maxima = [float(r[0].max()) for r in per_block]
        top = max(maxima)
        bi = maxima.index(top)
        all_windows = np.concatenate([r[0] for r in per_block])
        _, start, row, row_ent = per_block[bi]
        summaries.append(PointSummary(op, pat, top, float(all_windows.mean()), bi, start, row,
                                      row_ent))
    return CharacterizationReport(summaries, [b.seed for b in blocks], cfg.reads_per_row)


def select_entropy_source(report: CharacterizationReport):
    """Pick the highest-entropy row for generation.

    Returns ``(block, row, op, row_entropy)``: the best 32-cell window is
    located first (ties to the lowest block/row/voltage), then its single
    highest-entropy row is chosen so the per-read entropy credit covers
    only bits that are actually read.
    """
    if not report.points:
        raise ValueError("empty characterization report")
    best = report._best()
    if best.max_block32_entropy <= 0.0 or best.best_row_entropy <= 0.0:
        raise NoEntropySourceError("no row with nonzero entropy in the characterization report")
    return best.best_block, best.best_row, best.op, best.best_row_entropy
