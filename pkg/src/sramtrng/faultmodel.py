"""Behavioral model of an undervolted SRAM block.

Every cell carries a metastability midpoint ``v_meta``.  A read at an
operating point whose effective voltage sits well above ``v_meta`` returns
the stored bit; well below it the sense amplifier always resolves to 0; in
between the sensed bit is a biased coin.  A rare destructive channel flips
the stored value itself.

All randomness is counter based: the uniforms consumed by the ``k``-th read
of a row depend only on ``(seed, bank, row, k)``, so replays and parallel
sweeps reproduce bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.special import expit

NOMINAL_MV = 1000.0
MIN_OPERATING_MV = 535.0

# Philox4x64 yields 4 words per counter step; each cell read uses 3 uniforms.
_WORDS_PER_CELL = 3
_PURPOSE_CELLS = 0x5EED
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SramGeometry:
    rows: int = 1024
    cols: int = 16
    blocks: int = 1

    def __post_init__(self):
        for name in ("rows", "cols", "blocks"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"geometry.{name} must be a positive integer, got {value!r}")

    @property
    def total_rows(self) -> int:
        return self.rows * self.blocks


@dataclass(frozen=True)
class OperatingPoint:
    voltage: float = NOMINAL_MV  # mV
    frequency: float = 200.0  # MHz
    temperature: float = 45.0  # degC

    def __post_init__(self):
        if not (self.voltage > 0 and math.isfinite(self.voltage)):
            raise ValueError(f"voltage must be positive, got {self.voltage!r}")
        if not (self.frequency > 0 and math.isfinite(self.frequency)):
            raise ValueError(f"frequency must be positive, got {self.frequency!r}")
        if not math.isfinite(self.temperature):
            raise ValueError("temperature must be finite")

    def at_nominal(self) -> "OperatingPoint":
        return OperatingPoint(NOMINAL_MV, self.frequency, self.temperature)

    def to_dict(self) -> dict:
        return {"voltage_mv": self.voltage, "freq_mhz": self.frequency, "temp_c": self.temperature}

    @classmethod
    def from_dict(cls, d: dict) -> "OperatingPoint":
        return cls(float(d["voltage_mv"]), float(d["freq_mhz"]), float(d["temp_c"]))


@dataclass(frozen=True)
class FaultModelConfig:
    """Calibration knobs of the fault model.

    The defaults here are placeholders that keep the model well defined;
    the calibrated values ship in ``data/default_config.json`` and are
    loaded with :func:`sramtrng.config.default_fault_config`.
    """

    v50: float = 550.0  # mV, population mean of v_meta
    sigma_frac: float = 0.20
    a_slope: float = 2.0  # mV
    q_gamma: float = 0.02  # 1/mV
    kappa_f: float = 40.0  # mV per log2(MHz)
    kappa_t: float = 0.75  # mV per degC
    rho0: float = 0.05
    f_ref: float = 200.0  # MHz
    t_ref: float = 45.0  # degC
    d_max: float = 0.04  # upper bound of the per-cell destructive scale

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValueError(f"{f.name} must be a finite number, got {value!r}")
        if not 0 < self.sigma_frac < 1:
            raise ValueError("sigma_frac must lie in (0, 1)")
        if not 0 <= self.rho0 <= 1:
            raise ValueError("rho0 must lie in [0, 1]")
        if not 0 <= self.d_max <= 0.04:
            raise ValueError("d_max must lie in [0, 0.04]")
        if self.a_slope <= 0:
            raise ValueError("a_slope must be positive")
        if self.v50 <= 0 or self.f_ref <= 0:
            raise ValueError("v50 and f_ref must be positive")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "FaultModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown fault-model keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class CellParams:
    v_meta: float
    a_slope: float
    d_prob: float


@dataclass
class FailureClassReport:
    access_failure_fraction: float
    read_failure_fraction: float
    trials: int
    voltage: float


@dataclass
class SramBlock:
    """A seeded array of cells.

    Rows of all banks are addressed through one flat index
    ``bank * geometry.rows + row``; per-cell arrays have shape
    ``(geometry.total_rows, geometry.cols)``.
    """

    geometry: SramGeometry
    config: FaultModelConfig
    seed: int
    v_meta: np.ndarray
    a_slope: np.ndarray
    d_prob: np.ndarray
    stored: np.ndarray = field(repr=False)

    def cell(self, row: int, col: int) -> CellParams:
        return CellParams(float(self.v_meta[row, col]), float(self.a_slope[row, col]),
                          float(self.d_prob[row, col]))

    def bank_of(self, row: int) -> tuple[int, int]:
        return divmod(row, self.geometry.rows)

    def copy(self) -> "SramBlock":
        return SramBlock(self.geometry, self.config, self.seed, self.v_meta, self.a_slope,
                         self.d_prob, self.stored.copy())


def _key(seed: int, *words: int) -> np.ndarray:
    lo = 0
    for w in words:
        lo = (lo * 0x100000001B3 + (int(w) & 0xFFFFFFFF)) & _MASK64
    return np.array([int(seed) & _MASK64, lo], dtype=np.uint64)


def build_block(seed: int, geometry: SramGeometry = SramGeometry(),
                config: FaultModelConfig = FaultModelConfig()) -> SramBlock:
    """Draw every cell's parameters from generators keyed by ``(seed, bank)``."""
    if not isinstance(geometry, SramGeometry):
        raise TypeError("geometry must be an SramGeometry")
    total, cols = geometry.total_rows, geometry.cols
    v_meta = np.empty((total, cols))
    d_prob = np.empty((total, cols))
    sigma = config.sigma_frac * config.v50
    for bank in range(geometry.blocks):
        rng = np.random.Generator(np.random.Philox(key=_key(seed, _PURPOSE_CELLS, bank)))
        sl = slice(bank * geometry.rows, (bank + 1) * geometry.rows)
        v_meta[sl] = rng.normal(config.v50, sigma, size=(geometry.rows, cols))
        d_prob[sl] = rng.uniform(0.0, config.d_max, size=(geometry.rows, cols))
    a_slope = np.full((total, cols), config.a_slope)
    stored = np.zeros((total, cols), dtype=np.uint8)
    for arr in (v_meta, a_slope, d_prob):
        arr.setflags(write=False)
    return SramBlock(geometry, config, int(seed), v_meta, a_slope, d_prob, stored)


def effective_voltage(op: OperatingPoint, config: FaultModelConfig) -> float:
    return (op.voltage + config.kappa_f * math.log2(config.f_ref / op.frequency)
            + config.kappa_t * (op.temperature - config.t_ref))


def flip_probability(cell, stored, op: OperatingPoint, config: FaultModelConfig):
    """Return ``(a, q)``: access-failure probability and metastable bias.

    ``cell`` may be a :class:`CellParams` or anything with array-valued
    ``v_meta``/``a_slope`` attributes (an :class:`SramBlock` works), in
    which case ``stored`` broadcasts against the cell arrays.
    """
    v_eff = effective_voltage(op, config)
    v_meta = np.asarray(cell.v_meta, dtype=float)
    a = expit((v_meta - v_eff) / np.asarray(cell.a_slope, dtype=float))
    a = np.where(np.asarray(stored) == 0, config.rho0 * a, a)
    q = np.clip(0.5 + config.q_gamma * (v_eff - v_meta), 0.0, 1.0)
    if a.ndim == 0:
        return float(a), float(q)
    return a, q


def sense_one_probability(block: SramBlock, rows, op: OperatingPoint, stored=None) -> np.ndarray:
    """Probability that a non-destructive read senses 1, per cell of ``rows``."""
    s = block.stored[rows] if stored is None else stored
    a, q = flip_probability(_RowView(block, rows), s, op, block.config)
    return (1.0 - a) * s + a * q


class _RowView:
    __slots__ = ("v_meta", "a_slope")

    def __init__(self, block: SramBlock, rows):
        self.v_meta = block.v_meta[rows]
        self.a_slope = block.a_slope[rows]


class ReadStream:
    """Counter-based source of read randomness.

    Each ``(bank, row)`` owns an independent Philox stream keyed by
    ``(seed, purpose, bank, row)``; the stream object only tracks how many
    reads of each row have been consumed.  Two streams built with the same
    arguments replay identical bits.
    """

    def __init__(self, seed: int, purpose: int = 0):
        self.seed = int(seed)
        self.purpose = int(purpose)
        self._pos: dict[tuple[int, int], int] = {}

    def position(self, bank: int, row: int) -> int:
        return self._pos.get((bank, row), 0)

    def seek(self, bank: int, row: int, read_index: int) -> None:
        self._pos[(bank, row)] = int(read_index)

    def uniforms(self, bank: int, row: int, n_reads: int, cols: int) -> np.ndarray:
        """Uniforms of shape ``(n_reads, cols, 3)`` for the next reads of a row."""
        start = self.position(bank, row)
        words = cols * _WORDS_PER_CELL
        # one counter step = 4 words, so round each read's slot up to whole steps
        steps_per_read = -(-words // 4)
        counter = np.array([start * steps_per_read, 0, 0, 0], dtype=np.uint64)
        bitgen = np.random.Philox(key=_key(self.seed, self.purpose, bank, row), counter=counter)
        raw = bitgen.random_raw(n_reads * steps_per_read * 4).reshape(n_reads, steps_per_read * 4)
        raw = raw[:, :words].reshape(n_reads, cols, _WORDS_PER_CELL)
        self._pos[(bank, row)] = start + n_reads
        return (raw >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def _check_row(block: SramBlock, row: int) -> None:
    if not 0 <= row < block.geometry.total_rows:
        raise IndexError(f"row {row} out of range [0, {block.geometry.total_rows})")


def write_row(block: SramBlock, row: int, pattern) -> None:
    """Store ``pattern`` (an int or a bit sequence, MSB = column 0) in ``row``."""
    _check_row(block, row)
    block.stored[row] = pattern_bits(pattern, block.geometry.cols)


def pattern_bits(pattern, width: int) -> np.ndarray:
    if isinstance(pattern, (int, np.integer)):
        if not 0 <= pattern < (1 << width):
            raise ValueError(f"pattern 0x{int(pattern):X} does not fit in {width} bits")
        return np.array([(int(pattern) >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)
    bits = np.asarray(pattern, dtype=np.uint8)
    if bits.shape != (width,):
        raise ValueError(f"pattern width {bits.size} does not match row width {width}")
    if np.any(bits > 1):
        raise ValueError("pattern must contain only 0/1")
    return bits.copy()


def bits_to_int(bits) -> int:
    out = 0
    for b in np.asarray(bits).ravel():
        out = (out << 1) | int(b)
    return out


def _apply_reads(v_meta, a_slope, d_prob, stored, u, op, config, refresh=False):
    """Run ``u.shape[0]`` sequential reads over cells; mutates ``stored``.

    ``u`` has shape ``(n_reads, *cells, 3)``; returns the sensed bits with
    shape ``(n_reads, *cells)``.  With ``refresh`` the stored pattern is
    rewritten before every read, so a destructive flip only affects the
    read that caused it and ``stored`` is left unchanged.
    """
    v_eff = effective_voltage(op, config)
    a1 = expit((v_meta - v_eff) / a_slope)
    a0 = config.rho0 * a1
    q = np.clip(0.5 + config.q_gamma * (v_eff - v_meta), 0.0, 1.0)
    n = u.shape[0]
    out = np.empty(u.shape[:-1], dtype=np.uint8)

    def sense(lo, hi):
        a = np.where(stored == 1, a1, a0)
        event = u[lo:hi, ..., 0] < a
        out[lo:hi] = np.where(event, u[lo:hi, ..., 1] < q, stored)

    if not np.any(d_prob > 0):
        sense(0, n)
        return out
    if refresh:
        pattern = stored.copy()
        a = np.where(pattern == 1, a1, a0)
        cur = pattern ^ (u[..., 2] < d_prob * a).astype(np.uint8)
        a = np.where(cur == 1, a1, a0)
        out[:] = np.where(u[..., 0] < a, u[..., 1] < q, cur)
        # the pattern is rewritten before every read, so it is what the row holds
        return out
    # Destructive flips are rare: sense whole segments vectorized and only
    # stop at reads where some cell flips, looking ahead a bounded window.
    k = 0
    lookahead = 64
    while k < n:
        hi = min(n, k + lookahead)
        thresh = d_prob * np.where(stored == 1, a1, a0)
        flips = (u[k:hi, ..., 2] < thresh).reshape(hi - k, -1).any(axis=1)
        hit = np.flatnonzero(flips)
        if hit.size == 0:
            sense(k, hi)
            k = hi
            continue
        j = k + int(hit[0])
        sense(k, j)
        stored ^= (u[j, ..., 2] < thresh).astype(np.uint8)
        sense(j, j + 1)
        k = j + 1
    return out


def read_row(block: SramBlock, row: int, op: OperatingPoint, stream: ReadStream) -> np.ndarray:
    """One read of ``row``; returns the sensed bits (uint8 array of width cols)."""
    return read_row_many(block, row, op, stream, 1)[0]


def read_row_many(block: SramBlock, row: int, op: OperatingPoint, stream: ReadStream,
                  n_reads: int, refresh: bool = False) -> np.ndarray:
    """``n_reads`` consecutive reads of one row, shape ``(n_reads, cols)``.

    Identical to calling :func:`read_row` ``n_reads`` times, or, with
    ``refresh``, to writing the row's stored pattern before each call.
    """
    _check_row(block, row)
    bank, local = block.bank_of(row)
    u = stream.uniforms(bank, local, n_reads, block.geometry.cols)
    stored = block.stored[row]
    out = _apply_reads(block.v_meta[row], block.a_slope[row], block.d_prob[row], stored, u,
                       op, block.config, refresh)
    return out


def read_all_rows(block: SramBlock, op: OperatingPoint, stream: ReadStream, n_reads: int,
                  rows=None, chunk: int = 125, refresh: bool = False) -> np.ndarray:
    """Per-cell count of sensed ones over ``n_reads`` reads of each row.

    ``rows`` selects a subset (default: every row); the result has one
    line per selected row.  Each row consumes its own stream exactly as
    ``n_reads`` calls to :func:`read_row` would.
    """
    g = block.geometry
    rows = np.arange(g.total_rows) if rows is None else np.asarray(rows, dtype=np.intp)
    for r in rows:
        _check_row(block, int(r))
    counts = np.zeros((rows.size, g.cols), dtype=np.int64)
    # chunk size keeps the uniform buffer near 50 MB whatever the row count
    chunk = max(1, min(chunk, (2_000_000 // max(1, rows.size * g.cols)) or 1))
    v_meta, a_slope, d_prob = block.v_meta[rows], block.a_slope[rows], block.d_prob[rows]
    stored = block.stored[rows]
    done = 0
    while done < n_reads:
        n = min(chunk, n_reads - done)
        u = np.empty((n, rows.size, g.cols, _WORDS_PER_CELL))
        for i, r in enumerate(rows):
            bank, local = block.bank_of(int(r))
            u[:, i] = stream.uniforms(bank, local, n, g.cols)
        sensed = _apply_reads(v_meta, a_slope, d_prob, stored, u, op, block.config, refresh)
        counts += sensed.sum(axis=0, dtype=np.int64)
        done += n
    block.stored[rows] = stored
    return counts


def classify_failures(block: SramBlock, op: OperatingPoint, trials: int,
                      stream: ReadStream) -> FailureClassReport:
    """Five-step read/access failure experiment over every cell.

    Per trial: write 1 at nominal voltage, read at ``op``, return to
    nominal, read again.  An error only at the undervolted read is an
    access failure; an error surviving to the nominal read means the cell
    content was destroyed, a read failure.  ``block`` is left unchanged.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    g = block.geometry
    nominal = op.at_nominal()
    n_cells = g.total_rows * g.cols
    access = 0
    destroyed = 0
    for _ in range(trials):
        stored = np.ones((g.total_rows, g.cols), dtype=np.uint8)
        u = np.empty((2, g.total_rows, g.cols, _WORDS_PER_CELL))
        for r in range(g.total_rows):
            bank, local = block.bank_of(r)
            u[:, r] = stream.uniforms(bank, local, 2, g.cols)
        low = _apply_reads(block.v_meta, block.a_slope, block.d_prob, stored, u[:1], op,
                           block.config)[0]
        high = _apply_reads(block.v_meta, block.a_slope, block.d_prob, stored, u[1:], nominal,
                            block.config)[0]
        read_fail = high != 1
        access_fail = (low != 1) & ~read_fail
        access += int(access_fail.sum())
        destroyed += int(read_fail.sum())
    total = n_cells * trials
    return FailureClassReport(access / total, destroyed / total, trials, op.voltage)
