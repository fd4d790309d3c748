"""Closed-form throughput, energy and latency of the FPGA generator.

Defaults are the measured constants of the evaluation board: PMBus setup
and undervolt command latencies, and a 917 Mbps / 0.1 W SHA-256 core that
finishes one digest in 142.2 ns.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, fields

OUTPUT_BITS = 256

# Frequencies (MHz) and read counts of the five evaluated operating points.
EVALUATED_READ_COUNTS = {20.0: 85, 60.0: 79, 100.0: 66, 160.0: 50, 200.0: 32}


def default_sha_units(freq_mhz: float) -> int:
    """Two SHA-256 cores are needed to keep up at 160 MHz and above."""
    return 2 if freq_mhz >= 160.0 else 1


@dataclass
class PerfInputs:
    n_read: int = 32
    freq: float = 200.0  # MHz
    p_dd: float = 5e-3  # W, SRAM rail power during reads
    p_sha: float = 0.1  # W per SHA unit
    sha_throughput: float = 917e6  # bit/s per unit
    sha_units: int | None = None  # None: pick by frequency
    t_pmbus_setup: float = 228.3e-6  # s
    t_undervolt_cmd: float = 49.7e-6  # s
    t_access: float | None = None  # s; None: estimate as n_read / freq
    t_sha: float = 142.2e-9  # s

    def __post_init__(self):
        if self.n_read < 1:
            raise ValueError("n_read must be >= 1")
        if self.freq <= 0:
            raise ValueError("freq must be positive")
        for name in ("p_dd", "p_sha", "t_pmbus_setup", "t_undervolt_cmd", "t_sha"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.sha_throughput <= 0:
            raise ValueError("sha_throughput must be positive")
        if self.sha_units is not None and self.sha_units < 0:
            raise ValueError("sha_units must be non-negative")
        if self.t_access is not None and self.t_access < 0:
            raise ValueError("t_access must be non-negative")

    @property
    def units(self) -> int:
        return default_sha_units(self.freq) if self.sha_units is None else self.sha_units

    @property
    def access_time(self) -> float:
        return estimate_access_time(self.n_read, self.freq) if self.t_access is None else self.t_access

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PerfInputs":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown perf keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class PerfEstimate:
    throughput_bps: float
    energy_per_bit_joules: float
    latency_seconds: float
    energy_read: float
    energy_sha: float

    @property
    def energy_breakdown(self) -> tuple[float, float]:
        return self.energy_read, self.energy_sha


def throughput(n_read: int, freq_mhz: float) -> float:
    """Output bits per second: one 256-bit number per ``n_read`` read cycles."""
    if n_read < 1 or freq_mhz <= 0:
        raise ValueError("n_read and freq must be positive")
    return OUTPUT_BITS / (n_read / (freq_mhz * 1e6))


def estimate_access_time(n_read: int, freq_mhz: float) -> float:
    return n_read / (freq_mhz * 1e6)


def energy(inputs: PerfInputs) -> tuple[float, float, float]:
    """``(per_bit, E_read, E_sha)`` in joules for one 256-bit output."""
    e_read = inputs.n_read * (1.0 / (inputs.freq * 1e6)) * inputs.p_dd
    e_sha = inputs.p_sha * inputs.units * inputs.t_sha
    return (e_read + e_sha) / OUTPUT_BITS, e_read, e_sha


def sha_energy_floor(p_sha: float = 0.1, sha_throughput: float = 917e6) -> float:
    """Joules per bit of a SHA core running flat out."""
    return p_sha / sha_throughput


def latency(inputs: PerfInputs) -> float:
    return inputs.t_pmbus_setup + inputs.t_undervolt_cmd + inputs.access_time + inputs.t_sha


def estimate(inputs: PerfInputs) -> PerfEstimate:
    per_bit, e_read, e_sha = energy(inputs)
    return PerfEstimate(throughput(inputs.n_read, inputs.freq), per_bit, latency(inputs), e_read,
                        e_sha)


@dataclass(frozen=True)
class TrngRecord:
    name: str
    continuous: bool
    throughput_bps: float
    energy_per_bit_j: float | None
    latency_s: float


COMPARISON = (
    TrngRecord("Zhang+", False, 178e6, 0.56e-9, 1.501e-3),
    TrngRecord("PUFKEY", False, 803e6, None, 5.35),
    TrngRecord("this design", True, 1.812e9, 0.11e-9, 278.46e-6),
)


def comparison_table() -> dict:
    """Published figures of the SRAM TRNGs plus the improvement ratios.

    Throughput is compared with the fastest prior design, energy and
    latency with the best prior design that reports them.
    """
    prior = [r for r in COMPARISON if r.name != "this design"]
    ours = COMPARISON[-1]
    best_tp = max(prior, key=lambda r: r.throughput_bps)
    with_energy = [r for r in prior if r.energy_per_bit_j is not None]
    best_e = min(with_energy, key=lambda r: r.energy_per_bit_j)
    best_lat = min(prior, key=lambda r: r.latency_s)
    return {
        "records": [asdict(r) for r in COMPARISON],
        "throughput_ratio": ours.throughput_bps / best_tp.throughput_bps,
        "energy_ratio": best_e.energy_per_bit_j / ours.energy_per_bit_j,
        "latency_ratio": best_lat.latency_s / ours.latency_s,
    }


def sweep_rows(points=None, **overrides) -> list[dict]:
    """One row per ``(freq_mhz, n_read)``; columns match the CLI CSV."""
    points = EVALUATED_READ_COUNTS.items() if points is None else points
    rows = []
    for freq, n_read in points:
        est = estimate(PerfInputs(n_read=int(n_read), freq=float(freq), **overrides))
        rows.append({
            "freq_mhz": float(freq),
            "n_read": int(n_read),
            "avg_throughput_bps": est.throughput_bps,
            "energy_per_bit_nj": est.energy_per_bit_joules * 1e9,
            "latency_us": est.latency_seconds * 1e6,
        })
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    cols = ["freq_mhz", "n_read", "avg_throughput_bps", "energy_per_bit_nj", "latency_us"]
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()
