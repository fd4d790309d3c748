"""Calibration checks of the fault model.

``evaluate`` runs the qualitative targets by simulated reads: the failure
class split at half the nominal voltage, the interior voltage peak of the
32-bit-window entropy, the data-pattern ordering, the frequency ordering,
and the temperature shift of the peak voltage. ``analytic_checks`` runs
the same targets on expected entropies (no sampling), which is fast
enough to scan seeds and parameters.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .characterize import (
    WINDOW_BITS,
    DataPattern,
    SweepConfig,
    binary_entropy,
    pattern_bits,
    sweep,
)
from .faultmodel import (
    NOMINAL_MV,
    FaultModelConfig,
    OperatingPoint,
    ReadStream,
    SramGeometry,
    build_block,
    classify_failures,
    flip_probability,
    sense_one_probability,
)

STREAM_CLASSIFY = 4
HALF_NOMINAL_MV = NOMINAL_MV / 2
ACCESS_TARGET = 0.6917
ACCESS_TOLERANCE = 0.05
READ_FAILURE_LIMIT = 0.04
PEAK_BAND = (7.0, 9.5)
PATTERN_CLOSENESS = 0.05  # relative gap allowed between 0xAAAA and 0x5555
CLASSIFY_VOLTAGES = (500.0, 535.0, 550.0, 565.0, 580.0, 700.0, 1000.0)
SWEEP_VOLTAGES = tuple(535.0 + 5.0 * i for i in range(10))
TEMPERATURES = (25.0, 35.0, 45.0, 55.0, 65.0)
ORDER_PATTERNS = ("0", "A", "5", "F")


@dataclass
class CalibrationResult:
    seed: int
    access_fraction: float
    read_fraction: float
    class_by_voltage: dict
    voltage_curve: dict
    peak_voltage: float
    peak_entropy: float
    pattern_entropy: dict
    peak_20mhz: float
    peak_by_temperature: dict
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def unique_interior_peak(curve: list) -> tuple[int, bool]:
    """Index of the maximum and whether it is unique and not the first point."""
    arr = np.asarray(curve, dtype=float)
    i = int(np.argmax(arr))
    unique = int(np.sum(arr == arr[i])) == 1
    return i, unique and i > 0


def pattern_order_holds(ent: dict, closeness: float = PATTERN_CLOSENESS) -> bool:
    """0x0000 below both alternating patterns, both below 0xFFFF, and 0xAAAA close to 0x5555."""
    z, a, f5, f = ent["0"], ent["A"], ent["5"], ent["F"]
    close = abs(a - f5) <= closeness * max(a, f5)
    return z < min(a, f5) and max(a, f5) < f and close


def _checks(access, read, classes, curve, peak_e, patterns, peak20, temp_peaks) -> dict:
    _, peak_ok = unique_interior_peak(list(curve.values()))
    t_peaks = [temp_peaks[t] for t in sorted(temp_peaks)]
    return {
        "access_fraction": abs(access - ACCESS_TARGET) <= ACCESS_TOLERANCE,
        "read_fraction": read < READ_FAILURE_LIMIT,
        "access_dominates": all(a >= r for a, r in classes.values()),
        "interior_peak": peak_ok,
        "peak_band": PEAK_BAND[0] <= peak_e <= PEAK_BAND[1],
        "pattern_order": pattern_order_holds(patterns),
        "frequency_order": peak_e >= peak20,
        "temperature_order": all(b <= a for a, b in zip(t_peaks, t_peaks[1:])),
    }


def evaluate(seed: int, config: FaultModelConfig, geometry: SramGeometry = SramGeometry(),
             reads: int = 1000, trials: int = 10, voltages=SWEEP_VOLTAGES,
             temperatures=TEMPERATURES, workers: int | None = None) -> CalibrationResult:
    """Measure every calibration target on one seeded block by simulated reads."""
    block = build_block(seed, geometry, config)
    classes = {}
    for v in CLASSIFY_VOLTAGES:
        rep = classify_failures(block, OperatingPoint(v), trials, ReadStream(seed, STREAM_CLASSIFY))
        classes[v] = (rep.access_failure_fraction, rep.read_failure_fraction)
    access, read = classes[HALF_NOMINAL_MV]

    def peaks(**axes):
        rep = sweep([block], SweepConfig(voltages=list(voltages), reads_per_row=reads, **axes),
                    workers)
        return {p.op.voltage: p.max_block32_entropy for p in rep.points}

    curve = peaks()
    vi, _ = unique_interior_peak(list(curve.values()))
    peak_v = list(curve)[vi]
    peak_e = curve[peak_v]
    rep = sweep([block], SweepConfig(voltages=[peak_v], patterns=list(ORDER_PATTERNS),
                                     reads_per_row=reads), workers)
    patterns = {p.pattern.kind: p.avg_block32_entropy for p in rep.points}
    peak20 = max(peaks(frequencies=[20.0]).values())
    temp_peaks = {}
    for t in temperatures:
        c = peaks(temperatures=[t])
        temp_peaks[t] = max(c, key=lambda v: (c[v], -v))
    checks = _checks(access, read, classes, curve, peak_e, patterns, peak20, temp_peaks)
    return CalibrationResult(seed, access, read, {str(k): v for k, v in classes.items()},
                             {str(k): v for k, v in curve.items()}, peak_v, peak_e, patterns,
                             peak20, {str(k): v for k, v in temp_peaks.items()}, checks)


def analytic_access_fraction(block, op: OperatingPoint) -> float:
    """Expected share of cells holding 1 that sense 0 at ``op`` (destructive term neglected)."""
    a, q = flip_probability(block, 1, op, block.config)
    return float(np.mean(a * (1.0 - q)))


def _stored(pattern: str, geometry: SramGeometry) -> np.ndarray:
    pat = DataPattern(pattern)
    return np.array([pattern_bits(pat.row_value(r % geometry.rows, geometry.cols), geometry.cols)
                     for r in range(geometry.total_rows)], dtype=np.uint8)


def expected_windows(block, op: OperatingPoint, pattern: str = "F") -> np.ndarray:
    """Per-window sums of the exact per-cell sensing entropy (the infinite-read limit)."""
    g = block.geometry
    p = sense_one_probability(block, slice(None), op, stored=_stored(pattern, g))
    return binary_entropy(p).reshape(-1, WINDOW_BITS).sum(axis=1)


def analytic_checks(seed: int, config: FaultModelConfig,
                    geometry: SramGeometry = SramGeometry()) -> dict:
    """The calibration targets evaluated on expected entropies."""
    block = build_block(seed, geometry, config)
    access = analytic_access_fraction(block, OperatingPoint(HALF_NOMINAL_MV))

    def curve(f=200.0, t=45.0):
        return {v: float(expected_windows(block, OperatingPoint(v, f, t)).max())
                for v in SWEEP_VOLTAGES}

    c = curve()
    vi, _ = unique_interior_peak(list(c.values()))
    peak_v = SWEEP_VOLTAGES[vi]
    patterns = {k: float(expected_windows(block, OperatingPoint(peak_v), k).mean())
                for k in ORDER_PATTERNS}
    peak20 = max(curve(f=20.0).values())
    temp_peaks = {}
    for t in TEMPERATURES:
        ct = curve(t=t)
        temp_peaks[t] = max(ct, key=lambda v: (ct[v], -v))
    # read failures need sampling; the analytic pass assumes the d_max bound
    classes = {v: (analytic_access_fraction(block, OperatingPoint(v)), 0.0)
               for v in CLASSIFY_VOLTAGES}
    return _checks(access, config.d_max, classes, c, c[peak_v], patterns, peak20, temp_peaks)


def search_seeds(config: FaultModelConfig, seeds, geometry: SramGeometry = SramGeometry()) -> list:
    """Seeds whose block meets every analytic calibration target."""
    return [s for s in seeds if all(analytic_checks(s, config, geometry).values())]
