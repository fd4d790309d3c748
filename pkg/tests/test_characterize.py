import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import custom_block
from sramtrng.characterize import (
    CharacterizationReport,
    DataPattern,
    NoEntropySourceError,
    SweepConfig,
    binary_entropy,
    characterize_rows,
    default_voltages,
    select_entropy_source,
    shannon_entropy,
    sweep,
    thread_limit,
    window_rows,
    window_start_row,
    window_sums,
)
from sramtrng.faultmodel import FaultModelConfig, OperatingPoint, SramGeometry, build_block

mpmath.mp.dps = 40


def entropy_oracle(p):
    p = mpmath.mpf(p)
    h = mpmath.mpf(0)
    for x in (p, 1 - p):
        if x > 0:
            h -= x * mpmath.log(x, 2)
    return float(h)


GRID = [i / 100 for i in range(101)]


@pytest.mark.parametrize("p", GRID)
def test_entropy_matches_high_precision_oracle(p):
    assert abs(shannon_entropy(p) - entropy_oracle(p)) <= 1e-6


def test_vectorized_entropy_matches_scalar():
    p = np.array(GRID)
    assert np.allclose(binary_entropy(p), [shannon_entropy(x) for x in GRID], rtol=0, atol=1e-15)


@pytest.mark.parametrize("p,h", [(0.5, 1.0), (0.0, 0.0), (1.0, 0.0), (0.25, 0.811278)])
def test_entropy_examples(p, h):
    assert shannon_entropy(p) == pytest.approx(h, abs=1e-6)


@pytest.mark.parametrize("p", [-0.01, 1.01, float("nan")])
def test_entropy_rejects(p):
    with pytest.raises(ValueError):
        shannon_entropy(p)


@given(st.floats(0, 1))
def test_entropy_symmetric_and_bounded(p):
    h = shannon_entropy(p)
    assert 0.0 <= h <= 1.0
    assert h == pytest.approx(shannon_entropy(1 - p), abs=1e-12)


def test_data_patterns():
    assert DataPattern("F").row_value(0) == 0xFFFF
    assert DataPattern("A5").row_value(0) == 0xAAAA
    assert DataPattern("A5").row_value(1) == 0x5555
    assert DataPattern("C3").row_value(3) == 0x3333
    assert DataPattern("A").row_value(0, 8) == 0xAA
    with pytest.raises(ValueError):
        DataPattern("Z")


def test_windows_pair_adjacent_rows():
    vals = np.arange(8 * 16, dtype=float).reshape(8, 16)
    sums = window_sums(vals, 8)
    assert sums.shape == (4,)
    assert sums[1] == vals[2:4].sum()
    assert window_start_row(1, 8, 16) == 2
    assert list(window_rows(3, 8, 16)) == [6, 7]


def test_windows_stay_inside_banks():
    vals = np.ones((6, 16))  # two banks of three rows: windows (0,1), (2), (3,4), (5)
    assert list(window_sums(vals, 3)) == [32, 16, 32, 16]
    assert list(window_rows(2, 3, 16)) == [3, 4]


def test_no_failures_zero_entropy():
    b = custom_block(np.full((4, 16), 100.0))
    rec = characterize_rows(b, OperatingPoint(550), "F", 200)
    assert rec.max_block32 == 0.0 and np.all(rec.cell_entropy == 0)


def test_single_fair_cell_row_entropy():
    # one cell fails with certainty and senses a fair coin; reads are counted exactly
    v = np.full((2, 16), 100.0)
    v[1, 4] = 5000.0
    b = custom_block(v, FaultModelConfig(q_gamma=0.0, d_max=0.0))
    rec = characterize_rows(b, OperatingPoint(550), "F", 1000)
    p = rec.ones_count[1, 4] / 1000
    assert rec.row_entropy[1] == pytest.approx(shannon_entropy(p))
    assert rec.row_entropy[0] == 0.0
    assert abs(rec.cell_entropy[1, 4] - 1.0) <= 0.01


@pytest.mark.parametrize("p", [0.1, 0.25, 0.5])
def test_empirical_entropy_tracks_analytic(p):
    # stored 0 with rho0 = 1 and q = 0.5: P(sense 1) = a / 2
    a = 2 * p
    slope = 2.0
    v_meta = 550.0 + slope * (math.log(a / (1 - a)) if a < 1 else 40.0)
    cfg = FaultModelConfig(q_gamma=0.0, rho0=1.0, d_max=0.0)
    b = custom_block([[v_meta]], cfg, a_slope=slope)
    rec = characterize_rows(b, OperatingPoint(550), "0", 100_000)
    assert abs(rec.cell_entropy[0, 0] - shannon_entropy(p)) <= 0.005


def test_characterize_rejects_zero_reads(small_block):
    with pytest.raises(ValueError):
        characterize_rows(small_block, OperatingPoint(550), "F", 0)


def test_sweep_config_validation():
    with pytest.raises(ValueError):
        SweepConfig(voltages=[])
    with pytest.raises(ValueError):
        SweepConfig(patterns=[])
    with pytest.raises(ValueError, match="unknown"):
        SweepConfig.from_dict({"volts": [1]})
    assert default_voltages() == [535.0 + 5 * i for i in range(10)]


def test_nominal_sweep_has_no_entropy(small_block):
    rep = sweep([small_block], SweepConfig(voltages=[1000.0], reads_per_row=50), 1)
    assert rep.max_block32_entropy == 0.0 and rep.avg_block32_entropy == 0.0
    with pytest.raises(NoEntropySourceError):
        select_entropy_source(rep)


def test_sweep_report_invariants(small_block):
    rep = sweep([small_block], SweepConfig(voltages=[545.0, 555.0], reads_per_row=200), 1)
    assert rep.max_block32_entropy >= rep.avg_block32_entropy >= 0
    best = rep._best()
    rec = characterize_rows(small_block.copy(), best.op, best.pattern, 200)
    assert rec.max_block32 == rep.max_block32_entropy
    window = rec.best_window()
    assert rep.best_row == (0, window_start_row(window, 64, 16))


def test_sweep_deterministic_across_workers(shipped):
    blocks = [build_block(s, SramGeometry(32, 16, 1), shipped.fault_model) for s in (1, 2)]
    cfg = SweepConfig(voltages=[540.0, 550.0, 560.0], patterns=["F", "A5"], reads_per_row=100)
    one = sweep(blocks, cfg, 1).to_json()
    four = sweep(blocks, cfg, 4).to_json()
    assert one == four


def test_sweep_requires_blocks():
    with pytest.raises(ValueError):
        sweep([], SweepConfig())


def test_report_roundtrip(small_block):
    rep = sweep([small_block], SweepConfig(voltages=[550.0], reads_per_row=50), 1)
    again = CharacterizationReport.from_dict(rep.to_dict())
    assert again.to_json() == rep.to_json()
    header = rep.to_csv().splitlines()[0]
    assert header == "voltage_mv,freq_mhz,temp_c,pattern,max_block32_entropy,avg_block32_entropy"


def test_select_entropy_source_picks_best_row(small_block):
    rep = sweep([small_block], SweepConfig(voltages=[550.0, 555.0], reads_per_row=200), 1)
    block, row, op, h = select_entropy_source(rep)
    best = rep._best()
    assert (block, op) == (best.best_block, best.op)
    assert row in (best.best_window_row, best.best_window_row + 1)
    rec = characterize_rows(small_block.copy(), op, "F", 200)
    assert h == pytest.approx(rec.row_entropy[row])
    assert h == max(rec.row_entropy[best.best_window_row:best.best_window_row + 2])


def test_thread_limit_env(monkeypatch):
    monkeypatch.setenv("TURAN_THREADS", "3")
    assert thread_limit() == 3
    monkeypatch.setenv("TURAN_THREADS", "x")
    with pytest.raises(ValueError):
        thread_limit()
