"""Acceptance suite: one PASS/FAIL line per criterion, then the assertion.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are
printed even when output capture is on.
"""

import json
import math

import mpmath
import numpy as np
import pytest

from conftest import custom_block
from sramtrng import calibrate, perf, sts
from sramtrng.cachesim import CacheTrngConfig, IdleTrace, closed_form_bps, schedule, synth_trace
from sramtrng.characterize import characterize_rows, shannon_entropy
from sramtrng.cli import _blocks, main
from sramtrng.faultmodel import FaultModelConfig, OperatingPoint, SramGeometry
from sramtrng.trng import direct_stream, find_direct_cells, generate

# characterized source of the shipped config and seed (block, row, op, row entropy)
SOURCE_OP = OperatingPoint(555.0, 200.0, 45.0)
SOURCE = (0, 242, SOURCE_OP, 4.709597047722299)


def verdict(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


def test_c1_latency(capsys):
    base = dict(t_pmbus_setup=228.3e-6, t_undervolt_cmd=49.7e-6, t_sha=142.2e-9)
    fast = perf.latency(perf.PerfInputs(t_access=320e-9, **base)) * 1e6
    slow = perf.latency(perf.PerfInputs(freq=20.0, n_read=85, t_access=4.25e-6, **base)) * 1e6
    ok = abs(fast - 278.46) <= 0.01 and abs(slow - 282.39) <= 0.01
    verdict(capsys, 1, ok, f"{fast:.4f} us, {slow:.4f} us")


def test_c2_throughput(capsys):
    want = {20.0: 60.24, 60.0: 194.43, 100.0: 387.88, 160.0: 819.2, 200.0: 1600.0}
    got = {f: perf.throughput(n, f) / 1e6 for f, n in perf.EVALUATED_READ_COUNTS.items()}
    exact = perf.throughput(32, 200.0) == 1.6e9
    ok = exact and all(abs(got[f] - want[f]) <= 0.005 for f in want)
    verdict(capsys, 2, ok, ", ".join(f"{got[f]:.2f}" for f in sorted(got)) + " Mbps")


def test_c3_energy(capsys):
    floor = perf.sha_energy_floor() * 1e9
    per_bit = perf.energy(perf.PerfInputs())[0] * 1e9
    ok = abs(floor - 0.1091) <= 5e-5 and abs(per_bit - 0.11) <= 0.011
    verdict(capsys, 3, ok, f"floor {floor:.4f} nJ/bit, total {per_bit:.4f} nJ/bit")


def test_c4_comparison_ratios(capsys):
    t = perf.comparison_table()
    got = (t["throughput_ratio"], t["energy_ratio"], t["latency_ratio"])
    ok = [float(f"{g:.3g}") for g in got] == [2.26, 5.09, 5.39]
    verdict(capsys, 4, ok, " / ".join(f"{g:.4f}" for g in got))


def test_c5_calibration(capsys, shipped):
    res = calibrate.evaluate(shipped.seed, shipped.fault_model, SramGeometry(1024, 16, 1))
    failed = [k for k, v in res.checks.items() if not v]
    detail = (f"access {res.access_fraction:.4f}, read {res.read_fraction:.2e}, "
              f"peak {res.peak_entropy:.3f} at {res.peak_voltage:g} mV, failed {failed}")
    verdict(capsys, 5, res.passed, detail)


def _entropy_oracle(p):
    p = mpmath.mpf(p)
    return float(-sum(x * mpmath.log(x, 2) for x in (p, 1 - p) if x > 0))


def test_c6_entropy_oracle(capsys):
    with mpmath.workdps(40):
        grid_err = max(abs(shannon_entropy(i / 100) - _entropy_oracle(i / 100)) for i in range(101))
    errs = []
    for p in (0.1, 0.25, 0.5):
        # stored 0 with rho0 = 1 and q = 0.5 senses 1 with probability a / 2
        a = 2 * p
        v_meta = 550.0 + 2.0 * (math.log(a / (1 - a)) if a < 1 else 40.0)
        b = custom_block([[v_meta]], FaultModelConfig(q_gamma=0.0, rho0=1.0, d_max=0.0))
        rec = characterize_rows(b, OperatingPoint(550), "0", 100_000)
        errs.append(abs(rec.cell_entropy[0, 0] - shannon_entropy(p)))
    ok = grid_err <= 1e-6 and max(errs) <= 0.005
    verdict(capsys, 6, ok, f"grid error {grid_err:.1e}, empirical errors {np.round(errs, 5)}")


def test_c7_randomness(capsys, shipped):
    examples = [
        (sts.monobit(np.array([int(c) for c in "1011010101"])).p_value, 0.527089),
        (sts.block_frequency(np.array([int(c) for c in "0110011010"]), 3).p_value, 0.801252),
        (sts.runs(np.array([int(c) for c in "1001101011"])).p_value, 0.147232),
    ]
    fixtures_ok = all(abs(g - w) <= 1e-5 for g, w in examples)
    block, row, op, h = SOURCE
    tcfg = shipped.trng.trng_config(block, row, op, h)
    k, n = 128, 100_000
    bits = generate(_blocks(shipped)[block], tcfg, k * n).bits.reshape(k, n)
    rep = sts.run_suite(bits, shipped.sts.for_length(n))
    bound_ok = abs(rep.bound - 0.9636) <= 5e-5
    worst = min(rep.proportions, key=rep.proportions.get)
    ok = fixtures_ok and bound_ok and rep.passed and len(rep.proportions) == 7
    verdict(capsys, 7, ok, f"bound {rep.bound:.6f}, lowest {worst} {rep.proportions[worst]:.4f}, "
                           f"fixtures {'ok' if fixtures_ok else 'off'}")


def test_c8_direct_mode(capsys, shipped):
    block = _blocks(shipped)[0]
    cells = find_direct_cells(block, SOURCE_OP, 100_000, shipped.trng.direct_cell_threshold)
    failing = []
    for cell in cells:
        bits = direct_stream(block, cell, SOURCE_OP, 100_000).bits
        if not (sts.monobit(bits).passed and sts.runs(bits).passed):
            failing.append(cell)
    ok = bool(cells) and not failing
    verdict(capsys, 8, ok, f"{len(cells)} cells qualified, failing {failing}")


def test_c9_cache_simulator(capsys):
    cfg = CacheTrngConfig()
    total = 3_600_000
    full = schedule(IdleTrace(total, [(0, total)]), cfg).achieved_bps
    zero = schedule(IdleTrace(total, []), cfg).bits_generated
    reps = [schedule(synth_trace(total, f, 8, 0), cfg) for f in np.linspace(0, 1, 11)]
    rates = [r.achieved_bps for r in reps]
    monotone = all(a <= b for a, b in zip(rates, rates[1:]))
    conserved = all(r.entropy_deposited == r.line_reads * cfg.line_entropy
                    and r.entropy_deposited >= r.bits_generated == 256 * r.sha_invocations
                    for r in reps)
    ok = (abs(full - 22.51e9) <= 0.01 * 22.51e9 and zero == 0 and monotone and conserved
          and abs(closed_form_bps(cfg) - full) <= 1e-3 * full)
    verdict(capsys, 9, ok, f"fully idle {full / 1e9:.3f} Gbps, monotone {monotone}, "
                           f"conserved {conserved}")


def test_c10_determinism(capsys, tmp_path):
    cfg = tmp_path / "small.json"
    cfg.write_text(json.dumps({"geometry": {"rows": 64},
                               "sweep": {"voltages": [550.0, 555.0], "reads_per_row": 200}}))
    trace = tmp_path / "trace.csv"
    trace.write_text("start_cycle,length_cycles\n0,400\n1000,64\n")
    commands = [
        ["characterize"], ["sweep", "--axis", "pattern"], ["generate", "--bits", "4096"],
        ["perf"], ["cachesim", "--idle-fraction", "0.5", "--total-cycles", "100000"],
        ["cachesim", "--trace", str(trace)], ["calibrate", "--reads", "50"],
    ]
    differing = []
    for i, cmd in enumerate(commands):
        outs = []
        for rep in range(2):
            out = tmp_path / f"{i}_{rep}.out"
            assert main(cmd + ["--config", str(cfg), "--out", str(out)]) == 0
            outs.append(out.read_bytes())
        if outs[0] != outs[1]:
            differing.append(cmd[0])
    # the sts command reads the generated file
    sts_outs = []
    for rep in range(2):
        out = tmp_path / f"sts_{rep}.json"
        assert main(["sts", str(tmp_path / "2_0.out"), "--sequence-bits", "1024",
                     "--config", str(cfg), "--out", str(out)]) == 0
        sts_outs.append(out.read_bytes())
    if sts_outs[0] != sts_outs[1]:
        differing.append("sts")
    verdict(capsys, 10, not differing, f"{len(commands) + 1} commands, differing {differing}")
