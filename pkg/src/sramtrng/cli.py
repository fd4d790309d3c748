"""Command-line front end.

Every subcommand is a pure function of (config, inputs, seed): reruns
write byte-identical artifacts. Exit status is 0 on success, 1 on domain
errors (one line on stderr) and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bitstream, cachesim, calibrate, perf, sts
from .characterize import (
    NoEntropySourceError,
    SweepConfig,
    select_entropy_source,
    sweep,
    thread_limit,
)
from .config import ConfigError, RunConfig, load
from .faultmodel import build_block, SramGeometry
from .trng import generate

AXES = ("voltage", "frequency", "temperature", "pattern")


class UsageError(Exception):
    pass


def _blocks(cfg: RunConfig) -> list:
    # every block of the geometry is simulated as its own seeded array
    g = cfg.geometry
    single = SramGeometry(g.rows, g.cols, 1)
    return [build_block(cfg.seed + b, single, cfg.fault_model) for b in range(g.blocks)]


def _voltage_sweep(cfg: RunConfig) -> SweepConfig:
    s = cfg.sweep
    return SweepConfig(voltages=list(s.voltages), frequencies=list(s.frequencies[:1]),
                       temperatures=list(s.temperatures[:1]), patterns=list(s.patterns[:1]),
                       reads_per_row=s.reads_per_row, voltage_step=s.voltage_step)


def axis_sweep(cfg: RunConfig, axis: str) -> SweepConfig:
    """Voltage sweep crossed with one further axis; the other axes keep their first value."""
    if axis not in AXES:
        raise UsageError(f"unknown axis {axis!r}; expected one of {AXES}")
    base = _voltage_sweep(cfg)
    if axis == "frequency":
        base.frequencies = list(cfg.sweep.frequencies)
    elif axis == "temperature":
        base.temperatures = list(cfg.sweep.temperatures)
    elif axis == "pattern":
        base.patterns = list(cfg.sweep.patterns)
    return base


def _write_text(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _out(args, cfg: RunConfig, name: str) -> str:
    return args.out or cfg.outputs[name]


def cmd_characterize(cfg: RunConfig, out: str) -> int:
    report = sweep(_blocks(cfg), _voltage_sweep(cfg), thread_limit())
    _write_text(out, report.to_json())
    return 0


def cmd_sweep(axis: str, cfg: RunConfig, out: str) -> int:
    report = sweep(_blocks(cfg), axis_sweep(cfg, axis), thread_limit())
    _write_text(out, report.to_csv())
    return 0


def cmd_generate(cfg: RunConfig, n_bits: int, out: str) -> int:
    blocks = _blocks(cfg)
    if cfg.trng.source is None:
        block, row, op, row_entropy = select_entropy_source(
            sweep(blocks, _voltage_sweep(cfg), thread_limit()))
        tcfg = cfg.trng.trng_config(block, row, op, row_entropy)
    else:
        tcfg = cfg.trng.trng_config()
    if not 0 <= tcfg.block < len(blocks):
        raise ValueError(f"trng.source.block {tcfg.block} outside the geometry")
    result = generate(blocks[tcfg.block], tcfg, n_bits)
    data = result.to_bytes()
    if out == "-":
        sys.stdout.buffer.write(data)
    else:
        Path(out).write_bytes(data)
    return 0


def cmd_sts(path: str, cfg: RunConfig, out: str, sequence_bits: int | None = None,
            fmt: str = "json") -> int:
    stream = bitstream.read(path)
    n = sequence_bits or cfg.sts.sequence_bits
    if stream.bits.size < 100:
        raise ValueError(f"{path}: {stream.bits.size} bits is too short to test (need >= 100)")
    n = min(n, stream.bits.size)
    k = min(cfg.sts.n_sequences, stream.bits.size // n)
    scfg = cfg.sts.for_length(n)
    report = sts.run_suite(stream.bits[:k * n].reshape(k, n), scfg, thread_limit())
    _write_text(out, report.to_csv() if fmt == "csv" else report.to_json())
    return 0


def cmd_perf(cfg: RunConfig, out: str, freq=None, n_read=None) -> int:
    base = cfg.perf.to_dict()
    base.pop("n_read")
    base.pop("freq")
    if freq is None and n_read is None:
        points = list(perf.EVALUATED_READ_COUNTS.items())
    else:
        points = [(freq if freq is not None else cfg.perf.freq,
                   n_read if n_read is not None else cfg.perf.n_read)]
    _write_text(out, perf.rows_to_csv(perf.sweep_rows(points, **base)))
    return 0


def cmd_cachesim(trace, cfg: RunConfig, out: str, idle_fraction=None, total_cycles: int = 3_600_000,
                 min_interval: int = 8) -> int:
    if trace is not None:
        t = cachesim.read_trace(trace)
    else:
        frac = 1.0 if idle_fraction is None else idle_fraction
        t = cachesim.synth_trace(total_cycles, frac, min_interval, cfg.seed)
    report = cachesim.schedule(t, cfg.cachesim)
    doc = report.to_dict()
    doc["seed"] = cfg.seed
    doc["overlap"] = cfg.cachesim.overlap
    _write_text(out, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_calibrate(cfg: RunConfig, out: str, reads: int | None = None) -> int:
    result = calibrate.evaluate(cfg.seed, cfg.fault_model, SramGeometry(cfg.geometry.rows,
                                cfg.geometry.cols, 1), reads or cfg.sweep.reads_per_row,
                                workers=thread_limit())
    _write_text(out, result.to_json())
    return 0


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (defaults to the shipped one)")
    common.add_argument("--seed", type=_seed, help="override the configured seed")
    common.add_argument("--out", help="output path ('-' for stdout)")

    p = argparse.ArgumentParser(prog="sramtrng", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("characterize", parents=[common], help="voltage sweep, JSON report")
    s = sub.add_parser("sweep", parents=[common], help="entropy sweep along one axis, CSV")
    s.add_argument("--axis", choices=AXES, default="voltage")
    g = sub.add_parser("generate", parents=[common], help="conditioned random bits, TRNB file")
    g.add_argument("--bits", type=_positive_int, required=True)
    t = sub.add_parser("sts", parents=[common], help="statistical tests on a TRNB file")
    t.add_argument("input")
    t.add_argument("--sequence-bits", type=_positive_int)
    t.add_argument("--format", choices=("json", "csv"), default="json")
    f = sub.add_parser("perf", parents=[common], help="throughput/energy/latency CSV")
    f.add_argument("--freq", type=float)
    f.add_argument("--nread", type=_positive_int)
    c = sub.add_parser("cachesim", parents=[common], help="cache-integrated generation, JSON")
    c.add_argument("--trace", help="CSV with header start_cycle,length_cycles")
    c.add_argument("--idle-fraction", type=float, help="synthesize a trace instead")
    c.add_argument("--total-cycles", type=_positive_int, default=3_600_000)
    c.add_argument("--min-interval", type=_positive_int, default=8)
    k = sub.add_parser("calibrate", parents=[common], help="check the fault-model calibration")
    k.add_argument("--reads", type=_positive_int)
    return p


def run(args) -> int:
    cfg = load(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    cmd = args.command
    out = _out(args, cfg, cmd)
    if cmd == "characterize":
        return cmd_characterize(cfg, out)
    if cmd == "sweep":
        return cmd_sweep(args.axis, cfg, out)
    if cmd == "generate":
        return cmd_generate(cfg, args.bits, out)
    if cmd == "sts":
        return cmd_sts(args.input, cfg, out, args.sequence_bits, args.format)
    if cmd == "perf":
        return cmd_perf(cfg, out, args.freq, args.nread)
    if cmd == "cachesim":
        if args.trace is not None and args.idle_fraction is not None:
            raise UsageError("--trace and --idle-fraction are mutually exclusive")
        return cmd_cachesim(args.trace, cfg, out, args.idle_fraction, args.total_cycles,
                            args.min_interval)
    return cmd_calibrate(cfg, out, args.reads)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (bitstream.BitstreamFormatError, cachesim.TraceFormatError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NoEntropySourceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        where = f"{exc.filename}: " if exc.filename else ""
        print(f"error: {where}{exc.strerror or exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
