"""Run configuration: one JSON document holding every module's settings.

Unknown keys are rejected at every level. Missing sections and keys fall
back to the shipped defaults in ``data/default_config.json``.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .cachesim import CacheTrngConfig
from .characterize import SweepConfig
from .faultmodel import FaultModelConfig, OperatingPoint, SramGeometry
from .perf import PerfInputs
from .sts import StsConfig
from .trng import TrngConfig

SECTIONS = ("seed", "geometry", "fault_model", "sweep", "trng", "sts", "perf", "cachesim",
            "outputs")
OUTPUT_KEYS = ("characterize", "sweep", "generate", "sts", "perf", "cachesim", "calibrate")
_TRNG_KEYS = {"source", "entropy_target", "direct_cell_threshold"}
_SOURCE_KEYS = {"block", "row", "op", "row_entropy"}


class ConfigError(ValueError):
    """Invalid configuration; carries the file path and byte offset when known."""

    def __init__(self, message: str, path=None, offset: int | None = None):
        parts = [str(path)] if path else []
        if offset is not None:
            parts.append(f"byte {offset}")
        parts.append(message)
        super().__init__(": ".join(parts))
        self.path = path
        self.offset = offset


@dataclass
class TrngSettings:
    """Generator settings; ``source`` pins a characterized row, else one is found by sweep."""

    source: dict | None = None
    entropy_target: float = 256.0
    direct_cell_threshold: float = 0.9999

    def __post_init__(self):
        if self.source is not None:
            unknown = set(self.source) - _SOURCE_KEYS
            missing = _SOURCE_KEYS - set(self.source)
            if unknown or missing:
                raise ValueError(f"trng.source needs exactly {sorted(_SOURCE_KEYS)}")
            self.trng_config()  # validates values

    def trng_config(self, block: int | None = None, row: int | None = None,
                    op: OperatingPoint | None = None,
                    row_entropy: float | None = None) -> TrngConfig:
        src = self.source or {}
        return TrngConfig(
            row_entropy=float(row_entropy if row_entropy is not None else src["row_entropy"]),
            op=op if op is not None else OperatingPoint.from_dict(src["op"]),
            block=int(block if block is not None else src["block"]),
            row=int(row if row is not None else src["row"]),
            entropy_target=self.entropy_target,
            direct_cell_threshold=self.direct_cell_threshold,
        )

    def to_dict(self) -> dict:
        return {"source": copy.deepcopy(self.source), "entropy_target": self.entropy_target,
                "direct_cell_threshold": self.direct_cell_threshold}


@dataclass
class RunConfig:
    seed: int = 1
    geometry: SramGeometry = field(default_factory=SramGeometry)
    fault_model: FaultModelConfig = field(default_factory=FaultModelConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    trng: TrngSettings = field(default_factory=TrngSettings)
    sts: StsConfig = field(default_factory=StsConfig)
    perf: PerfInputs = field(default_factory=PerfInputs)
    cachesim: CacheTrngConfig = field(default_factory=CacheTrngConfig)
    outputs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "geometry": {"rows": self.geometry.rows, "cols": self.geometry.cols,
                         "blocks": self.geometry.blocks},
            "fault_model": self.fault_model.to_dict(),
            "sweep": self.sweep.to_dict(),
            "trng": self.trng.to_dict(),
            "sts": self.sts.to_dict(),
            "perf": self.perf.to_dict(),
            "cachesim": self.cachesim.to_dict(),
            "outputs": dict(self.outputs),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def with_seed(self, seed: int) -> "RunConfig":
        out = copy.copy(self)
        out.seed = _check_seed(seed)
        return out


def _check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    return seed


def default_document() -> dict:
    text = resources.files("sramtrng").joinpath("data/default_config.json").read_text()
    return json.loads(text)


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        name = f"{where}{key}"
        if key not in base:
            raise ValueError(f"unknown config key {name!r}")
        if isinstance(base[key], dict) and isinstance(value, dict) and key != "source":
            out[key] = _merge(base[key], value, name + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


def from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ValueError("config document must be a JSON object")
    d = _merge(default_document(), doc)
    trng = d["trng"]
    unknown = set(trng) - _TRNG_KEYS
    if unknown:
        raise ValueError(f"unknown trng keys: {sorted(unknown)}")
    outputs = d["outputs"]
    for key, value in outputs.items():
        if key not in OUTPUT_KEYS or not isinstance(value, str):
            raise ValueError(f"outputs.{key} must be one of {OUTPUT_KEYS} with a string path")
    return RunConfig(
        seed=_check_seed(d["seed"]),
        geometry=SramGeometry(**d["geometry"]),
        fault_model=FaultModelConfig.from_dict(d["fault_model"]),
        sweep=SweepConfig.from_dict(d["sweep"]),
        trng=TrngSettings(**trng),
        sts=StsConfig.from_dict(d["sts"]),
        perf=PerfInputs.from_dict(d["perf"]),
        cachesim=CacheTrngConfig.from_dict(d["cachesim"]),
        outputs=outputs,
    )


def loads(text: str, path=None) -> RunConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[:exc.pos].encode())
        raise ConfigError(exc.msg, path, offset) from None
    try:
        return from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), path) from None


def load(path=None) -> RunConfig:
    """Load a config file, or the shipped defaults when ``path`` is None."""
    if path is None:
        return from_dict({})
    p = Path(path)
    try:
        data = p.read_bytes()
    except OSError as exc:
        raise ConfigError(exc.strerror or str(exc), path) from None
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError("not valid UTF-8", path, exc.start) from None
    return loads(text, path)


def default_fault_config() -> FaultModelConfig:
    return from_dict({}).fault_model
