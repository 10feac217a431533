"""Pipeline-wide configuration: every module config plus run-level settings.

Config files are JSON objects with one section per module, e.g.::

    {"eds": {"sample_count": 16}, "train": {"lr": 0.2}, "seed": 7}

Unknown keys are rejected. The fully resolved config is written into every
run directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, is_dataclass, replace
from pathlib import Path

from .attention import EDAConfig
from .benchmark import BenchmarkConfig
from .distillation import KDConfig
from .framing import BinningConfig
from .localization import LocalizeConfig
from .sampling import EDSConfig
from .simulator import SimConfig


@dataclass(frozen=True)
class TrainSection:
    lr: float = 2e-5
    epochs: int = 10
    batch_size: int = 128
    topk_fraction: float = 1 / 16
    optimizer: str = "sgd"
    sampler: str = "eds"
    eda_enabled: bool = True
    kd_enabled: bool = True
    init_scale: float = 0.01


@dataclass(frozen=True)
class PipelineConfig:
    sim: SimConfig = SimConfig()
    binning: BinningConfig = BinningConfig()
    eds: EDSConfig = EDSConfig()
    eda: EDAConfig = EDAConfig()
    kd: KDConfig = KDConfig()
    train: TrainSection = TrainSection()
    localize: LocalizeConfig = LocalizeConfig()
    benchmark: BenchmarkConfig = BenchmarkConfig()
    # "raw" localizes on every event of the window, "rendered" on the budgeted frame
    localize_map: str = "raw"
    seed: int = 0

    def to_dict(self) -> dict:
        return _to_dict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, out_dir: str | Path) -> None:
        Path(out_dir, "config.json").write_text(self.to_json())


def standard_benchmark_config(seed: int = 7) -> PipelineConfig:
    """Settings of the standard synthetic benchmark (20 train / 8 test videos)."""
    return PipelineConfig(
        eds=EDSConfig(sample_count=16, seed=seed),
        kd=KDConfig(alpha=3.0),
        train=TrainSection(lr=0.2, epochs=20, batch_size=4),
        localize=LocalizeConfig(threshold=0.25),
        benchmark=BenchmarkConfig(seed=seed),
        seed=seed,
    )


def _to_dict(obj):
    if is_dataclass(obj):
        return {f.name: _to_dict(getattr(obj, f.name)) for f in fields(obj)}
    return obj


def _merge(obj, overrides: dict, where: str):
    if not isinstance(overrides, dict):
        raise ValueError(f"{where}: expected an object")
    known = {f.name: f for f in fields(obj)}
    changes = {}
    for key, value in overrides.items():
        if key not in known:
            raise ValueError(f"{where}: unknown key {key!r}")
        current = getattr(obj, key)
        if is_dataclass(current):
            changes[key] = _merge(current, value, f"{where}.{key}")
        else:
            changes[key] = _coerce(current, value, f"{where}.{key}")
    return replace(obj, **changes)


def _coerce(current, value, where: str):
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ValueError(f"{where}: expected true/false")
        return value
    if isinstance(current, int):
        if isinstance(value, bool) or not float(value).is_integer():
            raise ValueError(f"{where}: expected an integer")
        return int(value)
    if isinstance(current, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"{where}: expected a number")
        return float(value)
    return value


def merge_config(base: PipelineConfig, overrides: dict) -> PipelineConfig:
    return _merge(base, overrides, "config")


def load_config(path: str | Path | None, base: PipelineConfig | None = None) -> PipelineConfig:
    base = base or PipelineConfig()
    if path is None:
        return base
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    return merge_config(base, json.loads(p.read_text()))


def config_from_dict(d: dict) -> PipelineConfig:
    return merge_config(PipelineConfig(), d)

