"""Pipeline configuration, stored as TOML.

Every tunable that the processing chain exposes lives here with its
default, so a dumped config documents an experiment completely.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import tomli_w

from .compare import MatchWindow
from .enhance import ENHANCERS, CgfParams, ClaheParams, HfeParams
from .errors import ConfigError
from .evalstat import DEFAULT_AGE_BUCKETS, GroupingAttribute
from .extract.curvature import CurvatureParams
from .extract.keypoints import KeypointParams

METHODS = ("mc", "pc", "lbp", "sift")


@dataclass
class RoiConfig:
    width: int = 192
    height: int = 96


@dataclass
class ChainConfig:
    mc: list[str] = field(default_factory=lambda: ["clahe", "hfe"])
    pc: list[str] = field(default_factory=lambda: ["clahe", "hfe"])
    lbp: list[str] = field(default_factory=lambda: ["clahe"])
    sift: list[str] = field(default_factory=lambda: ["clahe", "cgf"])


@dataclass
class EnhanceConfig:
    clahe: ClaheParams = field(default_factory=ClaheParams)
    hfe: HfeParams = field(default_factory=HfeParams)
    cgf: CgfParams = field(default_factory=CgfParams)
    chains: ChainConfig = field(default_factory=ChainConfig)


@dataclass
class LbpConfig:
    scales: int = 3
    grid: tuple[int, int] = (8, 4)


@dataclass
class ExtractConfig:
    mc: CurvatureParams = field(default_factory=lambda: CurvatureParams(sigma=3.0))
    pc: CurvatureParams = field(default_factory=lambda: CurvatureParams(sigma=2.0))
    lbp: LbpConfig = field(default_factory=LbpConfig)
    sift: KeypointParams = field(default_factory=KeypointParams)


@dataclass
class MatchConfig:
    window: MatchWindow = field(default_factory=MatchWindow)
    ratio: float = 0.8


@dataclass
class EvaluateConfig:
    age_buckets: tuple[tuple[int, int], ...] = DEFAULT_AGE_BUCKETS
    z_variant: str = "sum"

    def attribute(self, kind: str) -> GroupingAttribute:
        return GroupingAttribute(kind, self.age_buckets)


@dataclass
class PipelineConfig:
    roi: RoiConfig = field(default_factory=RoiConfig)
    enhance: EnhanceConfig = field(default_factory=EnhanceConfig)
    extract: ExtractConfig = field(default_factory=ExtractConfig)
    match: MatchConfig = field(default_factory=MatchConfig)
    evaluate: EvaluateConfig = field(default_factory=EvaluateConfig)
    output_dir: str = ""


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    return obj


def config_to_dict(cfg: PipelineConfig) -> dict:
    return _to_plain(cfg)


def _coerce(value, default, path: str):
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        if default and isinstance(default[0], tuple):
            return tuple(tuple(_coerce(v, default[0], path)) for v in value)
        if default and len(value) != len(default) and not isinstance(default[0], float):
            raise ConfigError(f"{path}: expected {len(default)} values")
        kind = type(default[0]) if default else float
        return tuple(_coerce(v, kind(), path) for v in value)
    if isinstance(default, list):
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ConfigError(f"{path}: expected a list of strings")
        return list(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string")
        return value
    raise ConfigError(f"{path}: unsupported value")


def _build(cls_or_default, data: dict, path: str):
    default = cls_or_default() if isinstance(cls_or_default, type) else cls_or_default
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a table")
    names = {f.name for f in dataclasses.fields(default)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{path or 'top level'}]: {', '.join(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(default):
        cur = getattr(default, f.name)
        key = f"{path}.{f.name}" if path else f.name
        if f.name not in data:
            kwargs[f.name] = cur
        elif dataclasses.is_dataclass(cur):
            kwargs[f.name] = _build(cur, data[f.name], key)
        else:
            kwargs[f.name] = _coerce(data[f.name], cur, key)
    try:
        return type(default)(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from None


def config_from_dict(data: dict) -> PipelineConfig:
    cfg = _build(PipelineConfig, data, "")
    for method in METHODS:
        for step in getattr(cfg.enhance.chains, method):
            if step not in ENHANCERS:
                raise ConfigError(f"enhance.chains.{method}: unknown enhancer {step!r}")
    if cfg.evaluate.z_variant not in ("sum", "paper"):
        raise ConfigError("evaluate.z_variant must be 'sum' or 'paper'")
    try:
        GroupingAttribute("age", cfg.evaluate.age_buckets)
    except ValueError as exc:
        raise ConfigError(f"evaluate.age_buckets: {exc}") from None
    return cfg


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        data = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data)


def dump_config(cfg: PipelineConfig) -> str:
    return tomli_w.dumps(config_to_dict(cfg))
