"""Pipeline configuration: one human-editable YAML file.

Relative paths are resolved against the config file's directory. The
judge model must differ from every generator model.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import yaml

from .annotate import AnnotationParams
from .ingest import DEFAULT_COLUMNS, ColumnMap
from .narrate import ModelConfig
from .segment import SegmentationParams

VALID_FORMATS = ("csv", "map", "json", "txt")


class ConfigError(Exception):
    pass


@dataclass
class PipelineConfig:
    ais_files: List[str] = field(default_factory=list)
    column_map: ColumnMap = field(default_factory=ColumnMap)
    annotation: AnnotationParams = field(default_factory=AnnotationParams)
    segmentation: SegmentationParams = field(default_factory=SegmentationParams)
    proximity_nm: float = 5.0
    layers: Dict[str, str] = field(default_factory=dict)
    grids: Dict[str, str] = field(default_factory=dict)
    out_dir: str = "out"
    formats: List[str] = field(default_factory=lambda: list(VALID_FORMATS))
    generators: List[ModelConfig] = field(default_factory=list)
    judge: Optional[ModelConfig] = None


def _resolve(base: Path, value: str) -> str:
    p = Path(value)
    return str(p if p.is_absolute() else base / p)


def _model_config(raw: dict) -> ModelConfig:
    try:
        model_id = raw["model_id"]
    except KeyError as exc:
        raise ConfigError("model entry needs a model_id") from exc
    return ModelConfig(
        model_id=model_id,
        base_url=raw.get("base_url", "mock"),
        api_key_env=raw.get("api_key_env", ""),
        temperature=raw.get("temperature", 0.1),
        max_retries=raw.get("max_retries", 3),
        timeout_s=raw.get("timeout_s", 60.0),
    )


def load_config(path: Union[str, Path]) -> PipelineConfig:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    base = path.parent
    cfg = PipelineConfig()

    inp = raw.get("input", {})
    cfg.ais_files = [_resolve(base, f) for f in inp.get("ais_files", [])]
    columns = inp.get("columns", dict(DEFAULT_COLUMNS))
    cfg.column_map = ColumnMap(
        columns={k: int(v) for k, v in columns.items()},
        delimiter=inp.get("delimiter", ","),
        has_header=bool(inp.get("has_header", True)),
        ts_format=inp.get("ts_format", "epoch"),
    )

    ann = raw.get("annotation", {})
    cfg.annotation = AnnotationParams(
        stop_speed_knots=ann.get("stop_speed_knots", 0.5),
        gap_seconds=ann.get("gap_seconds", 1800.0),
        speed_change_ratio=ann.get("speed_change_ratio", 0.25),
        slow_speed_knots=ann.get("slow_speed_knots", 1.0),
        turn_degrees=ann.get("turn_degrees", 5.0),
        slow_sustain_seconds=ann.get("slow_sustain_seconds", 300.0),
        noise_return_degrees=ann.get("noise_return_degrees", 170.0),
        window_mode=ann.get("window_mode", "count"),
        window_count=ann.get("window_count", 10),
        window_seconds=ann.get("window_seconds", 600.0),
        overrides=ann.get("overrides", {}),
    )

    seg = raw.get("segmentation", {})
    cfg.segmentation = SegmentationParams(
        trip_gap_seconds=seg.get("trip_gap_seconds", 10800.0),
        maneuver_degrees=seg.get("maneuver_degrees", 5.0),
    )
    if cfg.segmentation.trip_gap_seconds <= cfg.annotation.gap_seconds:
        raise ConfigError("segmentation.trip_gap_seconds must exceed annotation.gap_seconds")

    enr = raw.get("enrichment", {})
    cfg.proximity_nm = enr.get("proximity_nm", 5.0)
    cfg.layers = {k: _resolve(base, v) for k, v in (raw.get("layers") or {}).items()}
    cfg.grids = {k: _resolve(base, v) for k, v in (raw.get("grids") or {}).items()}

    out = raw.get("output", {})
    cfg.out_dir = _resolve(base, out.get("directory", "out"))
    cfg.formats = list(out.get("formats", list(VALID_FORMATS)))
    for f in cfg.formats:
        if f not in VALID_FORMATS:
            raise ConfigError(f"unknown output format {f!r}")

    models = raw.get("models", {})
    cfg.generators = [_model_config(m) for m in models.get("generators", [])]
    judge_raw = models.get("judge")
    cfg.judge = _model_config(judge_raw) if judge_raw else None
    if cfg.judge is not None:
        generator_ids = {m.model_id for m in cfg.generators}
        if cfg.judge.model_id in generator_ids:
            raise ConfigError(
                "judge model must differ from every generator model "
                f"({cfg.judge.model_id!r} is also a generator)"
            )
    return cfg
