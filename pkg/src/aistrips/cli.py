"""Command-line driver: run the pipeline end to end or stage by stage.

Every stage writes its result as a file under the output directory, so
stages compose: running them separately produces the same artifacts as
one ``run``. Outputs are deterministic for identical inputs.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import export as export_fmt
from .annotate import FLAG_NAMES, AnnotatedPoint, Annotation, annotate_stream
from .config import VALID_FORMATS, ConfigError, PipelineConfig, load_config
from .core import AisPoint
from .enrich import GridSet, LayerStore, enrich_trip, load_grids, load_layers
from .ingest import load_points, write_rejection_log
from .narrate import (
    MALFORMED_VERDICT,
    MalformedVerdictError,
    ModelConfig,
    TransportError,
    TripNarrative,
    judge_narrative,
    make_client,
    run_narratives,
    write_results,
)
from .report import report, write_report
from .segment import Trip, segment_vessel, trip_from_dict, trip_to_dict

logger = logging.getLogger(__name__)

POINT_FIELDS = ["ts", "vessel_id", "lat", "lon", "sog", "cog", "heading", "ship_type"]
FLAG_COLUMNS = [name.lower() for name in FLAG_NAMES]


def _f(x: float) -> str:
    return repr(float(x))


def _point_row(p: AisPoint) -> List[str]:
    return [
        str(p.ts),
        p.vessel_id,
        _f(p.lat),
        _f(p.lon),
        _f(p.sog),
        _f(p.cog),
        "" if p.heading is None else _f(p.heading),
        p.ship_type,
    ]


def _point_from_row(row: Dict[str, str]) -> AisPoint:
    return AisPoint(
        ts=int(row["ts"]),
        vessel_id=row["vessel_id"],
        lon=float(row["lon"]),
        lat=float(row["lat"]),
        sog=float(row["sog"]),
        cog=float(row["cog"]),
        heading=float(row["heading"]) if row["heading"] else None,
        ship_type=row["ship_type"],
    )


def write_points_csv(streams: Dict[str, List[AisPoint]], path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(POINT_FIELDS)
        for vid in sorted(streams):
            for p in streams[vid]:
                writer.writerow(_point_row(p))


def read_points_csv(path: Path) -> Dict[str, List[AisPoint]]:
    streams: Dict[str, List[AisPoint]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            p = _point_from_row(row)
            streams.setdefault(p.vessel_id, []).append(p)
    return {vid: streams[vid] for vid in sorted(streams)}


def write_annotated_csv(annotated: Dict[str, List[AnnotatedPoint]], path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(POINT_FIELDS + FLAG_COLUMNS)
        for vid in sorted(annotated):
            for ap in annotated[vid]:
                flags = [
                    "1" if ap.flags & Annotation[name] else "0" for name in FLAG_NAMES
                ]
                writer.writerow(_point_row(ap.point) + flags)


def read_annotated_csv(path: Path) -> Dict[str, List[AnnotatedPoint]]:
    out: Dict[str, List[AnnotatedPoint]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            p = _point_from_row(row)
            flags = Annotation.NONE
            for name in FLAG_NAMES:
                if row[name.lower()] == "1":
                    flags |= Annotation[name]
            out.setdefault(p.vessel_id, []).append(AnnotatedPoint(p, flags))
    return {vid: out[vid] for vid in sorted(out)}


def write_trips_json(trips: Sequence[Trip], path: Path) -> None:
    doc = [trip_to_dict(t) for t in trips]
    path.write_text(json.dumps(doc, indent=1), encoding="utf-8")


def read_trips_json(path: Path) -> List[Trip]:
    return [trip_from_dict(d) for d in json.loads(path.read_text(encoding="utf-8"))]


def _map_ordered(func, items: Sequence, jobs: int) -> List:
    """Apply func over items, optionally in parallel, preserving order."""
    if jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items))


# --- stages -------------------------------------------------------------------

def stage_ingest(cfg: PipelineConfig) -> Dict[str, List[AisPoint]]:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    streams, rejections = load_points(cfg.ais_files, cfg.column_map)
    write_points_csv(streams, out / "points.csv")
    write_rejection_log(rejections, out / "rejections.csv")
    return streams


def stage_annotate(
    cfg: PipelineConfig, streams: Optional[Dict[str, List[AisPoint]]] = None, jobs: int = 1
) -> Dict[str, List[AnnotatedPoint]]:
    out = Path(cfg.out_dir)
    if streams is None:
        streams = read_points_csv(out / "points.csv")
    vids = sorted(streams)
    results = _map_ordered(
        lambda vid: annotate_stream(streams[vid], cfg.annotation), vids, jobs
    )
    annotated = dict(zip(vids, results))
    write_annotated_csv(annotated, out / "annotated.csv")
    return annotated


def stage_segment(
    cfg: PipelineConfig,
    annotated: Optional[Dict[str, List[AnnotatedPoint]]] = None,
    jobs: int = 1,
) -> List[Trip]:
    out = Path(cfg.out_dir)
    if annotated is None:
        annotated = read_annotated_csv(out / "annotated.csv")
    vids = sorted(annotated)
    per_vessel = _map_ordered(
        lambda vid: segment_vessel(annotated[vid], cfg.segmentation), vids, jobs
    )
    trips = [t for trips_of_vessel in per_vessel for t in trips_of_vessel]
    write_trips_json(trips, out / "trips.json")
    logger.info("segmented %d trips", len(trips))
    return trips


def stage_enrich(
    cfg: PipelineConfig, trips: Optional[List[Trip]] = None, jobs: int = 1
) -> List[Trip]:
    out = Path(cfg.out_dir)
    if trips is None:
        trips = read_trips_json(out / "trips.json")
    layers = load_layers(cfg.layers) if cfg.layers else LayerStore()
    grids = load_grids(cfg.grids) if cfg.grids else GridSet()
    trips = _map_ordered(
        lambda t: enrich_trip(t, layers, grids, cfg.proximity_nm), trips, jobs
    )
    write_trips_json(trips, out / "trips_enriched.json")
    return trips


def _load_enriched(cfg: PipelineConfig) -> List[Trip]:
    out = Path(cfg.out_dir)
    enriched = out / "trips_enriched.json"
    return read_trips_json(enriched if enriched.exists() else out / "trips.json")


def stage_export(cfg: PipelineConfig, trips: Optional[List[Trip]] = None) -> None:
    out = Path(cfg.out_dir)
    if trips is None:
        trips = _load_enriched(cfg)
    if "csv" in cfg.formats:
        parts = [export_fmt.to_csv(t, header=(i == 0)) for i, t in enumerate(trips)]
        (out / "episodes.csv").write_text("".join(parts), encoding="utf-8")
    if "map" in cfg.formats:
        parts = [export_fmt.to_map_csv(t, header=(i == 0)) for i, t in enumerate(trips)]
        (out / "episodes_map.csv").write_text("".join(parts), encoding="utf-8")
    for trip in trips:
        export_fmt.write_trip_files(trip, out, cfg.formats)


def stage_describe(
    cfg: PipelineConfig,
    trips: Optional[List[Trip]] = None,
    jobs: int = 1,
    with_judge: bool = False,
) -> List[dict]:
    out = Path(cfg.out_dir)
    if trips is None:
        trips = _load_enriched(cfg)
    judge = cfg.judge if with_judge else None
    records = run_narratives(trips, cfg.generators, judge, jobs=jobs)
    write_results(records, out / "results.jsonl")
    return records


def stage_judge(cfg: PipelineConfig, jobs: int = 1) -> List[dict]:
    if cfg.judge is None:
        raise ConfigError("no judge model configured")
    out = Path(cfg.out_dir)
    trips = {t.trip_id: t for t in _load_enriched(cfg)}
    path = out / "results.jsonl"
    records = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]
    client = make_client(cfg.judge.base_url)

    def judge_one(rec: dict) -> dict:
        if not rec.get("narrative") or rec.get("verdict"):
            return rec
        trip = trips.get(rec["trip_id"])
        if trip is None:
            return rec
        narrative = TripNarrative(
            text=rec["narrative"],
            stats=rec.get("stats"),
            model_id=rec["model_id"],
            latency_s=rec.get("latency_s") or 0.0,
            raw_response=rec["narrative"],
        )
        try:
            verdict = judge_narrative(trip, narrative, cfg.judge, client)
            rec["verdict"] = {
                "relevance_score": verdict.relevance,
                "faithfulness_score": verdict.faithfulness,
                "correctness_score": verdict.correctness,
                "explanation": verdict.explanation,
                "judge_model_id": verdict.judge_model_id,
            }
            rec["verdict_error"] = None
        except MalformedVerdictError:
            rec["verdict_error"] = MALFORMED_VERDICT
        except TransportError:
            rec["verdict_error"] = "TRANSPORT"
        return rec

    records = _map_ordered(judge_one, records, jobs)
    write_results(records, path)
    return records


def stage_report(
    cfg: PipelineConfig,
    trips: Optional[List[Trip]] = None,
    records: Optional[List[dict]] = None,
) -> dict:
    out = Path(cfg.out_dir)
    if trips is None:
        trips = _load_enriched(cfg)
    if records is None:
        results = out / "results.jsonl"
        if results.exists():
            records = [
                json.loads(line)
                for line in results.read_text(encoding="utf-8").splitlines()
            ]
    bundle = report(trips, records)
    write_report(bundle, out)
    return bundle


def run_pipeline(cfg: PipelineConfig, jobs: int = 1) -> int:
    """The whole pipeline: ingest through report. Returns the exit status."""
    streams = stage_ingest(cfg)
    annotated = stage_annotate(cfg, streams, jobs)
    trips = stage_segment(cfg, annotated, jobs)
    trips = stage_enrich(cfg, trips, jobs)
    stage_export(cfg, trips)
    records: Optional[List[dict]] = None
    if cfg.generators:
        records = stage_describe(cfg, trips, jobs, with_judge=cfg.judge is not None)
    stage_report(cfg, trips, records)
    return 0


# --- argument handling ---------------------------------------------------------

def _apply_overrides(cfg: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    if getattr(args, "formats", None):
        formats = [f.strip() for f in args.formats.split(",") if f.strip()]
        for f in formats:
            if f not in VALID_FORMATS:
                raise ConfigError(f"unknown output format {f!r}")
        cfg.formats = formats
    if getattr(args, "models", None):
        wanted = {m.strip() for m in args.models.split(",")}
        cfg.generators = [m for m in cfg.generators if m.model_id in wanted]
        missing = wanted - {m.model_id for m in cfg.generators}
        if missing:
            raise ConfigError(f"models not in config: {sorted(missing)}")
    if getattr(args, "judge", None):
        base = cfg.judge or ModelConfig(model_id=args.judge)
        cfg.judge = ModelConfig(
            model_id=args.judge,
            base_url=base.base_url,
            api_key_env=base.api_key_env,
            temperature=base.temperature,
            max_retries=base.max_retries,
            timeout_s=base.timeout_s,
        )
        if cfg.judge.model_id in {m.model_id for m in cfg.generators}:
            raise ConfigError("judge model must differ from every generator model")
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aistrips",
        description="Turn raw AIS streams into context-enriched semantic trips, "
        "export them, and drive LLM narratives.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("ingest", "parse, filter, and group raw AIS files"),
        ("annotate", "tag points with mobility events"),
        ("segment", "split annotated streams into trips and episodes"),
        ("enrich", "attach layer, weather, and depth context"),
        ("export", "write the csv/map/json/txt representations"),
        ("describe", "generate trip narratives with the configured models"),
        ("judge", "score generated narratives with the judge model"),
        ("report", "summarize episodes, coverage, deviations, and scores"),
        ("run", "full pipeline"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="pipeline config file")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers")
        p.add_argument("--out", help="override the output directory")
        if name in ("export", "run"):
            p.add_argument("--formats", help="comma-separated subset of csv,map,json,txt")
        if name in ("describe", "run"):
            p.add_argument("--models", help="comma-separated generator model ids")
        if name in ("describe", "judge", "run"):
            p.add_argument("--judge", help="judge model id")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "ingest":
            stage_ingest(cfg)
        elif args.command == "annotate":
            stage_annotate(cfg, jobs=args.jobs)
        elif args.command == "segment":
            stage_segment(cfg, jobs=args.jobs)
        elif args.command == "enrich":
            stage_enrich(cfg, jobs=args.jobs)
        elif args.command == "export":
            stage_export(cfg)
        elif args.command == "describe":
            stage_describe(cfg, jobs=args.jobs, with_judge=False)
        elif args.command == "judge":
            stage_judge(cfg, jobs=args.jobs)
        elif args.command == "report":
            stage_report(cfg)
        elif args.command == "run":
            return run_pipeline(cfg, jobs=args.jobs)
    except (ConfigError, FileNotFoundError) as exc:
        logger.error("%s", exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
