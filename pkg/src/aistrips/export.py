"""Serialization of enriched trips into the four output representations.

CSV holds one row per episode with start/end points as WKT; MAP is the
same schema with a single geometry column for map tools; JSON is an array
of episode objects with a fixed key order; TXT is a factual one-sentence-
per-episode paragraph. All four are deterministic: the same trip always
produces the same bytes.
"""
from __future__ import annotations

import csv
import io
import json
from typing import List, Optional

from .core import ContextBundle, format_epoch
from .segment import Episode, EpisodeType, Trip

CSV_COLUMNS = [
    "trip_id",
    "episode_index",
    "movement",
    "start_ts",
    "end_ts",
    "duration_seconds",
    "distance_miles",
    "speed_knots",
    "heading",
    "direction",
    "placemarks",
    "wind_beaufort",
    "wind_direction",
    "sea_depth",
    "start_location_wkt",
    "end_location_wkt",
]

MAP_COLUMNS = CSV_COLUMNS[:-2] + ["geometry"]


def _ctx(ep: Episode) -> ContextBundle:
    return ep.context if ep.context is not None else ContextBundle()


def _wkt_point(lon: float, lat: float) -> str:
    return f"POINT ({lon:.6f} {lat:.6f})"


def _wkt_linestring(path) -> str:
    inner = ", ".join(f"{lon:.6f} {lat:.6f}" for lon, lat in path)
    return f"LINESTRING ({inner})"


def episode_geometry_wkt(ep: Episode) -> str:
    """WKT for the MAP column: a point for stops, the path otherwise."""
    if ep.type is EpisodeType.STOPPED:
        lon, lat = ep.path[0]
        return _wkt_point(lon, lat)
    return _wkt_linestring(ep.path)


def _common_cells(trip: Trip, index: int, ep: Episode) -> List[str]:
    ctx = _ctx(ep)
    return [
        trip.trip_id,
        str(index),
        ep.type.label,
        str(ep.start.ts),
        str(ep.end.ts),
        str(ep.stats.duration_s),
        f"{ep.stats.distance_nm:.2f}",
        f"{ep.stats.speed_knots:.1f}",
        str(ep.stats.heading_deg),
        ep.stats.direction.value,
        ctx.placemarks or "",
        "" if ctx.wind_beaufort is None else str(ctx.wind_beaufort),
        "" if ctx.wind_direction is None else ctx.wind_direction.value,
        "" if ctx.sea_depth_m is None else str(ctx.sea_depth_m),
    ]


def _write_rows(columns: List[str], rows: List[List[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return buf.getvalue()


def to_csv(trip: Trip, header: bool = True) -> str:
    """Episode table with start and end locations as WKT points."""
    rows = []
    for i, ep in enumerate(trip.episodes):
        rows.append(
            _common_cells(trip, i, ep)
            + [_wkt_point(ep.start.lon, ep.start.lat), _wkt_point(ep.end.lon, ep.end.lat)]
        )
    text = _write_rows(CSV_COLUMNS, rows)
    return text if header else text.split("\n", 1)[1]


def to_map_csv(trip: Trip, header: bool = True) -> str:
    """Episode table with one geometry column for map visualization."""
    rows = []
    for i, ep in enumerate(trip.episodes):
        rows.append(_common_cells(trip, i, ep) + [episode_geometry_wkt(ep)])
    text = _write_rows(MAP_COLUMNS, rows)
    return text if header else text.split("\n", 1)[1]


def episode_to_json_obj(ep: Episode) -> dict:
    """One episode as the fixed-key-order object used by the JSON format.

    Context keys are omitted entirely when the corresponding source did
    not cover the episode.
    """
    ctx = _ctx(ep)
    obj = {
        "direction": ep.stats.direction.value,
        "heading": ep.stats.heading_deg,
        "duration_seconds": ep.stats.duration_s,
        "distance_miles": ep.stats.distance_nm,
        "speed_knots": ep.stats.speed_knots,
        "movement": ep.type.label,
    }
    if ctx.wind_beaufort is not None:
        obj["wind_beaufort"] = ctx.wind_beaufort
    if ctx.wind_direction is not None:
        obj["wind_direction"] = ctx.wind_direction.value
    if ctx.sea_depth_m is not None:
        obj["sea_depth"] = ctx.sea_depth_m
    if ctx.placemarks is not None:
        obj["placemarks"] = ctx.placemarks
    obj["start_location"] = {"lon": ep.start.lon, "lat": ep.start.lat, "ts": ep.start.ts}
    obj["end_location"] = {"lon": ep.end.lon, "lat": ep.end.lat, "ts": ep.end.ts}
    return obj


def to_json(trip: Trip) -> str:
    """The trip as a JSON array of episode objects."""
    return json.dumps([episode_to_json_obj(ep) for ep in trip.episodes], indent=2)


def episode_sentence(ep: Episode) -> str:
    """One factual sentence reciting an episode's statistics and context.

    Numbers render exactly as stored; the optional depth and wind clauses
    are dropped when that context is absent.
    """
    ctx = _ctx(ep)
    s = (
        f"From {format_epoch(ep.start.ts)} until {format_epoch(ep.end.ts)}"
        f" {ep.type.label} {ep.stats.direction.value} at {ep.stats.heading_deg} degrees"
    )
    if ctx.placemarks:
        s += f" {ctx.placemarks}"
    s += (
        f", covering {ep.stats.distance_nm} nautical miles"
        f" in {ep.stats.duration_s} seconds at speed {ep.stats.speed_knots} knots"
    )
    if ctx.sea_depth_m is not None:
        s += f" at minimum sea depth of {ctx.sea_depth_m} meters"
    if ctx.wind_beaufort is not None and ctx.wind_direction is not None:
        s += (
            f" while {ctx.wind_direction.value} winds of intensity"
            f" {ctx.wind_beaufort}B were blowing"
        )
    return s + "."


def to_txt(trip: Trip) -> str:
    """The whole trip as a plain-text paragraph, one sentence per episode."""
    return " ".join(episode_sentence(ep) for ep in trip.episodes)


def write_trip_files(trip: Trip, out_dir, formats) -> List[str]:
    """Write the per-trip formats (json, txt) under out_dir/trips."""
    from pathlib import Path

    trip_dir = Path(out_dir) / "trips"
    trip_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        path = trip_dir / f"{trip.trip_id}.json"
        path.write_text(to_json(trip), encoding="utf-8")
        written.append(str(path))
    if "txt" in formats:
        path = trip_dir / f"{trip.trip_id}.txt"
        path.write_text(to_txt(trip), encoding="utf-8")
        written.append(str(path))
    return written
