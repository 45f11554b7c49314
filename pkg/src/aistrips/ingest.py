"""Parsing and noise filtering for delimited AIS position exports.

Rows are mapped to :class:`~aistrips.core.AisPoint` through a configurable
column map, grouped per vessel, and cleaned: exact duplicates, delayed
(out-of-order) messages, and physically impossible jumps are dropped with
an auditable reason each.
"""
from __future__ import annotations

import calendar
import csv
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .core import AisPoint, haversine_nm

logger = logging.getLogger(__name__)

# Implied speed above which a jump cannot be real vessel movement (knots).
TELEPORT_KNOTS = 80.0

DEFAULT_COLUMNS = {
    "ts": 0,
    "vessel_id": 1,
    "lat": 2,
    "lon": 3,
    "sog": 4,
    "cog": 5,
    "heading": 6,
    "ship_type": 7,
}


class RejectionReason(Enum):
    DUPLICATE = "DUPLICATE"
    INVALID_COORDINATES = "INVALID_COORDINATES"
    OUT_OF_ORDER = "OUT_OF_ORDER"
    UNPARSEABLE = "UNPARSEABLE"
    TELEPORT = "TELEPORT"


@dataclass(frozen=True)
class Rejection:
    """One dropped record: who, when (if known), why, and which field."""

    vessel_id: str
    ts: Optional[int]
    reason: RejectionReason
    detail: str = ""


@dataclass(frozen=True)
class ColumnMap:
    """Field-to-column mapping for one delimited export flavor.

    ``ts_format`` is either ``"epoch"`` (UNIX seconds) or a ``strptime``
    pattern interpreted in GMT.
    """

    columns: Dict[str, int] = field(default_factory=lambda: dict(DEFAULT_COLUMNS))
    delimiter: str = ","
    has_header: bool = True
    ts_format: str = "epoch"


def _parse_ts(text: str, fmt: str) -> int:
    if fmt == "epoch":
        return int(float(text))
    return calendar.timegm(time.strptime(text, fmt))


def parse_record(line: str, column_map: ColumnMap) -> Union[AisPoint, Rejection]:
    """Parse one non-header row into an AisPoint, or reject it.

    Malformed fields yield UNPARSEABLE with the offending field name;
    coordinates outside WGS84 bounds (and the (0, 0) fill value) yield
    INVALID_COORDINATES. Never raises on bad data.
    """
    cols = column_map.columns
    row = next(csv.reader([line], delimiter=column_map.delimiter))
    vessel_id = ""
    try:
        vessel_id = row[cols["vessel_id"]].strip()
    except IndexError:
        return Rejection("", None, RejectionReason.UNPARSEABLE, "vessel_id")
    if not vessel_id:
        return Rejection("", None, RejectionReason.UNPARSEABLE, "vessel_id")

    try:
        ts = _parse_ts(row[cols["ts"]].strip(), column_map.ts_format)
    except (ValueError, IndexError):
        return Rejection(vessel_id, None, RejectionReason.UNPARSEABLE, "ts")
    if ts <= 0:
        return Rejection(vessel_id, ts, RejectionReason.UNPARSEABLE, "ts")

    values = {}
    for name in ("lat", "lon", "sog", "cog"):
        try:
            values[name] = float(row[cols[name]].strip())
        except (ValueError, IndexError):
            return Rejection(vessel_id, ts, RejectionReason.UNPARSEABLE, name)
    lat, lon, sog, cog = values["lat"], values["lon"], values["sog"], values["cog"]

    if not (-90.0 <= lat <= 90.0) or not (-180.0 < lon <= 180.0):
        return Rejection(vessel_id, ts, RejectionReason.INVALID_COORDINATES, "lat/lon")
    if lat == 0.0 and lon == 0.0:
        # well-known AIS default fill position
        return Rejection(vessel_id, ts, RejectionReason.INVALID_COORDINATES, "null island")
    if sog < 0.0:
        return Rejection(vessel_id, ts, RejectionReason.UNPARSEABLE, "sog")

    heading: Optional[float] = None
    hcol = cols.get("heading")
    if hcol is not None and hcol < len(row):
        raw = row[hcol].strip()
        if raw and raw.lower() not in ("n/a", "nan"):
            try:
                heading = float(raw)
            except ValueError:
                return Rejection(vessel_id, ts, RejectionReason.UNPARSEABLE, "heading")
            if heading == 511.0:  # AIS "not available" sentinel
                heading = None

    ship_type = ""
    scol = cols.get("ship_type")
    if scol is not None and scol < len(row):
        ship_type = row[scol].strip()

    return AisPoint(
        ts=ts,
        vessel_id=vessel_id,
        lon=lon,
        lat=lat,
        sog=sog,
        cog=cog % 360.0,
        heading=heading,
        ship_type=ship_type,
    )


def clean_stream(points: Sequence[AisPoint]) -> Tuple[List[AisPoint], List[Rejection]]:
    """Enforce a strictly increasing, physically plausible per-vessel stream.

    Keys duplicates on exact (ts, lon, lat) against the last kept point;
    older-or-equal timestamps are delayed messages; implied speed above
    TELEPORT_KNOTS drops the later point.
    """
    kept: List[AisPoint] = []
    rejections: List[Rejection] = []
    for p in points:
        if kept:
            prev = kept[-1]
            if p.ts == prev.ts and p.lon == prev.lon and p.lat == prev.lat:
                rejections.append(Rejection(p.vessel_id, p.ts, RejectionReason.DUPLICATE))
                continue
            if p.ts <= prev.ts:
                rejections.append(Rejection(p.vessel_id, p.ts, RejectionReason.OUT_OF_ORDER))
                continue
            dt = p.ts - prev.ts
            dist = haversine_nm(prev.lonlat, p.lonlat)
            if dist / dt * 3600.0 > TELEPORT_KNOTS:
                rejections.append(Rejection(p.vessel_id, p.ts, RejectionReason.TELEPORT))
                continue
        kept.append(p)
    return kept, rejections


def group_by_vessel(records: Iterable[AisPoint]) -> Dict[str, List[AisPoint]]:
    """Group a mixed stream by vessel, time-sorted, deterministic key order."""
    groups: Dict[str, List[AisPoint]] = {}
    for p in records:
        groups.setdefault(p.vessel_id, []).append(p)
    out: Dict[str, List[AisPoint]] = {}
    for vid in sorted(groups):
        out[vid] = sorted(groups[vid], key=lambda p: p.ts)  # stable for equal ts
    return out


def load_points(
    paths: Sequence[Union[str, Path]], column_map: ColumnMap
) -> Tuple[Dict[str, List[AisPoint]], List[Rejection]]:
    """Read AIS files end to end: parse, group per vessel, clean.

    Returns cleaned per-vessel streams plus the combined rejection log.
    """
    parsed: List[AisPoint] = []
    rejections: List[Rejection] = []
    for path in paths:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        start = 1 if column_map.has_header and lines else 0
        for line in lines[start:]:
            if not line.strip():
                continue
            result = parse_record(line, column_map)
            if isinstance(result, Rejection):
                rejections.append(result)
            else:
                parsed.append(result)
    streams: Dict[str, List[AisPoint]] = {}
    for vid, pts in group_by_vessel(parsed).items():
        kept, rej = clean_stream(pts)
        rejections.extend(rej)
        if kept:
            streams[vid] = kept
    logger.info(
        "ingested %d points across %d vessels (%d rejected)",
        sum(len(v) for v in streams.values()),
        len(streams),
        len(rejections),
    )
    return streams, rejections


def write_rejection_log(rejections: Sequence[Rejection], path: Union[str, Path]) -> None:
    """One line per rejection: vessel_id,ts,reason."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["vessel_id", "ts", "reason"])
        for r in rejections:
            writer.writerow([r.vessel_id, "" if r.ts is None else r.ts, r.reason.value])
