"""Trip splitting and episode construction over annotated vessel streams.

A trip is the point subsequence between two successive stops or long
communication gaps. Inside a trip, maximal runs of same-kind points become
typed episodes: STOPPED (centroid), TURNING / MANEUVERING (full vertex
path, split on total heading change), COMMUNICATION GAP (known endpoints
only), and SAILING (endpoints only) for everything else.

Episode ranges share their boundary vertices so that every leg between
consecutive raw points is owned by exactly one episode: moving episodes
absorb the legs to and from adjacent stop points, and turning episodes
additionally absorb the boundary legs to and from adjacent sailing runs
(so their total heading change spans approach course to stabilized
course). All statistics are computed from the raw points in each range.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

from .annotate import AnnotatedPoint, Annotation
from .core import (
    AisPoint,
    CompassDirection,
    ContextBundle,
    LonLat,
    compass_of,
    haversine_nm,
    initial_bearing_deg,
    heading_delta,
    signed_heading,
)

logger = logging.getLogger(__name__)


class EpisodeType(Enum):
    STOPPED = "STOPPED"
    TURNING = "TURNING"
    MANEUVERING = "MANEUVERING"
    GAP = "GAP"
    SAILING = "SAILING"

    @property
    def label(self) -> str:
        """Rendered movement label; gaps read as COMMUNICATION GAP."""
        return "COMMUNICATION GAP" if self is EpisodeType.GAP else self.value


@dataclass(frozen=True)
class SegmentationParams:
    """Trip-splitting gap bound (longer than the annotation gap bound) and
    the total-heading-change threshold separating turns from maneuvers."""

    trip_gap_seconds: float = 10800.0
    maneuver_degrees: float = 5.0


@dataclass(frozen=True)
class Location:
    lon: float
    lat: float
    ts: int

    @property
    def lonlat(self) -> LonLat:
        return (self.lon, self.lat)


@dataclass(frozen=True)
class EpisodeStats:
    duration_s: int
    distance_nm: float
    speed_knots: float
    heading_deg: int  # total change for turns/maneuvers, overall heading otherwise
    direction: CompassDirection


@dataclass
class Episode:
    type: EpisodeType
    start: Location
    end: Location
    path: List[LonLat]
    stats: EpisodeStats
    context: Optional[ContextBundle] = None


@dataclass(frozen=True)
class TripStats:
    duration_s: int
    distance_nm: float
    speed_knots: float


@dataclass
class Trip:
    trip_id: str
    vessel_id: str
    ship_type: str
    episodes: List[Episode]
    stats: TripStats
    points: List[AisPoint] = field(default_factory=list, repr=False)
    origin_port: Optional[str] = None
    destination_port: Optional[str] = None
    ferry_dtw: Optional[float] = None
    ferry_dtw_raw: Optional[float] = None


def cumulative_heading_change(points: Sequence[AisPoint]) -> float:
    """Signed sum of per-step course deltas; handles turns beyond 180 degrees."""
    total = 0.0
    for a, b in zip(points, points[1:]):
        total += heading_delta(a.cog, b.cog)
    return total


def _rounded_heading(value: float) -> int:
    h = int(round(value))
    return 180 if h == -180 else h


def episode_stats(points: Sequence[AisPoint], ep_type: EpisodeType) -> EpisodeStats:
    """Statistics over the raw points backing one episode.

    Distance sums consecutive haversine legs, except STOPPED (zero) and
    GAP (straight-line between the known endpoints, speed left zero since
    the actual path is unknown). Speed is derived from the stored rounded
    distance so serialized values stay mutually consistent.
    """
    if not points:
        raise ValueError("episode over empty point range")
    first, last = points[0], points[-1]
    duration = last.ts - first.ts

    if ep_type is EpisodeType.STOPPED:
        raw_dist = 0.0
    elif ep_type is EpisodeType.GAP:
        raw_dist = haversine_nm(first.lonlat, last.lonlat)
    else:
        raw_dist = sum(haversine_nm(a.lonlat, b.lonlat) for a, b in zip(points, points[1:]))
    distance = round(raw_dist, 2)

    if ep_type is EpisodeType.GAP or duration <= 0:
        speed = 0.0
    else:
        speed = round(distance / duration * 3600.0, 1)

    if ep_type in (EpisodeType.TURNING, EpisodeType.MANEUVERING):
        basis = cumulative_heading_change(points)
    elif first.lonlat == last.lonlat:
        basis = 0.0
    else:
        basis = signed_heading(initial_bearing_deg(first.lonlat, last.lonlat))
    heading = _rounded_heading(basis)

    return EpisodeStats(
        duration_s=duration,
        distance_nm=distance,
        speed_knots=speed,
        heading_deg=heading,
        direction=compass_of(heading),
    )


def split_trips(
    annotated: Sequence[AnnotatedPoint], params: SegmentationParams
) -> List[List[AnnotatedPoint]]:
    """Cut one vessel's annotated stream into trip point ranges.

    Noise points are discarded first. A trip opens at the last point of a
    stop event (or the first point after a long gap) and closes at the
    first point of the next stop event (or the point before a long gap),
    so consecutive trips meet at berth positions. Silences no longer than
    the trip gap bound stay inside a trip. A trailing range still open at
    the end of the stream is emitted as a trip when it contains movement.
    """
    pts = [ap for ap in annotated if not ap.flags & Annotation.NOISE]
    trips: List[List[AnnotatedPoint]] = []

    def flush(rng: List[AnnotatedPoint]) -> None:
        if len(rng) >= 2 and any(not ap.flags & Annotation.STOP for ap in rng):
            trips.append(rng)

    cur: List[AnnotatedPoint] = []
    pending_start: Optional[AnnotatedPoint] = None
    for i, ap in enumerate(pts):
        prev = pts[i - 1] if i else None
        if prev is not None and ap.point.ts - prev.point.ts > params.trip_gap_seconds:
            if cur:
                flush(cur)
                cur = []
            pending_start = None  # resume fresh once communication returns
        if ap.flags & Annotation.STOP:
            if cur:
                cur.append(ap)
                flush(cur)
                cur = []
            pending_start = ap
        else:
            if not cur:
                cur = [pending_start] if pending_start is not None else []
                pending_start = None
            cur.append(ap)
    flush(cur)
    return trips


def _strip_isolated_turns(flags: List[Annotation]) -> List[Annotation]:
    out = list(flags)
    n = len(out)
    for i in range(n):
        if not out[i] & Annotation.TURN:
            continue
        prev_turn = i > 0 and bool(flags[i - 1] & Annotation.TURN)
        next_turn = i < n - 1 and bool(flags[i + 1] & Annotation.TURN)
        if not prev_turn and not next_turn:
            out[i] &= ~Annotation.TURN  # lone turn point: absorb as plain vertex
    return out


def build_episodes(
    trip_points: Sequence[AnnotatedPoint], params: SegmentationParams
) -> List[Episode]:
    """Construct the ordered episode list covering one trip contiguously."""
    if not trip_points:
        return []
    points = [ap.point for ap in trip_points]
    flags = _strip_isolated_turns([ap.flags for ap in trip_points])
    n = len(points)

    def klass(fl: Annotation) -> str:
        if fl & Annotation.STOP:
            return "S"
        if fl & Annotation.TURN:
            return "T"
        return "M"

    cls = [klass(fl) for fl in flags]
    gap_after = [
        bool(flags[i] & Annotation.GAP_START) and bool(flags[i + 1] & Annotation.GAP_END)
        for i in range(n - 1)
    ]

    # maximal runs, split on class change or an in-trip gap boundary
    runs: List[Tuple[str, int, int]] = []
    start = 0
    for i in range(1, n):
        if cls[i] != cls[start] or gap_after[i - 1]:
            runs.append((cls[start], start, i - 1))
            start = i
    runs.append((cls[start], start, n - 1))

    def location(idx: int) -> Location:
        p = points[idx]
        return Location(p.lon, p.lat, p.ts)

    episodes: List[Episode] = []
    for k, (kind, c, d) in enumerate(runs):
        if k > 0 and gap_after[runs[k - 1][2]]:
            i = runs[k - 1][2]
            gap_pts = points[i : i + 2]
            episodes.append(
                Episode(
                    type=EpisodeType.GAP,
                    start=location(i),
                    end=location(i + 1),
                    path=[points[i].lonlat, points[i + 1].lonlat],
                    stats=episode_stats(gap_pts, EpisodeType.GAP),
                )
            )
        if kind == "S":
            run_pts = points[c : d + 1]
            clon = sum(p.lon for p in run_pts) / len(run_pts)
            clat = sum(p.lat for p in run_pts) / len(run_pts)
            episodes.append(
                Episode(
                    type=EpisodeType.STOPPED,
                    start=Location(clon, clat, points[c].ts),
                    end=Location(clon, clat, points[d].ts),
                    path=[(clon, clat)],
                    stats=episode_stats(run_pts, EpisodeType.STOPPED),
                )
            )
            continue

        # moving run: absorb boundary legs per the ownership rules above
        a, b = c, d
        if c > 0 and not gap_after[c - 1] and (cls[c - 1] == "S" or kind == "T"):
            a = c - 1
        if d < n - 1 and not gap_after[d] and (cls[d + 1] == "S" or kind == "T"):
            b = d + 1
        rng = points[a : b + 1]
        if kind == "T":
            total = cumulative_heading_change(rng)
            ep_type = (
                EpisodeType.TURNING
                if abs(total) >= params.maneuver_degrees
                else EpisodeType.MANEUVERING
            )
            path = [p.lonlat for p in rng]
        else:
            ep_type = EpisodeType.SAILING
            path = [rng[0].lonlat, rng[-1].lonlat]
        episodes.append(
            Episode(
                type=ep_type,
                start=location(a),
                end=location(b),
                path=path,
                stats=episode_stats(rng, ep_type),
            )
        )
    return episodes


def trip_stats(points: Sequence[AisPoint], episodes: Sequence[Episode]) -> TripStats:
    """Whole-trip duration, distance, and average speed from raw reports."""
    duration = episodes[-1].end.ts - episodes[0].start.ts
    raw = sum(haversine_nm(a.lonlat, b.lonlat) for a, b in zip(points, points[1:]))
    distance = round(raw, 2)
    speed = round(distance / duration * 3600.0, 1) if duration > 0 else 0.0
    return TripStats(duration_s=duration, distance_nm=distance, speed_knots=speed)


def build_trip(trip_points: Sequence[AnnotatedPoint], params: SegmentationParams) -> Trip:
    points = [ap.point for ap in trip_points]
    episodes = build_episodes(trip_points, params)
    first = points[0]
    return Trip(
        trip_id=f"{first.vessel_id}_{episodes[0].start.ts}",
        vessel_id=first.vessel_id,
        ship_type=first.ship_type,
        episodes=episodes,
        stats=trip_stats(points, episodes),
        points=points,
    )


def segment_vessel(
    annotated: Sequence[AnnotatedPoint], params: SegmentationParams
) -> List[Trip]:
    """Split one annotated vessel stream into fully built trips."""
    return [build_trip(rng, params) for rng in split_trips(annotated, params)]


# --- stage-artifact serialization ------------------------------------------

def episode_to_dict(ep: Episode) -> dict:
    return {
        "type": ep.type.value,
        "start": {"lon": ep.start.lon, "lat": ep.start.lat, "ts": ep.start.ts},
        "end": {"lon": ep.end.lon, "lat": ep.end.lat, "ts": ep.end.ts},
        "path": [[lon, lat] for lon, lat in ep.path],
        "stats": {
            "duration_s": ep.stats.duration_s,
            "distance_nm": ep.stats.distance_nm,
            "speed_knots": ep.stats.speed_knots,
            "heading_deg": ep.stats.heading_deg,
            "direction": ep.stats.direction.value,
        },
        "context": None if ep.context is None else ep.context.to_dict(),
    }


def episode_from_dict(d: dict) -> Episode:
    stats = d["stats"]
    ctx = d.get("context")
    return Episode(
        type=EpisodeType(d["type"]),
        start=Location(**d["start"]),
        end=Location(**d["end"]),
        path=[(lon, lat) for lon, lat in d["path"]],
        stats=EpisodeStats(
            duration_s=stats["duration_s"],
            distance_nm=stats["distance_nm"],
            speed_knots=stats["speed_knots"],
            heading_deg=stats["heading_deg"],
            direction=CompassDirection(stats["direction"]),
        ),
        context=None if ctx is None else ContextBundle.from_dict(ctx),
    )


def trip_to_dict(trip: Trip) -> dict:
    return {
        "trip_id": trip.trip_id,
        "vessel_id": trip.vessel_id,
        "ship_type": trip.ship_type,
        "stats": {
            "duration_s": trip.stats.duration_s,
            "distance_nm": trip.stats.distance_nm,
            "speed_knots": trip.stats.speed_knots,
        },
        "origin_port": trip.origin_port,
        "destination_port": trip.destination_port,
        "ferry_dtw": trip.ferry_dtw,
        "ferry_dtw_raw": trip.ferry_dtw_raw,
        "episodes": [episode_to_dict(ep) for ep in trip.episodes],
        "points": [
            [p.ts, p.lon, p.lat, p.sog, p.cog, p.heading] for p in trip.points
        ],
    }


def trip_from_dict(d: dict) -> Trip:
    stats = d["stats"]
    return Trip(
        trip_id=d["trip_id"],
        vessel_id=d["vessel_id"],
        ship_type=d["ship_type"],
        episodes=[episode_from_dict(e) for e in d["episodes"]],
        stats=TripStats(
            duration_s=stats["duration_s"],
            distance_nm=stats["distance_nm"],
            speed_knots=stats["speed_knots"],
        ),
        points=[
            AisPoint(
                ts=ts,
                vessel_id=d["vessel_id"],
                lon=lon,
                lat=lat,
                sog=sog,
                cog=cog,
                heading=heading,
                ship_type=d["ship_type"],
            )
            for ts, lon, lat, sog, cog, heading in d["points"]
        ],
        origin_port=d.get("origin_port"),
        destination_port=d.get("destination_port"),
        ferry_dtw=d.get("ferry_dtw"),
        ferry_dtw_raw=d.get("ferry_dtw_raw"),
    )
