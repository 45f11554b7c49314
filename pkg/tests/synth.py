"""Synthetic vessel tracks with embedded ground-truth labels for tests."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from aistrips.core import EARTH_RADIUS_KM, KM_PER_NM, AisPoint

LonLat = Tuple[float, float]


def destination_point(origin: LonLat, bearing_deg: float, distance_nm: float) -> LonLat:
    """Spherical forward geodesic: where you end up from origin."""
    lon1, lat1 = origin
    delta = distance_nm * KM_PER_NM / EARTH_RADIUS_KM
    theta = math.radians(bearing_deg)
    phi1 = math.radians(lat1)
    lam1 = math.radians(lon1)
    phi2 = math.asin(
        math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(delta) * math.cos(theta)
    )
    lam2 = lam1 + math.atan2(
        math.sin(theta) * math.sin(delta) * math.cos(phi1),
        math.cos(delta) - math.sin(phi1) * math.sin(phi2),
    )
    lon2 = math.degrees(lam2)
    if lon2 > 180.0:
        lon2 -= 360.0
    elif lon2 <= -180.0:
        lon2 += 360.0
    return (lon2, math.degrees(phi2))


@dataclass
class Leg:
    kind: str  # "stop", "sail", "turn", "silence"
    start_idx: int
    end_idx: int  # inclusive; -1 for silences
    start_ts: int
    end_ts: int
    total_turn: float = 0.0
    silence_s: int = 0


@dataclass
class TrackBuilder:
    """Scripted single-vessel track; records per-leg ground truth."""

    vessel_id: str
    origin: LonLat
    start_ts: int
    ship_type: str = "Passenger"
    interval_s: int = 30
    points: List[AisPoint] = field(default_factory=list)
    legs: List[Leg] = field(default_factory=list)
    cog: float = 0.0
    pos: Optional[LonLat] = None
    t: int = 0

    def __post_init__(self):
        self.pos = self.origin
        self.t = self.start_ts

    def _emit(self, sog: float, cog: float) -> None:
        lon, lat = self.pos
        self.points.append(
            AisPoint(
                ts=self.t,
                vessel_id=self.vessel_id,
                lon=lon,
                lat=lat,
                sog=sog,
                cog=cog % 360.0,
                heading=cog % 360.0,
                ship_type=self.ship_type,
            )
        )
        self.t += self.interval_s

    def stop(self, seconds: int, sog: float = 0.1) -> "TrackBuilder":
        first = len(self.points)
        n = max(2, seconds // self.interval_s)
        for _ in range(n):
            self._emit(sog, self.cog)
        self.legs.append(
            Leg("stop", first, len(self.points) - 1,
                self.points[first].ts, self.points[-1].ts)
        )
        return self

    def sail(self, bearing: float, distance_nm: float, speed_kn: float) -> "TrackBuilder":
        first = len(self.points)
        self.cog = bearing % 360.0
        step_nm = speed_kn * self.interval_s / 3600.0
        travelled = 0.0
        while travelled < distance_nm:
            self._emit(speed_kn, self.cog)
            self.pos = destination_point(self.pos, self.cog, min(step_nm, distance_nm - travelled))
            travelled += step_nm
        self._emit(speed_kn, self.cog)
        self.legs.append(
            Leg("sail", first, len(self.points) - 1,
                self.points[first].ts, self.points[-1].ts)
        )
        return self

    def turn(self, to_bearing: float, step_deg: float = 10.0, speed_kn: float = 8.0) -> "TrackBuilder":
        """Rotate course toward to_bearing in fixed angular steps."""
        first = len(self.points)
        total = ((to_bearing - self.cog + 180.0) % 360.0) - 180.0
        steps = max(1, int(abs(total) // step_deg))
        step = total / steps
        step_nm = speed_kn * self.interval_s / 3600.0
        for _ in range(steps):
            self.cog = (self.cog + step) % 360.0
            self._emit(speed_kn, self.cog)
            self.pos = destination_point(self.pos, self.cog, step_nm)
        self.legs.append(
            Leg("turn", first, len(self.points) - 1,
                self.points[first].ts, self.points[-1].ts, total_turn=total)
        )
        return self

    def wiggle(self, amplitude_deg: float = 8.0, speed_kn: float = 8.0) -> "TrackBuilder":
        """Course correction that returns to the original bearing."""
        first = len(self.points)
        base = self.cog
        step_nm = speed_kn * self.interval_s / 3600.0
        for delta in (amplitude_deg, 0.0):
            self.cog = (base + delta) % 360.0
            self._emit(speed_kn, self.cog)
            self.pos = destination_point(self.pos, self.cog, step_nm)
        self.legs.append(
            Leg("turn", first, len(self.points) - 1,
                self.points[first].ts, self.points[-1].ts, total_turn=0.0)
        )
        return self

    def silence(self, seconds: int) -> "TrackBuilder":
        self.legs.append(Leg("silence", -1, -1, self.t, self.t + seconds, silence_s=seconds))
        self.t += seconds
        return self


def ferry_script(vessel_id: str, origin: LonLat, start_ts: int,
                 rng: Optional[random.Random] = None) -> TrackBuilder:
    """A two-trip port-to-port itinerary with turns, a wiggle, and a short gap."""
    rng = rng or random.Random(0)
    b = TrackBuilder(vessel_id, origin, start_ts)
    out_bearing = rng.choice([30.0, 120.0, 210.0, 300.0])
    b.stop(900)
    b.sail(out_bearing, 3.0, 12.0)
    b.turn((out_bearing + 60.0) % 360.0, step_deg=10.0)
    b.sail((out_bearing + 60.0) % 360.0, 2.0, 12.0)
    b.silence(2700)  # short gap: stays inside the trip
    b.sail((out_bearing + 60.0) % 360.0, 2.0, 12.0)
    b.wiggle(8.0)
    b.sail((out_bearing + 60.0) % 360.0, 1.0, 10.0)
    b.stop(1200)
    b.sail((out_bearing + 240.0) % 360.0, 4.0, 14.0)
    b.stop(900)
    return b


def to_csv_rows(points: List[AisPoint]) -> List[str]:
    rows = []
    for p in points:
        heading = "" if p.heading is None else f"{p.heading!r}"
        rows.append(
            f"{p.ts},{p.vessel_id},{p.lat!r},{p.lon!r},{p.sog!r},{p.cog!r},{heading},{p.ship_type}"
        )
    return rows


def write_ais_csv(path, points: List[AisPoint]) -> None:
    lines = ["ts,vessel_id,lat,lon,sog,cog,heading,ship_type"] + to_csv_rows(points)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def reference_episode_points(vessel_id: str = "219000111") -> List[AisPoint]:
    """Nine raw points: 4.64 nm at bearing 216 over 1176 seconds."""
    start_ts = 1706050277
    end_ts = 1706051453  # 1176 s span
    n = 9
    pts = []
    pos = (11.40, 54.64)
    for i in range(n):
        ts = start_ts + round((end_ts - start_ts) * i / (n - 1))
        lon, lat = pos
        pts.append(
            AisPoint(ts=ts, vessel_id=vessel_id, lon=lon, lat=lat, sog=14.2,
                     cog=216.0, heading=216.0, ship_type="Passenger")
        )
        if i < n - 1:
            pos = destination_point(pos, 216.0, 4.64 / (n - 1))
    return pts
