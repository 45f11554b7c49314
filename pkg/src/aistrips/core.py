"""Core domain types and geodesy shared by the whole pipeline.

Conventions: coordinates are WGS84 (lon, lat) in degrees, distances are
nautical miles, speeds knots, timestamps UNIX seconds in GMT. Signed
headings live in (-180, 180]; compass work normalizes to [0, 360)
internally.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Tuple

EARTH_RADIUS_KM = 6371.0088  # IUGG mean Earth radius
KM_PER_NM = 1.852  # exact

LonLat = Tuple[float, float]


class CompassDirection(Enum):
    """Eight-sector compass rose; enum values are the rendered labels."""

    NORTH = "NORTH"
    NORTH_EAST = "NORTH EAST"
    EAST = "EAST"
    SOUTH_EAST = "SOUTH EAST"
    SOUTH = "SOUTH"
    SOUTH_WEST = "SOUTH WEST"
    WEST = "WEST"
    NORTH_WEST = "NORTH WEST"

    def __str__(self) -> str:
        return self.value


_SECTOR_ORDER = (
    CompassDirection.NORTH,
    CompassDirection.NORTH_EAST,
    CompassDirection.EAST,
    CompassDirection.SOUTH_EAST,
    CompassDirection.SOUTH,
    CompassDirection.SOUTH_WEST,
    CompassDirection.WEST,
    CompassDirection.NORTH_WEST,
)


@dataclass(frozen=True)
class AisPoint:
    """One decoded AIS position report.

    ``heading`` is None when the transponder reported it unavailable;
    ``cog`` is the course over ground in [0, 360).
    """

    ts: int
    vessel_id: str
    lon: float
    lat: float
    sog: float
    cog: float
    heading: Optional[float] = None
    ship_type: str = ""

    @property
    def lonlat(self) -> LonLat:
        return (self.lon, self.lat)


@dataclass
class ContextBundle:
    """Contextual annotations attached to one episode.

    Every field stays None when no source covers the episode; nothing is
    fabricated. ``sea_depth_m`` is negative below the sea surface.
    """

    placemarks: Optional[str] = None
    wind_beaufort: Optional[int] = None
    wind_direction: Optional[CompassDirection] = None
    sea_depth_m: Optional[int] = None
    tss_compliant: Optional[bool] = None

    def is_empty(self) -> bool:
        return (
            self.placemarks is None
            and self.wind_beaufort is None
            and self.wind_direction is None
            and self.sea_depth_m is None
            and self.tss_compliant is None
        )

    def to_dict(self) -> dict:
        return {
            "placemarks": self.placemarks,
            "wind_beaufort": self.wind_beaufort,
            "wind_direction": None if self.wind_direction is None else self.wind_direction.value,
            "sea_depth_m": self.sea_depth_m,
            "tss_compliant": self.tss_compliant,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ContextBundle":
        wd = d.get("wind_direction")
        return cls(
            placemarks=d.get("placemarks"),
            wind_beaufort=d.get("wind_beaufort"),
            wind_direction=None if wd is None else CompassDirection(wd),
            sea_depth_m=d.get("sea_depth_m"),
            tss_compliant=d.get("tss_compliant"),
        )


def haversine_nm(a: LonLat, b: LonLat) -> float:
    """Great-circle distance between two (lon, lat) points in nautical miles.

    Spherical haversine on the mean Earth radius; symmetric, non-negative,
    zero only for identical coordinates.
    """
    lon1, lat1 = a
    lon2, lat2 = b
    phi1 = math.radians(lat1)
    phi2 = math.radians(lat2)
    dphi = phi2 - phi1
    dlam = math.radians(lon2 - lon1)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    c = 2.0 * math.asin(min(1.0, math.sqrt(h)))
    return c * EARTH_RADIUS_KM / KM_PER_NM


def initial_bearing_deg(a: LonLat, b: LonLat) -> float:
    """Forward azimuth from a to b along the great circle, in [0, 360)."""
    lon1, lat1 = a
    lon2, lat2 = b
    phi1 = math.radians(lat1)
    phi2 = math.radians(lat2)
    dlam = math.radians(lon2 - lon1)
    y = math.sin(dlam) * math.cos(phi2)
    x = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(dlam)
    if x == 0.0 and y == 0.0:
        return 0.0
    b = math.degrees(math.atan2(y, x)) % 360.0
    return 0.0 if b == 360.0 else b  # tiny negatives mod to exactly 360.0


def heading_delta(from_deg: float, to_deg: float) -> float:
    """Smallest signed rotation taking ``from_deg`` onto ``to_deg``.

    Result lies in (-180, 180]; positive means clockwise.
    """
    d = (to_deg - from_deg) % 360.0
    if d > 180.0:
        d -= 360.0
    return d


def signed_heading(deg: float) -> float:
    """Normalize any finite degree value into (-180, 180], 180 preserved."""
    r = ((deg + 180.0) % 360.0) - 180.0
    if r == -180.0:
        return 180.0
    return r


def compass_of(heading_deg: float) -> CompassDirection:
    """Bin a heading (any finite degrees, signed or not) into 45-degree sectors.

    NORTH covers [337.5, 22.5), NORTH EAST [22.5, 67.5), and so on.
    """
    h = heading_deg % 360.0
    return _SECTOR_ORDER[int(((h + 22.5) % 360.0) // 45.0)]


def circular_mean_deg(angles: Iterable[float]) -> float:
    """Circular mean of angles in degrees, result in [0, 360)."""
    sin_sum = 0.0
    cos_sum = 0.0
    n = 0
    for a in angles:
        r = math.radians(a)
        sin_sum += math.sin(r)
        cos_sum += math.cos(r)
        n += 1
    if n == 0:
        raise ValueError("circular mean of empty sequence")
    if sin_sum == 0.0 and cos_sum == 0.0:
        return 0.0
    m = math.degrees(math.atan2(sin_sum, cos_sum)) % 360.0
    return 0.0 if m == 360.0 else m


def format_epoch(ts: int) -> str:
    """Render UNIX seconds as ``YYYY-MM-DD HH:MM:SS`` in GMT, zero padded."""
    return time.strftime("%Y-%m-%d %H:%M:%S", time.gmtime(ts))


def _clamp(x: float, lo: float = -1.0, hi: float = 1.0) -> float:
    return max(lo, min(hi, x))


def point_segment_nm(p: LonLat, s1: LonLat, s2: LonLat) -> float:
    """Minimum great-circle distance from point ``p`` to the arc s1..s2, in nm.

    Cross-track distance clamped at the segment endpoints.
    """
    d_s1 = haversine_nm(p, s1)
    seg_nm = haversine_nm(s1, s2)
    if seg_nm == 0.0:
        return d_s1
    d13 = d_s1 * KM_PER_NM / EARTH_RADIUS_KM
    t13 = math.radians(initial_bearing_deg(s1, p))
    t12 = math.radians(initial_bearing_deg(s1, s2))
    if math.cos(t13 - t12) < 0.0:
        # nearest approach lies behind s1
        return d_s1
    dxt = math.asin(_clamp(math.sin(d13) * math.sin(t13 - t12)))
    cos_dxt = math.cos(dxt)
    if cos_dxt == 0.0:
        return abs(dxt) * EARTH_RADIUS_KM / KM_PER_NM
    dat = math.acos(_clamp(math.cos(d13) / cos_dxt))
    d12 = seg_nm * KM_PER_NM / EARTH_RADIUS_KM
    if dat > d12:
        return haversine_nm(p, s2)
    return abs(dxt) * EARTH_RADIUS_KM / KM_PER_NM


def polyline_length_nm(vertices: Iterable[LonLat]) -> float:
    """Total haversine length of a lon/lat polyline."""
    total = 0.0
    prev = None
    for v in vertices:
        if prev is not None:
            total += haversine_nm(prev, v)
        prev = v
    return total
