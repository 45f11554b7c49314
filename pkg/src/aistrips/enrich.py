"""Context enrichment of episodes from geospatial layers and gridded fields.

Layers are GeoJSON feature collections (ports, coastal features, offshore
areas, traffic separation lanes, ferry routes) held in a spatial index;
wind and bathymetry come from plain-text grid files sampled at the nearest
cell and time slice. Trips whose origin and destination ports match a
known ferry route additionally get an elastic route-similarity score.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from shapely.geometry import LineString, Point, shape
from shapely.strtree import STRtree

from .core import (
    CompassDirection,
    ContextBundle,
    LonLat,
    circular_mean_deg,
    compass_of,
    haversine_nm,
    heading_delta,
    initial_bearing_deg,
    point_segment_nm,
)
from .segment import Episode, EpisodeType, Trip

logger = logging.getLogger(__name__)

NM_PER_DEG_LAT = 60.0405  # one degree of latitude on the mean-radius sphere

MOVING_TYPES = (EpisodeType.SAILING, EpisodeType.TURNING, EpisodeType.MANEUVERING)

# WMO Beaufort class upper bounds in m/s; index is the Beaufort number.
BEAUFORT_UPPER_MPS = (0.2, 1.5, 3.3, 5.4, 7.9, 10.7, 13.8, 17.1, 20.7, 24.4, 28.4, 32.6)


def beaufort_from_mps(speed: float) -> int:
    """Wind speed in m/s to the 13-class Beaufort scale (0..12)."""
    for b, upper in enumerate(BEAUFORT_UPPER_MPS):
        if speed <= upper:
            return b
    return 12


class LayerKind(Enum):
    PORT = "ports"
    COASTAL = "coastal"
    OFFSHORE_AREA = "offshore_areas"
    TSS_LANE = "tss_lanes"
    FERRY_ROUTE = "ferry_routes"


@dataclass
class Feature:
    name: str
    geometry: object  # shapely geometry in WGS84 lon/lat
    attrs: Dict[str, object] = field(default_factory=dict)


class LayerFormatError(Exception):
    pass


class LayerStore:
    """Loaded layer features plus one spatial index per layer kind."""

    def __init__(self) -> None:
        self._features: Dict[LayerKind, List[Feature]] = {k: [] for k in LayerKind}
        self._trees: Dict[LayerKind, Optional[STRtree]] = {k: None for k in LayerKind}

    def add(self, kind: LayerKind, features: Iterable[Feature]) -> None:
        self._features[kind].extend(features)
        self._trees[kind] = None

    def features(self, kind: LayerKind) -> List[Feature]:
        return self._features[kind]

    def candidates(self, kind: LayerKind, geom) -> List[Feature]:
        """Features whose bounding boxes intersect ``geom``'s."""
        feats = self._features[kind]
        if not feats:
            return []
        tree = self._trees[kind]
        if tree is None:
            tree = STRtree([f.geometry for f in feats])
            self._trees[kind] = tree
        idx = sorted(int(i) for i in tree.query(geom))
        return [feats[i] for i in idx]


def _parse_feature(raw: dict, kind: LayerKind, path: str, index: int) -> Feature:
    props = raw.get("properties") or {}
    name = props.get("name")
    if not name:
        raise LayerFormatError(f"{path}: feature {index} has no properties.name")
    try:
        geom = shape(raw["geometry"])
    except Exception as exc:
        raise LayerFormatError(f"{path}: feature {index} geometry invalid: {exc}") from exc
    if geom.is_empty:
        raise LayerFormatError(f"{path}: feature {index} geometry is empty")
    attrs = dict(props)
    if kind is LayerKind.TSS_LANE and "bearing" not in attrs:
        raise LayerFormatError(f"{path}: feature {index} lacks the lane bearing")
    if kind is LayerKind.FERRY_ROUTE and (
        "from_port" not in attrs or "to_port" not in attrs
    ):
        raise LayerFormatError(f"{path}: feature {index} lacks from_port/to_port")
    return Feature(name=str(name), geometry=geom, attrs=attrs)


def load_layers(paths: Mapping[Union[str, LayerKind], Union[str, Path]]) -> LayerStore:
    """Load GeoJSON layer files into an indexed store.

    Keys are layer kinds (enum or their config names). Empty collections
    are legal; malformed features abort with file and feature index.
    """
    store = LayerStore()
    for key, path in paths.items():
        kind = key if isinstance(key, LayerKind) else LayerKind(key)
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        raw_feats = doc.get("features", [])
        feats = [_parse_feature(f, kind, str(path), i) for i, f in enumerate(raw_feats)]
        store.add(kind, feats)
        logger.info("layer %s: %d features from %s", kind.value, len(feats), path)
    return store


# --- geometry helpers --------------------------------------------------------

def _decompose(geom) -> Tuple[List[LonLat], List[Tuple[LonLat, LonLat]]]:
    """Vertices and segments of a shapely geometry (exterior rings only)."""
    verts: List[LonLat] = []
    segs: List[Tuple[LonLat, LonLat]] = []

    def add_line(coords) -> None:
        pts = [(float(x), float(y)) for x, y in coords]
        verts.extend(pts)
        segs.extend(zip(pts, pts[1:]))

    gt = geom.geom_type
    if gt == "Point":
        verts.append((float(geom.x), float(geom.y)))
    elif gt == "LineString":
        add_line(geom.coords)
    elif gt == "Polygon":
        add_line(geom.exterior.coords)
    elif gt.startswith("Multi") or gt == "GeometryCollection":
        for g in geom.geoms:
            v, s = _decompose(g)
            verts.extend(v)
            segs.extend(s)
    else:
        raise LayerFormatError(f"unsupported geometry type {gt}")
    return verts, segs


def _path_geom(path: Sequence[LonLat]):
    if len(path) >= 2 and any(p != path[0] for p in path[1:]):
        return LineString(path)
    return Point(path[0])


def path_distance_nm(path: Sequence[LonLat], geom) -> float:
    """Minimum great-circle distance between an episode path and a geometry."""
    pgeom = _path_geom(path)
    if pgeom.intersects(geom):
        return 0.0
    fverts, fsegs = _decompose(geom)
    best = math.inf
    psegs = list(zip(path, path[1:]))
    for v in fverts:
        if psegs:
            for a, b in psegs:
                best = min(best, point_segment_nm(v, a, b))
        else:
            best = min(best, haversine_nm(v, path[0]))
    for p in path:
        for a, b in fsegs:
            best = min(best, point_segment_nm(p, a, b))
    return best


def _pad_box(path: Sequence[LonLat], pad_nm: float):
    from shapely.geometry import box

    lons = [p[0] for p in path]
    lats = [p[1] for p in path]
    dlat = pad_nm / NM_PER_DEG_LAT
    max_lat = min(89.0, max(abs(min(lats)), abs(max(lats))))
    dlon = pad_nm / (NM_PER_DEG_LAT * max(0.01, math.cos(math.radians(max_lat))))
    return box(min(lons) - dlon, min(lats) - dlat, max(lons) + dlon, max(lats) + dlat)


# --- gridded fields ----------------------------------------------------------

class GridFormatError(Exception):
    pass


@dataclass
class GridField:
    """One gridded scalar field over a lon/lat bounding box.

    Cell values tile the box row-major, north to south; optional time
    slices hold one full grid each. ``missing`` marks uncovered cells.
    """

    name: str
    min_lon: float
    min_lat: float
    max_lon: float
    max_lat: float
    cell_deg: float
    values: np.ndarray  # shape (slices, rows, cols)
    times: Optional[List[int]] = None
    missing: float = -9999.0

    @property
    def rows(self) -> int:
        return self.values.shape[1]

    @property
    def cols(self) -> int:
        return self.values.shape[2]

    def cell_index(self, lon: float, lat: float) -> Optional[Tuple[int, int]]:
        if not (self.min_lon <= lon <= self.max_lon and self.min_lat <= lat <= self.max_lat):
            return None
        c = min(self.cols - 1, int((lon - self.min_lon) // self.cell_deg))
        r = min(self.rows - 1, int((self.max_lat - lat) // self.cell_deg))
        return r, c

    def slice_index(self, ts: Optional[int]) -> int:
        if not self.times or ts is None:
            return 0
        diffs = [abs(t - ts) for t in self.times]
        return diffs.index(min(diffs))

    def covers_time(self, start_ts: int, end_ts: int) -> bool:
        if not self.times:
            return True
        return not (end_ts < self.times[0] or start_ts > self.times[-1])

    def value_at(self, lon: float, lat: float, ts: Optional[int] = None) -> Optional[float]:
        idx = self.cell_index(lon, lat)
        if idx is None:
            return None
        r, c = idx
        v = float(self.values[self.slice_index(ts), r, c])
        if v == self.missing:
            return None
        return v

    def cells_crossed(self, a: LonLat, b: LonLat) -> List[Tuple[int, int]]:
        """All cells traversed by the straight lon/lat segment a..b."""
        crossings = {0.0, 1.0}
        for fixed, lo, hi, ai, bi in (
            ("lon", self.min_lon, self.max_lon, a[0], b[0]),
            ("lat", self.min_lat, self.max_lat, a[1], b[1]),
        ):
            if bi == ai:
                continue
            k_start = math.ceil((min(ai, bi) - lo) / self.cell_deg)
            k_end = math.floor((max(ai, bi) - lo) / self.cell_deg)
            for k in range(k_start, k_end + 1):
                t = (lo + k * self.cell_deg - ai) / (bi - ai)
                if 0.0 < t < 1.0:
                    crossings.add(t)
        ts_sorted = sorted(crossings)
        cells = []
        for t0, t1 in zip(ts_sorted, ts_sorted[1:]):
            tm = (t0 + t1) / 2.0
            idx = self.cell_index(a[0] + (b[0] - a[0]) * tm, a[1] + (b[1] - a[1]) * tm)
            if idx is not None and idx not in cells:
                cells.append(idx)
        return cells


def load_grid(path: Union[str, Path]) -> GridField:
    """Parse the plain-text grid format (header lines, then value rows)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    header: Dict[str, str] = {}
    body_start = 0
    for i, ln in enumerate(lines):
        if "=" in ln and not ln.lstrip()[0].isdigit() and not ln.lstrip().startswith("-"):
            key, _, val = ln.partition("=")
            header[key.strip()] = val.strip()
            body_start = i + 1
        else:
            break
    try:
        name = header["name"]
        bbox = [float(x) for x in header["bbox"].split(",")]
        cell = float(header["cell_deg"])
    except (KeyError, ValueError) as exc:
        raise GridFormatError(f"{path}: bad header: {exc}") from exc
    if len(bbox) != 4:
        raise GridFormatError(f"{path}: bbox needs minlon,minlat,maxlon,maxlat")
    times = None
    if header.get("times"):
        times = [int(t) for t in header["times"].split(",")]
    missing = float(header.get("missing", "-9999"))

    rows = round((bbox[3] - bbox[1]) / cell)
    cols = round((bbox[2] - bbox[0]) / cell)
    slices = len(times) if times else 1
    body = lines[body_start:]
    if len(body) != rows * slices:
        raise GridFormatError(
            f"{path}: expected {rows * slices} value rows, found {len(body)}"
        )
    data = np.array([[float(x) for x in ln.split()] for ln in body], dtype=float)
    if data.shape[1] != cols:
        raise GridFormatError(f"{path}: expected {cols} columns, found {data.shape[1]}")
    return GridField(
        name=name,
        min_lon=bbox[0],
        min_lat=bbox[1],
        max_lon=bbox[2],
        max_lat=bbox[3],
        cell_deg=cell,
        values=data.reshape(slices, rows, cols),
        times=times,
        missing=missing,
    )


@dataclass
class GridSet:
    wind_speed: Optional[GridField] = None
    wind_direction: Optional[GridField] = None
    depth: Optional[GridField] = None


def load_grids(paths: Mapping[str, Union[str, Path]]) -> GridSet:
    grids = GridSet()
    for key, path in paths.items():
        if key not in ("wind_speed", "wind_direction", "depth"):
            raise GridFormatError(f"unknown grid field {key!r}")
        setattr(grids, key, load_grid(path))
    return grids


# --- per-episode operations --------------------------------------------------

def port_of_stop(stop: Episode, layers: LayerStore) -> Optional[str]:
    """Port containing a stop's centroid, or the nearest point port within 1 nm.

    Overlapping port polygons tie-break on the nearest boundary.
    """
    if stop.type is not EpisodeType.STOPPED:
        raise ValueError("port lookup applies to STOPPED episodes")
    centroid = stop.path[0]
    pt = Point(centroid)
    containing: List[Tuple[float, str]] = []
    nearest_point_port: Optional[Tuple[float, str]] = None
    for feat in layers.candidates(LayerKind.PORT, _pad_box([centroid], 1.0)):
        if feat.geometry.geom_type == "Point":
            d = haversine_nm(centroid, (feat.geometry.x, feat.geometry.y))
            if d < 1.0 and (nearest_point_port is None or (d, feat.name) < nearest_point_port):
                nearest_point_port = (d, feat.name)
        elif feat.geometry.covers(pt):
            _, segs = _decompose(feat.geometry)
            boundary = min(point_segment_nm(centroid, a, b) for a, b in segs)
            containing.append((boundary, feat.name))
    if containing:
        return min(containing)[1]
    if nearest_point_port is not None:
        return nearest_point_port[1]
    return None


def nearby_coastal(ep: Episode, layers: LayerStore, proximity_nm: float = 5.0) -> List[str]:
    """"off <name>" phrases for coastal features within the proximity bound,
    closest first."""
    if ep.type not in MOVING_TYPES:
        raise ValueError("coastal proximity applies to moving episodes")
    hits: List[Tuple[float, str]] = []
    query = _pad_box(ep.path, proximity_nm)
    for feat in layers.candidates(LayerKind.COASTAL, query):
        d = path_distance_nm(ep.path, feat.geometry)
        if d < proximity_nm:
            hits.append((d, feat.name))
    return [f"off {name}" for _, name in sorted(hits)]


def _episode_bearing(ep: Episode) -> float:
    return initial_bearing_deg(ep.path[0], ep.path[-1])


def crossed_areas(ep: Episode, layers: LayerStore) -> Tuple[List[str], Optional[bool]]:
    """"crossing <name>" phrases for intersected offshore areas, plus lane
    compliance when the path cuts traffic separation lanes.

    Compliance means moving within 90 degrees of the lane bearing; crossing
    several lanes is compliant only if every one agrees.
    """
    if ep.type not in MOVING_TYPES:
        raise ValueError("area crossing applies to moving episodes")
    pgeom = _path_geom(ep.path)
    phrases = sorted(
        feat.name
        for feat in layers.candidates(LayerKind.OFFSHORE_AREA, pgeom)
        if pgeom.intersects(feat.geometry)
    )
    compliant: Optional[bool] = None
    bearing = _episode_bearing(ep)
    for feat in layers.candidates(LayerKind.TSS_LANE, pgeom):
        if not pgeom.intersects(feat.geometry):
            continue
        ok = abs(heading_delta(float(feat.attrs["bearing"]), bearing)) <= 90.0
        compliant = ok if compliant is None else (compliant and ok)
    return [f"crossing {name}" for name in phrases], compliant


def _vertex_timestamps(ep: Episode) -> List[int]:
    n = len(ep.path)
    if n == 1:
        return [ep.start.ts]
    span = ep.end.ts - ep.start.ts
    return [ep.start.ts + round(span * i / (n - 1)) for i in range(n)]


def sample_wind(ep: Episode, grids: GridSet) -> Optional[Tuple[int, CompassDirection]]:
    """Max Beaufort and circular-mean direction along a moving episode's path.

    Samples the nearest cell and nearest time slice per path vertex; None
    when the episode lies outside the field's spatial or temporal coverage.
    """
    speed_field = grids.wind_speed
    dir_field = grids.wind_direction
    if speed_field is None or dir_field is None:
        return None
    if not speed_field.covers_time(ep.start.ts, ep.end.ts):
        return None
    speeds: List[float] = []
    dirs: List[float] = []
    for (lon, lat), ts in zip(ep.path, _vertex_timestamps(ep)):
        s = speed_field.value_at(lon, lat, ts)
        d = dir_field.value_at(lon, lat, ts)
        if s is not None:
            speeds.append(s)
        if d is not None:
            dirs.append(d)
    if not speeds or not dirs:
        return None
    return beaufort_from_mps(max(speeds)), compass_of(circular_mean_deg(dirs))


def sample_depth(ep: Episode, grids: GridSet) -> Optional[int]:
    """Seabed depth for an episode: the centroid cell for stops, the
    shallowest (largest, below-surface-negative) cell over the path and
    every crossed cell for moving episodes."""
    field_ = grids.depth
    if field_ is None:
        return None
    if ep.type is EpisodeType.STOPPED:
        v = field_.value_at(*ep.path[0])
        return None if v is None else round(v)
    samples: List[float] = []
    seen = set()
    for lon, lat in ep.path:
        idx = field_.cell_index(lon, lat)
        if idx is not None and idx not in seen:
            seen.add(idx)
            v = field_.value_at(lon, lat)
            if v is not None:
                samples.append(v)
    for a, b in zip(ep.path, ep.path[1:]):
        for idx in field_.cells_crossed(a, b):
            if idx in seen:
                continue
            seen.add(idx)
            v = float(field_.values[0, idx[0], idx[1]])
            if v != field_.missing:
                samples.append(v)
    if not samples:
        return None
    return round(max(samples))


# --- ferry-route similarity --------------------------------------------------

DTW_RESAMPLE_POINTS = 128


def resample_polyline(coords: Sequence[LonLat], n: int = DTW_RESAMPLE_POINTS) -> List[LonLat]:
    """Resample a polyline to n points at equal haversine arc-length spacing."""
    if not coords:
        raise ValueError("cannot resample an empty polyline")
    if len(coords) == 1:
        return [coords[0]] * n
    cum = [0.0]
    for a, b in zip(coords, coords[1:]):
        cum.append(cum[-1] + haversine_nm(a, b))
    total = cum[-1]
    if total == 0.0:
        return [coords[0]] * n
    out: List[LonLat] = []
    seg = 0
    for i in range(n):
        target = total * i / (n - 1)
        while seg < len(coords) - 2 and cum[seg + 1] < target:
            seg += 1
        span = cum[seg + 1] - cum[seg]
        f = 0.0 if span == 0.0 else (target - cum[seg]) / span
        ax, ay = coords[seg]
        bx, by = coords[seg + 1]
        out.append((ax + (bx - ax) * f, ay + (by - ay) * f))
    return out


def dtw_alignment(a: Sequence[LonLat], b: Sequence[LonLat]) -> Tuple[float, float, int]:
    """Dynamic-time-warping alignment with haversine matching cost.

    Returns (mean matched distance in nm, total cost, alignment length).
    Ties in the backtrack prefer the diagonal step.
    """
    n, m = len(a), len(b)
    cost = np.empty((n, m), dtype=float)
    for i in range(n):
        for j in range(m):
            cost[i, j] = haversine_nm(a[i], b[j])
    acc = np.empty((n, m), dtype=float)
    acc[0, 0] = cost[0, 0]
    for i in range(1, n):
        acc[i, 0] = acc[i - 1, 0] + cost[i, 0]
    for j in range(1, m):
        acc[0, j] = acc[0, j - 1] + cost[0, j]
    for i in range(1, n):
        for j in range(1, m):
            acc[i, j] = cost[i, j] + min(acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1])
    i, j = n - 1, m - 1
    length = 1
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            diag, up, left = acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1]
            if diag <= up and diag <= left:
                i -= 1
                j -= 1
            elif up <= left:
                i -= 1
            else:
                j -= 1
        length += 1
    total = float(acc[n - 1, m - 1])
    return total / length, total, length


def ferry_dtw(trip: Trip, layers: LayerStore) -> Optional[Tuple[float, float]]:
    """Similarity of a trip against the ferry route joining its end ports.

    Both polylines are resampled to equal arc-length spacing before the
    alignment; the score is the mean matched distance in nautical miles
    (raw total cost returned alongside). None when the trip's ports are
    unknown or no route connects them.
    """
    if not trip.origin_port or not trip.destination_port or len(trip.points) < 2:
        return None
    want = (trip.origin_port, trip.destination_port)
    best: Optional[Tuple[float, float]] = None
    for feat in layers.features(LayerKind.FERRY_ROUTE):
        ends = (str(feat.attrs["from_port"]), str(feat.attrs["to_port"]))
        if ends == want:
            coords = [(float(x), float(y)) for x, y in feat.geometry.coords]
        elif ends == (want[1], want[0]):
            coords = [(float(x), float(y)) for x, y in reversed(feat.geometry.coords)]
        else:
            continue
        trip_line = resample_polyline([p.lonlat for p in trip.points])
        route_line = resample_polyline(coords)
        mean_nm, total, _ = dtw_alignment(trip_line, route_line)
        if best is None or mean_nm < best[0]:
            best = (mean_nm, total)
    return best


# --- whole-trip enrichment ---------------------------------------------------

def enrich_trip(
    trip: Trip,
    layers: LayerStore,
    grids: GridSet,
    proximity_nm: float = 5.0,
) -> Trip:
    """Populate every episode's context bundle and trip-level route match.

    Gap episodes keep an empty bundle (whereabouts unknown); stops resolve
    their port and seabed depth; moving episodes get placemark phrases,
    lane compliance, wind, and depth. Geometry and statistics are never
    altered.
    """
    for ep in trip.episodes:
        bundle = ContextBundle()
        if ep.type is EpisodeType.GAP:
            ep.context = bundle
            continue
        if ep.type is EpisodeType.STOPPED:
            port = port_of_stop(ep, layers)
            if port is not None:
                bundle.placemarks = f"in {port} port"
            bundle.sea_depth_m = sample_depth(ep, grids)
            ep.context = bundle
            continue
        phrases = nearby_coastal(ep, layers, proximity_nm)
        crossing, compliant = crossed_areas(ep, layers)
        phrases.extend(crossing)
        if phrases:
            bundle.placemarks = " ".join(phrases)
        bundle.tss_compliant = compliant
        wind = sample_wind(ep, grids)
        if wind is not None:
            bundle.wind_beaufort, bundle.wind_direction = wind
        bundle.sea_depth_m = sample_depth(ep, grids)
        ep.context = bundle

    first, last = trip.episodes[0], trip.episodes[-1]
    if first.type is EpisodeType.STOPPED:
        trip.origin_port = port_of_stop(first, layers)
    if last.type is EpisodeType.STOPPED:
        trip.destination_port = port_of_stop(last, layers)
    match = ferry_dtw(trip, layers)
    if match is not None:
        trip.ferry_dtw, trip.ferry_dtw_raw = round(match[0], 2), match[1]
    return trip
