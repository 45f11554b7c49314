"""Geodesy, compass, and timestamp primitives."""
import math
from datetime import datetime, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aistrips.core import (
    CompassDirection,
    circular_mean_deg,
    compass_of,
    format_epoch,
    haversine_nm,
    heading_delta,
    initial_bearing_deg,
    point_segment_nm,
    signed_heading,
)
from synth import reference_episode_points

EARTH_RADIUS_KM = 6371.0088


def law_of_cosines_nm(a, b):
    """Independent great-circle arc length via the spherical law of cosines."""
    lon1, lat1 = a
    lon2, lat2 = b
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    c = math.acos(
        min(1.0, max(-1.0,
            math.sin(phi1) * math.sin(phi2)
            + math.cos(phi1) * math.cos(phi2) * math.cos(math.radians(lon2 - lon1)),
        ))
    )
    return c * EARTH_RADIUS_KM / 1.852


def test_haversine_identical_points_is_zero():
    assert haversine_nm((10.0, 55.0), (10.0, 55.0)) == 0.0


def test_haversine_one_degree_of_latitude():
    assert haversine_nm((0.0, 0.0), (0.0, 1.0)) == pytest.approx(60.04, abs=0.01)


def test_haversine_against_arc_length_oracle():
    import random

    rng = random.Random(42)
    for _ in range(1000):
        a = (rng.uniform(-179.0, 179.0), rng.uniform(-80.0, 80.0))
        b = (rng.uniform(-179.0, 179.0), rng.uniform(-80.0, 80.0))
        expected = law_of_cosines_nm(a, b)
        got = haversine_nm(a, b)
        assert got == pytest.approx(expected, rel=1e-6, abs=1e-6)


def test_reference_episode_distance_sums_to_stored_value():
    pts = reference_episode_points()
    total = sum(
        haversine_nm(a.lonlat, b.lonlat) for a, b in zip(pts, pts[1:])
    )
    assert round(total, 2) == 4.64
    duration = pts[-1].ts - pts[0].ts
    assert duration == 1176
    assert round(round(total, 2) / duration * 3600.0, 1) == 14.2


@given(
    st.tuples(st.floats(-179, 179), st.floats(-85, 85)),
    st.tuples(st.floats(-179, 179), st.floats(-85, 85)),
)
def test_haversine_symmetry(a, b):
    assert haversine_nm(a, b) == pytest.approx(haversine_nm(b, a), abs=1e-12)
    assert haversine_nm(a, b) >= 0.0


def enumerate_delta(from_deg, to_deg):
    """Oracle: try both rotations, keep the smaller magnitude (ties positive)."""
    raw = to_deg - from_deg
    candidates = sorted(
        ((raw + k * 360.0) for k in (-1, 0, 1)),
        key=lambda d: (abs(d), 0 if d > 0 else 1),
    )
    return candidates[0]


def test_heading_delta_cases():
    assert heading_delta(90, 90) == 0
    assert heading_delta(350, 10) == pytest.approx(20.0)
    assert heading_delta(10, 350) == pytest.approx(-20.0)


@given(st.floats(0, 359.999), st.floats(0, 359.999))
def test_heading_delta_matches_enumeration(h1, h2):
    assert heading_delta(h1, h2) == pytest.approx(enumerate_delta(h1, h2), abs=1e-9)


@given(st.floats(0, 359.999), st.floats(0, 359.999))
def test_heading_delta_antisymmetric(h1, h2):
    d = heading_delta(h1, h2)
    if abs(d) != 180.0:
        assert heading_delta(h2, h1) == pytest.approx(-d, abs=1e-9)


def test_signed_heading_preserves_180():
    assert signed_heading(180.0) == 180.0
    assert signed_heading(-180.0) == 180.0
    assert signed_heading(216.0) == -144.0
    assert signed_heading(540.0) == 180.0


SECTOR_TABLE = [
    (337.5, 22.5, CompassDirection.NORTH),
    (22.5, 67.5, CompassDirection.NORTH_EAST),
    (67.5, 112.5, CompassDirection.EAST),
    (112.5, 157.5, CompassDirection.SOUTH_EAST),
    (157.5, 202.5, CompassDirection.SOUTH),
    (202.5, 247.5, CompassDirection.SOUTH_WEST),
    (247.5, 292.5, CompassDirection.WEST),
    (292.5, 337.5, CompassDirection.NORTH_WEST),
]


def sector_lookup(h):
    h = h % 360.0
    for lo, hi, direction in SECTOR_TABLE:
        if lo > hi:  # the wraparound sector
            if h >= lo or h < hi:
                return direction
        elif lo <= h < hi:
            return direction
    raise AssertionError(h)


def test_compass_cases():
    assert compass_of(-144) is CompassDirection.SOUTH_WEST
    assert compass_of(0) is CompassDirection.NORTH
    assert compass_of(100) is CompassDirection.EAST


def test_compass_sweep_agrees_with_sector_table():
    h = 0.0
    while h < 360.0:
        assert compass_of(h) is sector_lookup(h), h
        h += 0.1


@given(st.floats(-720, 720), st.integers(-3, 3))
def test_compass_periodic(h, k):
    assert compass_of(h) is compass_of(h + 360.0 * k)


def test_compass_labels_render_with_spaces():
    assert CompassDirection.SOUTH_WEST.value == "SOUTH WEST"
    assert CompassDirection.NORTH_EAST.value == "NORTH EAST"


def test_circular_mean_wraps():
    assert circular_mean_deg([350.0, 10.0]) == pytest.approx(0.0, abs=1e-9)
    assert circular_mean_deg([90.0]) == pytest.approx(90.0)


def test_format_epoch_cases():
    assert format_epoch(0) == "1970-01-01 00:00:00"
    assert format_epoch(1706050277) == "2024-01-23 22:51:17"
    assert format_epoch(1706051452) == "2024-01-23 23:10:52"


@given(st.integers(0, 4102444800))
@settings(max_examples=200)
def test_format_epoch_matches_datetime(ts):
    expected = datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%d %H:%M:%S")
    assert format_epoch(ts) == expected


def test_initial_bearing_cardinal_directions():
    assert initial_bearing_deg((0.0, 0.0), (0.0, 1.0)) == pytest.approx(0.0)
    assert initial_bearing_deg((0.0, 0.0), (1.0, 0.0)) == pytest.approx(90.0)
    assert initial_bearing_deg((0.0, 1.0), (0.0, 0.0)) == pytest.approx(180.0)


def test_point_segment_distance_perpendicular_and_clamped():
    # point due north of a parallel-ish segment: perpendicular foot
    d = 5.0 / 60.0405  # about five nautical miles of latitude
    seg_a, seg_b = (-1.0, d), (1.0, d)
    assert point_segment_nm((0.0, 0.0), seg_a, seg_b) == pytest.approx(5.0, abs=0.01)
    # point beyond the far endpoint: clamps to endpoint distance
    p = (2.0, 0.0)
    assert point_segment_nm(p, seg_a, seg_b) == pytest.approx(
        haversine_nm(p, seg_b), abs=1e-9
    )
