"""Record parsing, stream cleaning, and vessel grouping."""
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from aistrips.core import AisPoint
from aistrips.ingest import (
    ColumnMap,
    Rejection,
    RejectionReason,
    clean_stream,
    group_by_vessel,
    load_points,
    parse_record,
    write_rejection_log,
)
from synth import destination_point

CM = ColumnMap()


def make_point(ts, vessel="V1", lon=11.0, lat=54.0, sog=10.0, cog=90.0):
    return AisPoint(ts=ts, vessel_id=vessel, lon=lon, lat=lat, sog=sog, cog=cog)


def test_parse_happy_path():
    p = parse_record("1706050277,219000111,54.60,11.35,12.5,210.0,209.0,Passenger", CM)
    assert isinstance(p, AisPoint)
    assert p.lat == 54.60 and p.lon == 11.35
    assert p.vessel_id == "219000111"
    assert p.ship_type == "Passenger"


def test_parse_rejects_out_of_range_latitude():
    r = parse_record("1706050277,219000111,95.0,11.35,12.5,210.0,209.0,Passenger", CM)
    assert isinstance(r, Rejection)
    assert r.reason is RejectionReason.INVALID_COORDINATES


def test_parse_rejects_null_island():
    r = parse_record("1706050277,219000111,0.0,0.0,12.5,210.0,209.0,Passenger", CM)
    assert isinstance(r, Rejection)
    assert r.reason is RejectionReason.INVALID_COORDINATES


def test_parse_rejects_textual_speed_with_field_name():
    r = parse_record("1706050277,219000111,54.60,11.35,N/A,210.0,209.0,Passenger", CM)
    assert isinstance(r, Rejection)
    assert r.reason is RejectionReason.UNPARSEABLE
    assert r.detail == "sog"


def test_parse_five_row_fixture_field_by_field():
    rows = [
        ("1706050277,A,54.60,11.35,12.5,210.0,209.0,Cargo", AisPoint),
        ("garbage,A,54.60,11.35,12.5,210.0,209.0,Cargo", "ts"),
        ("1706050277,A,54.60,11.35,12.5,bad,209.0,Cargo", "cog"),
        ("1706050277,A,bad,11.35,12.5,210.0,209.0,Cargo", "lat"),
        ("1706050277,A,54.60,11.35,-3.0,210.0,209.0,Cargo", "sog"),
    ]
    for line, expected in rows:
        result = parse_record(line, CM)
        if expected is AisPoint:
            assert isinstance(result, AisPoint)
        else:
            assert isinstance(result, Rejection)
            assert result.detail == expected


def test_parse_heading_unavailable_sentinel():
    p = parse_record("1706050277,A,54.60,11.35,12.5,210.0,511,Cargo", CM)
    assert isinstance(p, AisPoint)
    assert p.heading is None


def test_parse_strptime_timestamps():
    cm = ColumnMap(ts_format="%d/%m/%Y %H:%M:%S")
    p = parse_record("23/01/2024 22:51:17,A,54.60,11.35,12.5,210.0,209.0,Cargo", cm)
    assert isinstance(p, AisPoint)
    assert p.ts == 1706050277


def test_clean_drops_exact_duplicate():
    a = make_point(100)
    b = make_point(100)
    kept, rej = clean_stream([a, b])
    assert kept == [a]
    assert [r.reason for r in rej] == [RejectionReason.DUPLICATE]


def test_clean_drops_delayed_message():
    a = make_point(100)
    b = make_point(90, lon=11.1)
    kept, rej = clean_stream([a, b])
    assert kept == [a]
    assert [r.reason for r in rej] == [RejectionReason.OUT_OF_ORDER]


def test_clean_drops_teleport():
    a = make_point(100, lon=11.0, lat=54.0)
    far = destination_point((11.0, 54.0), 90.0, 60.0)  # 60 nm in 60 s: 3600 knots
    b = AisPoint(ts=160, vessel_id="V1", lon=far[0], lat=far[1], sog=10.0, cog=90.0)
    kept, rej = clean_stream([a, b])
    assert kept == [a]
    assert [r.reason for r in rej] == [RejectionReason.TELEPORT]


def test_clean_conservation_and_idempotence():
    rng = random.Random(7)
    points = []
    t = 1000
    for _ in range(300):
        t += rng.choice([-30, 0, 30, 60])
        points.append(make_point(max(t, 1), lon=11.0 + rng.random() / 100))
    kept, rej = clean_stream(points)
    assert len(kept) + len(rej) == len(points)
    assert all(a.ts < b.ts for a, b in zip(kept, kept[1:]))
    kept2, rej2 = clean_stream(kept)
    assert kept2 == kept
    assert rej2 == []


def test_group_by_vessel_empty():
    assert group_by_vessel([]) == {}


def test_group_by_vessel_interleaved_conservation():
    pts = []
    for i in range(30):
        pts.append(make_point(1000 + i, vessel=f"V{i % 3}"))
    groups = group_by_vessel(pts)
    assert sorted(groups) == ["V0", "V1", "V2"]
    assert sum(len(v) for v in groups.values()) == len(pts)


def test_group_by_vessel_shuffle_invariant():
    rng = random.Random(3)
    pts = [make_point(1000 + i * 10, lon=11.0 + i / 1000) for i in range(50)]
    shuffled = pts[:]
    rng.shuffle(shuffled)
    assert group_by_vessel(shuffled) == group_by_vessel(pts)


def test_load_points_end_to_end(tmp_path):
    path = tmp_path / "ais.csv"
    path.write_text(
        "ts,vessel_id,lat,lon,sog,cog,heading,ship_type\n"
        "1000,B,54.0,11.0,10.0,90.0,90,Cargo\n"
        "1000,A,54.0,11.0,10.0,90.0,90,Cargo\n"
        "1060,A,54.0,11.01,10.0,90.0,90,Cargo\n"
        "1060,A,54.0,11.01,10.0,90.0,90,Cargo\n"
        "bad,A,54.0,11.0,10.0,90.0,90,Cargo\n",
        encoding="utf-8",
    )
    streams, rejections = load_points([path], CM)
    assert sorted(streams) == ["A", "B"]
    assert len(streams["A"]) == 2
    reasons = sorted(r.reason.value for r in rejections)
    assert reasons == ["DUPLICATE", "UNPARSEABLE"]

    log = tmp_path / "rej.csv"
    write_rejection_log(rejections, log)
    lines = log.read_text().splitlines()
    assert lines[0] == "vessel_id,ts,reason"
    assert len(lines) == 3


@given(st.lists(st.integers(1, 10_000), min_size=0, max_size=50))
def test_clean_output_strictly_increasing(timestamps):
    pts = [make_point(ts) for ts in timestamps]
    kept, _ = clean_stream(pts)
    assert all(a.ts < b.ts for a, b in zip(kept, kept[1:]))
