import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specmap.errors import DegenerateError, ValidationError
from specmap.ingest import (
    MIN_HALF_EXTENT_DEG,
    ChannelGrid,
    Measurement,
    channel_index,
    fit_frame,
    format_measurements,
    parse_measurements,
)

HEADER = "timestamp_s,site_id,lat_deg,lon_deg,freq_mhz,power_dbm\n"
GRID = ChannelGrid(470.0, 6.0, 23)


def test_parse_single_row():
    recs = parse_measurements(HEADER + "1700000000,wilson,42.027,-93.648,473.5,-101.2\n")
    assert recs == [Measurement(1700000000.0, "wilson", 42.027, -93.648, 473.5, -101.2)]


def test_comments_and_blank_lines_ignored():
    text = "# capture 1\n" + HEADER + "\n# mid comment\n1,a,0,0,500,-90\n"
    assert len(parse_measurements(text)) == 1


def test_latitude_out_of_range():
    with pytest.raises(ValidationError, match="lat"):
        parse_measurements(HEADER + "1,a,91,0,500,-90\n")


def test_malformed_power_names_line_and_column():
    text = HEADER + "1,a,0,0,500,-90\n2,a,0,0,500,-91\n3,a,0,0,500,oops\n"
    # header is line 1, so the third data row is line 4; the oracle here is
    # counting lines of the hand-written file
    with pytest.raises(ValidationError) as exc:
        parse_measurements(text)
    assert exc.value.line == 4
    assert exc.value.field == "power_dbm"
    assert "line 4" in str(exc.value) and "power_dbm" in str(exc.value)


def test_malformed_power_in_three_line_file_names_line_3():
    # 3-line file: header + 2 rows, bad value on line 3
    text = HEADER + "1,a,0,0,500,-90\n2,a,0,0,500,x\n"
    with pytest.raises(ValidationError, match="line 3"):
        parse_measurements(text)


def test_bad_header_and_missing_column():
    with pytest.raises(ValidationError, match="header"):
        parse_measurements("t,site\n1,a\n")
    with pytest.raises(ValidationError, match="line 2"):
        parse_measurements(HEADER + "1,a,0,0,500\n")


@pytest.mark.parametrize(
    "row",
    [
        "1,a,0,181,500,-90",
        "1,a,0,0,0,-90",
        "1,a,0,0,500,51",
        "1,a,0,0,500,-201",
        "-1,a,0,0,500,-90",
        "1,a,nan,0,500,-90",
    ],
)
def test_invariant_violations(row):
    with pytest.raises(ValidationError):
        parse_measurements(HEADER + row + "\n")


def test_input_order_preserved():
    rows = ["5,b,0,0,500,-90", "1,a,0,0,510,-91", "3,c,0,0,520,-92"]
    recs = parse_measurements(HEADER + "\n".join(rows) + "\n")
    assert [r.site_id for r in recs] == ["b", "a", "c"]


def test_channel_index_examples():
    assert channel_index(470.0, GRID) == 0
    assert channel_index(475.999, GRID) == 0
    assert channel_index(476.0, GRID) == 1
    assert channel_index(607.999, GRID) == 22
    with pytest.raises(ValidationError):
        channel_index(608.0, GRID)  # 470 + 23*6, exclusive
    with pytest.raises(ValidationError):
        channel_index(469.999, GRID)


@given(st.lists(st.floats(470.0, 607.999), min_size=2, max_size=50))
def test_channel_index_monotone_and_piecewise_constant(freqs):
    freqs = sorted(freqs)
    idx = [channel_index(f, GRID) for f in freqs]
    assert idx == sorted(idx)
    for f, k in zip(freqs, idx):
        assert 470.0 + 6.0 * k <= f < 470.0 + 6.0 * (k + 1)


def _nine(x):
    return float(f"{x:.9g}")


record_strategy = st.builds(
    Measurement,
    timestamp_s=st.floats(0, 2e9).map(lambda t: float(int(t * 1000) / 1000)),
    site_id=st.sampled_from(["wilson", "agronomy", "curtiss"]),
    lat_deg=st.floats(-90, 90).map(_nine),
    lon_deg=st.floats(-180, 180).map(_nine),
    freq_mhz=st.floats(0.001, 6000).map(_nine),
    power_dbm=st.floats(-200, 50).map(_nine),
)


@given(st.lists(record_strategy, max_size=20))
def test_parse_serialize_parse_roundtrip(records):
    text = format_measurements(records)
    once = parse_measurements(text)
    assert once == records
    assert parse_measurements(format_measurements(once)) == once


def _m(lat, lon):
    return Measurement(0.0, "s", lat, lon, 500.0, -90.0)


def test_fit_frame_corners_map_to_unit_box():
    pts = [_m(42.0, -93.8), _m(42.1, -93.6)]
    frame = fit_frame(pts)
    x, y = frame.normalize([42.0, 42.1], [-93.8, -93.6])
    assert x == pytest.approx([-1.0, 1.0], abs=1e-12)
    assert y == pytest.approx([-1.0, 1.0], abs=1e-12)


def test_fit_frame_degenerate():
    with pytest.raises(DegenerateError):
        fit_frame([_m(42.0, -93.6)] * 3)


def test_fit_frame_collinear_axis_is_invertible():
    frame = fit_frame([_m(42.0, -93.6), _m(42.0, -93.5)])
    lat, lon = frame.denormalize(*frame.normalize(42.0, -93.55))
    assert lat == pytest.approx(42.0) and lon == pytest.approx(-93.55)


def test_fit_frame_ten_random_points_roundtrip(rng):
    lats = rng.uniform(41.9, 42.1, 10)
    lons = rng.uniform(-93.8, -93.5, 10)
    frame = fit_frame([_m(a, b) for a, b in zip(lats, lons)])
    x, y = frame.normalize(lats, lons)
    assert np.all(np.abs(x) <= 1) and np.all(np.abs(y) <= 1)
    lat2, lon2 = frame.denormalize(x, y)
    assert max(np.max(np.abs(lat2 - lats)), np.max(np.abs(lon2 - lons))) < 1e-9


coords = st.tuples(st.floats(-89, 89), st.floats(-179, 179))


@settings(max_examples=200)
@given(st.lists(coords, min_size=2, max_size=30, unique=True), st.randoms(use_true_random=False))
def test_fit_frame_properties(points, rnd):
    recs = [_m(a, b) for a, b in points]
    lats = np.array([p[0] for p in points])
    lons = np.array([p[1] for p in points])
    if max(np.ptp(lats), np.ptp(lons)) / 2 < MIN_HALF_EXTENT_DEG:
        with pytest.raises(DegenerateError):
            fit_frame(recs)
        return
    frame = fit_frame(recs)
    x, y = frame.normalize(lats, lons)
    assert np.all(np.abs(x) <= 1.0) and np.all(np.abs(y) <= 1.0)
    lat2, lon2 = frame.denormalize(x, y)
    assert np.max(np.abs(lat2 - lats)) < 1e-9 and np.max(np.abs(lon2 - lons)) < 1e-9
    shuffled = list(recs)
    rnd.shuffle(shuffled)
    assert fit_frame(shuffled) == frame
