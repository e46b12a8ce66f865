import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import T0, TVWS, planted_stream
from specmap.errors import InsufficientDataError, ValidationError
from specmap.ingest import ChannelGrid, Measurement
from specmap.occupancy import (
    JointState,
    OccupancyConfig,
    band_summary,
    is_occupied,
    joint_availability,
    nearest_rank_percentile,
    single_site_availability,
    slot_occupancy,
)

CFG = OccupancyConfig()


def _m(t, f, p, site="a"):
    return Measurement(float(t), site, 42.0, -93.6, float(f), float(p))


def test_threshold_is_strict():
    assert not is_occupied(-108.0, -108.0)
    assert is_occupied(-107.99, -108.0)
    assert not is_occupied(-108.01, -108.0)


def test_all_above_threshold_in_one_slot_is_one():
    recs = [_m(T0, 470 + 6 * c + 1, -90) for c in range(23)]
    assert slot_occupancy(recs, TVWS, CFG) == {0: 1.0}


def test_all_below_threshold_gives_zero_band_summary():
    recs = [_m(T0 + s, 470 + 6 * c + 1, -115) for s in range(10) for c in range(23)]
    summary = band_summary(recs, TVWS, CFG, "TVWS")
    assert summary.avg_occupancy == 0.0 and summary.p95_occupancy == 0.0


def test_empty_input_reports_no_data():
    assert slot_occupancy([], TVWS, CFG) == {}
    summary = band_summary([], TVWS, CFG, "TVWS")
    assert summary.no_data
    assert summary.render() == "TVWS 470–608: no data"


def test_render_format():
    recs = [_m(T0, 471, -90), _m(T0, 477, -120)]
    assert band_summary(recs, TVWS, CFG, "TVWS").render() == "TVWS 470–608: avg 50.0%, p95 50.0%"


def test_nearest_rank_percentile():
    assert nearest_rank_percentile(list(range(1, 101)), 0.95) == 95
    assert nearest_rank_percentile([0.3], 0.95) == 0.3
    assert nearest_rank_percentile([5, 1, 3], 0.95) == 5
    with pytest.raises(InsufficientDataError):
        nearest_rank_percentile([], 0.95)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=300))
def test_percentile_matches_oracle(values):
    assert nearest_rank_percentile(values, 0.95) == oracles.sort_and_index_p95(values)


def test_out_of_band_and_out_of_window_samples_dropped():
    recs = [_m(T0, 471, -90), _m(T0, 700, -50), _m(T0 + 5000, 471, -50), _m(T0, 477, -120)]
    assert slot_occupancy(recs, TVWS, CFG) == {0: 0.5}


def _oracle_fractions(recs, grid, cfg, start):
    hd, hot = oracles.occupancy_counter(
        recs, grid.start_mhz, grid.channel_width_mhz, grid.n_channels, start, cfg.slot_s, cfg.n_slots, cfg.threshold_dbm
    )
    return oracles.slot_fractions(hd, hot, grid.n_channels, cfg.n_slots), hd, hot


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 40), st.floats(0.0, 0.6))
def test_slot_fractions_match_bruteforce(seed, n_slots, drop):
    rng = np.random.default_rng(seed)
    grid = ChannelGrid(470.0, 6.0, 5)
    duty = rng.random(5)
    recs = planted_stream("a", duty, n_slots, rng, grid=grid, drop=drop)
    cfg = OccupancyConfig(window_s=float(n_slots), start_s=T0)
    got = slot_occupancy(recs, grid, cfg)
    want, _, _ = _oracle_fractions(recs, grid, cfg, T0)
    assert got == want
    assert all(0.0 <= v <= 1.0 for v in got.values())
    if want:
        s = band_summary(recs, grid, cfg)
        hd, hot = oracles.occupancy_counter(recs, 470.0, 6.0, 5, T0, 1.0, n_slots, -108.0)
        assert s.avg_occupancy == oracles.exact_mean(list(oracles.slot_counts(hd, hot, 5, n_slots).values()))
        assert s.p95_occupancy == oracles.sort_and_index_p95(list(want.values()))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-130, -80))
def test_raising_threshold_never_raises_occupancy(seed, thr):
    rng = np.random.default_rng(seed)
    recs = planted_stream("a", rng.random(23), 20, rng)
    lo = slot_occupancy(recs, TVWS, OccupancyConfig(threshold_dbm=thr, window_s=20, start_s=T0))
    hi = slot_occupancy(recs, TVWS, OccupancyConfig(threshold_dbm=thr + 3, window_s=20, start_s=T0))
    assert lo.keys() == hi.keys()
    assert all(hi[k] <= lo[k] for k in lo)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_summary_invariant_under_permutation(seed):
    rng = np.random.default_rng(seed)
    recs = planted_stream("a", rng.random(23), 15, rng)
    cfg = OccupancyConfig(window_s=15, start_s=T0)
    perm = [recs[i] for i in rng.permutation(len(recs))]
    assert band_summary(recs, TVWS, cfg) == band_summary(perm, TVWS, cfg)


def test_single_site_matrix():
    recs = [_m(T0, 471, -90), _m(T0 + 1, 477, -90), _m(T0 + 1, 471, -120)]
    mat = single_site_availability(recs, TVWS, OccupancyConfig(window_s=2))
    assert mat.state.shape == (23, 2)
    assert mat.state[0].tolist() == [1, 0]
    assert mat.state[1].tolist() == [0, 1]
    assert mat.coverage_gaps == {"site": 46 - 3}
    assert mat.legend == {"0": "FREE", "1": "OCCUPIED"}


def test_joint_truth_table():
    a = [_m(T0, 471, -90), _m(T0, 477, -90), _m(T0, 483, -120), _m(T0, 489, -120)]
    b = [_m(T0, 471, -90, "b"), _m(T0, 477, -120, "b"), _m(T0, 483, -90, "b"), _m(T0, 489, -120, "b")]
    mat = joint_availability(a, b, TVWS, OccupancyConfig(window_s=1))
    assert mat.state[:4, 0].tolist() == [
        JointState.OCCUPIED_BOTH,
        JointState.FREE_ONE,
        JointState.FREE_ONE,
        JointState.FREE_BOTH,
    ]
    assert mat.free_mask().tolist()[:4] == [False, False, False, True]


def test_joint_disjoint_windows_rejected():
    a = [_m(T0, 471, -90)]
    b = [_m(T0 + 10_000, 471, -90, "b")]
    with pytest.raises(ValidationError, match="disjoint"):
        joint_availability(a, b, TVWS, CFG)


def test_joint_empty_site_rejected():
    with pytest.raises(InsufficientDataError):
        joint_availability([_m(T0, 471, -90)], [], TVWS, CFG)


def test_joint_matches_oracle_on_fixture(two_site_fixture):
    a, b = two_site_fixture
    mat = joint_availability(a, b, TVWS, CFG)
    _, hd_a, hot_a = _oracle_fractions(a, TVWS, CFG, T0)
    _, hd_b, hot_b = _oracle_fractions(b, TVWS, CFG, T0)
    for c in range(23):
        for s in range(900):
            assert mat.state[c, s] == oracles.joint_cell((c, s) in hot_a, (c, s) in hot_b)
    assert mat.coverage_gaps == {"site_a": 23 * 900 - len(hd_a), "site_b": 23 * 900 - len(hd_b)}
    assert set(np.unique(mat.state)) <= {0, 1, 2}


def test_matrix_csv_and_sidecar(two_site_fixture):
    a, b = two_site_fixture
    mat = joint_availability(a, b, TVWS, CFG)
    rows = mat.to_csv().splitlines()
    assert len(rows) == 23 and all(len(r.split(",")) == 900 for r in rows)
    side = mat.sidecar()
    assert side["legend"] == {"0": "FREE_BOTH", "1": "FREE_ONE", "2": "OCCUPIED_BOTH"}
    assert side["n_channels"] == 23 and side["n_slots"] == 900
