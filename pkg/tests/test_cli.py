import json
import math
from pathlib import Path

import numpy as np
import pytest

import oracles
from conftest import T0, TVWS, planted_stream
from specmap.artifacts import load_checkpoint
from specmap.cli import main
from specmap.ingest import HEADER, format_measurements

CSV_HEADER = ",".join(HEADER) + "\n"


def run(*argv):
    return main([str(a) for a in argv])


def outputs(path: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(path.iterdir()) if p.name != "run.log"}


@pytest.fixture
def two_site_files(tmp_path):
    rng = np.random.default_rng(77)
    a = planted_stream("a", np.linspace(0.1, 0.9, 23), 60, rng, drop=0.05)
    b = planted_stream("b", np.linspace(0.9, 0.1, 23), 60, rng, drop=0.05)
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    pa.write_text(format_measurements(a))
    pb.write_text(format_measurements(b))
    return pa, pb, a, b


def test_occupancy_matches_oracle_golden(tmp_path, two_site_files):
    pa, pb, a, b = two_site_files
    out = tmp_path / "occ"
    assert run("occupancy", "--input", pa, "--input-b", pb, "--out", out, "--set", "window_s=60", "--set", f"start_s={T0}") == 0
    report = json.loads((out / "occupancy_report.json").read_text())
    rows = []
    per_site = []
    for recs in (a, b):
        hd, hot = oracles.occupancy_counter(recs, 470.0, 6.0, 23, T0, 1.0, 60, -108.0)
        fr = oracles.slot_fractions(hd, hot, 23, 60)
        per_site.append((hd, hot))
        counts = oracles.slot_counts(hd, hot, 23, 60)
        rows.append((oracles.exact_mean(list(counts.values())), oracles.sort_and_index_p95(list(fr.values()))))
    for name, (avg, p95) in zip(("A", "B"), rows):
        assert report["sites"][name]["avg_occupancy"] == avg
        assert report["sites"][name]["p95_occupancy"] == p95
    golden = "".join(
        ",".join(str(oracles.joint_cell((c, s) in per_site[0][1], (c, s) in per_site[1][1])) for s in range(60)) + "\n"
        for c in range(23)
    )
    assert (out / "availability.csv").read_text() == golden
    side = json.loads((out / "availability.json").read_text())
    assert side["coverage_gaps"] == {"A": 23 * 60 - len(per_site[0][0]), "B": 23 * 60 - len(per_site[1][0])}
    assert (out / "config_echo.json").exists() and (out / "run.log").exists()


def test_missing_input_exits_2_with_path(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    assert run("occupancy", "--input", missing, "--out", tmp_path / "o") == 2
    assert str(missing) in capsys.readouterr().err


def test_empty_file_exits_3_no_data(tmp_path, capsys):
    p = tmp_path / "empty.csv"
    p.write_text(CSV_HEADER)
    assert run("occupancy", "--input", p, "--out", tmp_path / "o") == 3
    assert "no data" in capsys.readouterr().err


def test_unknown_key_and_nested_value_rejected(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run("synth", "harmonic", "--config", cfg, "--out", tmp_path / "o") == 2
    cfg.write_text(json.dumps({"seed": {"a": 1}}))
    assert run("synth", "harmonic", "--config", cfg, "--out", tmp_path / "o") == 2


def _three_points(path):
    # pair distances 0.6, 0.9 and 1.4 fall into three separate lag bins of width 0.25
    cx = (1.4**2 - 0.9**2 + 0.36) / 1.2
    pts = [(0.0, 0.0, -80.0), (0.6, 0.0, -86.0), (cx, math.sqrt(1.4**2 - cx**2), -97.0)]
    path.write_text("x,y,z\n" + "".join(f"{x!r},{y!r},{z!r}\n" for x, y, z in pts))
    return pts


def test_kriging_checkpoint_matches_oracle(tmp_path):
    pts = _three_points(tmp_path / "s.csv")
    out = tmp_path / "k"
    assert run("fit", "--method", "kriging", "--input", tmp_path / "s.csv", "--out", out,
               "--set", "n_bins=6", "--set", "max_lag=1.5") == 0
    doc = json.loads((out / "model.json").read_text())
    v = doc["variogram"]
    surrogate = load_checkpoint(doc)
    for q in [(0.3, 0.2), (0.9, 0.5), (-0.5, 0.1)]:
        want, _, _ = oracles.ordinary_kriging_oracle(pts, q, v["nugget"], v["sill"], v["range_len"])
        assert surrogate.predict([q])[0] == pytest.approx(want, abs=1e-8)


def test_pinn_lambda_zero_and_nn_share_parameter_bytes(tmp_path):
    assert run("synth", "harmonic", "--out", tmp_path / "d", "--set", "n_train=20", "--set", "n_test=10") == 0
    common = ["--input", tmp_path / "d" / "train.csv", "--set", "epochs=40", "--set", "layer_dims=[2,8,8,1]",
              "--set", "seed=3"]
    assert run("fit", "--method", "nn", "--out", tmp_path / "nn", *common) == 0
    assert run("fit", "--method", "pinn", "--out", tmp_path / "pinn", "--set", "lambda_pde=0",
               "--set", "n_collocation=32", *common) == 0
    a = json.loads((tmp_path / "nn" / "model.json").read_text())["model"]["parameters"]
    b = json.loads((tmp_path / "pinn" / "model.json").read_text())["model"]["parameters"]
    assert json.dumps(a) == json.dumps(b)


def test_zero_epochs_is_config_error(tmp_path):
    assert run("synth", "harmonic", "--out", tmp_path / "d", "--set", "n_train=10", "--set", "n_test=5") == 0
    assert run("fit", "--method", "nn", "--input", tmp_path / "d" / "train.csv", "--out", tmp_path / "o",
               "--set", "epochs=0") == 2


def test_divergence_exits_4(tmp_path, capsys):
    assert run("synth", "harmonic", "--out", tmp_path / "d", "--set", "n_train=10", "--set", "n_test=5") == 0
    code = run("fit", "--method", "nn", "--input", tmp_path / "d" / "train.csv", "--out", tmp_path / "o",
               "--set", "learning_rate=1e305", "--set", "epochs=30", "--set", "layer_dims=[2,4,1]")
    assert code == 4
    assert "epoch" in capsys.readouterr().err


def test_duplicate_locations_without_nugget_exit_4(tmp_path):
    # a hand-written kriging checkpoint with co-located samples and zero nugget
    doc = {"format": "specmap-checkpoint/1", "method": "kriging",
           "variogram": {"kind": "exponential", "nugget": 0.0, "sill": 1.0, "range_len": 1.0},
           "samples": [[0, 0, 1], [0, 0, 2], [1, 1, 3]]}
    (tmp_path / "m.json").write_text(json.dumps(doc))
    assert run("map", "--model", tmp_path / "m.json", "--out", tmp_path / "o") == 4


def test_eval_truth_oracle_scores_zero(tmp_path):
    s = np.random.default_rng(0).normal(-90, 4, (25, 3))
    (tmp_path / "t.csv").write_text("x,y,z\n" + "".join(f"{x!r},{y!r},{z!r}\n" for x, y, z in s.tolist()))
    (tmp_path / "m.json").write_text(json.dumps({"format": "specmap-checkpoint/1", "method": "lookup",
                                                 "samples": s.tolist()}))
    assert run("eval", "--model", tmp_path / "m.json", "--test", tmp_path / "t.csv", "--out", tmp_path / "o") == 0
    report = json.loads((tmp_path / "o" / "mse_report.json").read_text())
    assert report["methods"]["lookup"]["mse_dbm2"] == 0.0


def test_map_constant_surrogate_uniform(tmp_path):
    (tmp_path / "m.json").write_text(json.dumps({"format": "specmap-checkpoint/1", "method": "constant",
                                                 "value": -101.25}))
    assert run("map", "--model", tmp_path / "m.json", "--out", tmp_path / "o", "--set", "nx=3", "--set", "ny=2") == 0
    assert (tmp_path / "o" / "rem.csv").read_text() == "-101.25,-101.25,-101.25\n" * 2
    assert json.loads((tmp_path / "o" / "rem.json").read_text())["model_tag"] == "constant"


def test_allocate_database_and_sensing(tmp_path, two_site_files):
    pa, pb, _, _ = two_site_files
    req = {"requests": [
        {"requester_id": "x", "bandwidth_mhz": 6, "site": [0, 0], "eirp_desired_dbm": 30},
        {"requester_id": "y", "bandwidth_mhz": 6, "site": [0, 0], "eirp_desired_dbm": 30},
    ]}
    (tmp_path / "r.json").write_text(json.dumps(req))
    assert run("allocate", "--requests", tmp_path / "r.json", "--mode", "database_conservative",
               "--set", "database_channels=[5,6,7]", "--out", tmp_path / "db") == 0
    plan = json.loads((tmp_path / "db" / "allocation_plan.json").read_text())
    assert [g["channels"] for g in plan["grants"]] == [[5], [5]]
    assert all(g["eirp_cap_dbm"] == 16.0 for g in plan["grants"])
    assert len(plan["conflicts"]) == 1

    assert run("occupancy", "--input", pa, "--input-b", pb, "--out", tmp_path / "occ", "--set", "window_s=60") == 0
    assert run("allocate", "--requests", tmp_path / "r.json", "--availability", tmp_path / "occ" / "availability.csv",
               "--out", tmp_path / "sense") == 0
    plan = json.loads((tmp_path / "sense" / "allocation_plan.json").read_text())
    assert plan["mode"] == "sensing_dynamic" and plan["conflicts"] == []


def test_seed_override_env_recorded(tmp_path, monkeypatch):
    monkeypatch.setenv("SPECMAP_SEED", "9")
    assert run("synth", "harmonic", "--out", tmp_path / "o", "--set", "n_train=5", "--set", "n_test=5") == 0
    echo = json.loads((tmp_path / "o" / "config_echo.json").read_text())
    assert echo["config"]["seed"] == 9
    assert echo["config"]["seed_override_env"] == {"SPECMAP_SEED": 9}


def test_reruns_are_byte_identical(tmp_path, two_site_files):
    pa, pb, _, _ = two_site_files
    d = tmp_path
    snapshots = []
    for _ in range(2):
        assert run("synth", "harmonic", "--out", d / "syn", "--set", "n_train=30", "--set", "n_test=50") == 0
        assert run("fit", "--method", "nn", "--input", d / "syn" / "train.csv", "--test", d / "syn" / "test.csv",
                   "--out", d / "nn", "--set", "epochs=30", "--set", "layer_dims=[2,8,1]") == 0
        assert run("map", "--model", d / "nn" / "model.json", "--out", d / "map", "--set", "nx=8", "--set", "ny=8") == 0
        assert run("occupancy", "--input", pa, "--input-b", pb, "--out", d / "occ", "--set", "window_s=60") == 0
        snapshots.append({sub: outputs(d / sub) for sub in ("syn", "nn", "map", "occ")})
    assert snapshots[0] == snapshots[1]
    # the run log is the only file that accumulates
    assert len((d / "nn" / "run.log").read_text().splitlines()) == 2
