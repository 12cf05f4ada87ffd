import csv
import io
import math

import pytest

import vlab

SINGLE_CHAMBER = {
    "template_id": "single_chamber",
    "lab_kind": "vacuum",
    "title": "Single chamber pump-down",
    "description": "One chamber evacuated by one pump.",
    "discipline_tags": ["physical_electronics"],
    "slots": [
        {
            "slot_id": "pump",
            "position": [1, 0],
            "allowed_kinds": ["rotary_pump"],
            "default_kind": "rotary_pump",
            "params": {
                "rotary_pump": [
                    {"name": "speed", "unit": "l/s", "min": 1, "max": 100, "default": 10, "scale": "log"},
                    {"name": "ultimate_pressure", "unit": "Pa", "min": 1e-9, "max": 1, "default": 1e-9, "scale": "log"},
                ]
            },
        }
    ],
    "fixed_structure": {
        "chambers": [{"id": "chamber", "volume": 100, "initial_pressure": 1000, "kind": "outgassing", "outgassing_rate": 0}],
        "pumps": [{"id": "p", "chamber": "chamber", "slot": "pump"}],
    },
    "output_channels": [{"label": "chamber", "unit": "Pa"}],
    "sim_defaults": {"duration": 60, "n_samples": 61},
}


def test_builtin_templates_roundtrip():
    ids = vlab.template_ids()
    assert len(ids) == 4
    for tid in ids:
        tpl = vlab.template(tid)
        assert tpl["template_id"] == tid
        assert vlab.template(tpl) == tpl
        cfg = vlab.default_config(tid)
        assert cfg["template_id"] == tid
        assert vlab.validate(tid, cfg) == []


def test_run_matches_declared_channels_and_is_deterministic():
    for tid in vlab.template_ids():
        tpl = vlab.template(tid)
        series = vlab.run(tid)
        labels = [c["label"] for c in series["channels"]]
        assert labels == [c["label"] for c in tpl["output_channels"]]
        for c in series["channels"]:
            assert len(c["values"]) == len(series["t"])
            assert all(math.isfinite(v) for v in c["values"])
        assert vlab.run_csv(tid) == vlab.run_csv(tid)


def test_csv_columns_follow_channels():
    text = vlab.run_csv("vacuum_station")
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["t", "fore[Pa]", "main[Pa]"]
    series = vlab.run("vacuum_station")
    assert len(rows) - 1 == len(series["t"])
    assert float(rows[-1][2]) == pytest.approx(series["channels"][1]["values"][-1], rel=1e-12)


def test_exponential_pumpdown():
    volume, speed, p0 = 100.0, 10.0, 1000.0
    series = vlab.run(SINGLE_CHAMBER)
    p = series["channels"][0]["values"]
    for t, value in zip(series["t"], p):
        assert value == pytest.approx(p0 * math.exp(-speed * t / volume), rel=1e-3)


def test_invalid_config_reports_param():
    cfg = vlab.default_config("vacuum_station")
    cfg["param_values"]["roughing"]["speed"] = 1e4
    report = vlab.validate("vacuum_station", cfg)
    assert [v["param"] for v in report] == ["speed"]
    assert report[0]["reason"] == "out_of_range"
    with pytest.raises(vlab.ValidationError) as err:
        vlab.run("vacuum_station", cfg)
    assert err.value.violations == report
    with pytest.raises(ValueError):
        vlab.validate("vacuum_station", {"template_id": "vacuum_station", "colour": "red"})
    with pytest.raises(KeyError):
        vlab.template("no_such_lab")


def test_random_configs_are_valid_and_seeded():
    for tid in vlab.template_ids():
        a = vlab.random_config(tid, 7)
        assert a == vlab.random_config(tid, 7)
        assert vlab.validate(tid, a) == []


def test_service_round_trip(tmp_path):
    svc = vlab.Service(data_dir=tmp_path, workers=1, pbkdf2_iterations=1000)
    svc.bootstrap_admin("admin", "pw")
    status, body = svc.request("POST", "/api/v1/session", body={"login": "admin", "password": "pw"})
    assert status == 200
    token = body["token"]
    assert svc.request("GET", "/api/v1/runs")[0] == 401
    status, user = svc.request("POST", "/api/v1/users", token,
                               {"login": "s", "password": "s-pw", "role": "Student"})
    assert status == 201
    student = svc.request("POST", "/api/v1/session", body={"login": "s", "password": "s-pw"})[1]["token"]
    status, run = svc.request("POST", "/api/v1/runs", student, vlab.default_config("measurement_bench"))
    assert status == 201
    svc.wait_idle()
    status, done = svc.request("GET", "/api/v1/runs/" + run["id"], student)
    assert done["status"] == "Done"
    status, text = svc.request("GET", "/api/v1/runs/" + run["id"] + "/result.csv", student)
    assert status == 200
    assert text == vlab.run_csv("measurement_bench")
    del svc
    reopened = vlab.Service(data_dir=tmp_path, workers=1, pbkdf2_iterations=1000)
    assert reopened.request("POST", "/api/v1/session", body={"login": "s", "password": "s-pw"})[0] == 200


def test_pfn_with_inductive_load_runs():
    cfg = {
        "param_values": {
            "load": {"inductance": 6.25734568436777e-06, "resistance": 914.114656324255},
            "pfn": {"capacitance": 1.383563247131113e-10, "charge_voltage": 296.84497947199014,
                    "inductance": 6.440189776249486e-05, "n_sections": 9.0},
        },
        "selections": {"load": "rl_load", "pfn": "pfn_ladder"},
        "template_id": "pfn_modulator",
    }
    series = vlab.run("pfn_modulator", cfg)
    assert all(math.isfinite(v) for c in series["channels"] for v in c["values"])
