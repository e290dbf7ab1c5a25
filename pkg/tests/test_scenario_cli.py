import json
from pathlib import Path

import pytest

from ecco_sim.cli import main
from ecco_sim.experiments import correlated_scenario
from ecco_sim.scenario import ScenarioError, load_scenario, parse_scenario, scenario_to_dict

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def minimal(**extra):
    data = {"cameras": [{"id": "a", "location": [0, 0], "scene": [0.1, 0.2],
                         "local_acc": 0.4}]}
    data.update(extra)
    return data


@pytest.mark.parametrize("data, path", [
    (minimal(cameras=[{"id": "a", "location": [0, 0], "scene": [0.1, 2.0],
                       "local_acc": 0.4}]), "$.cameras[0].scene[1]"),
    (minimal(policy="fastest"), "$.policy"),
    (minimal(drift_events=[{"camera": "zz", "time_s": 0, "new_scene": [0, 0]}]),
     "$.drift_events[0].camera"),
    (minimal(cameras=[{"id": "a", "location": [0, 0], "scene": [0.1], "local_acc": 0.4},
                      {"id": "a", "location": [0, 0], "scene": [0.1], "local_acc": 0.4}]),
     "$.cameras[1].id"),
    (minimal(model={"k": -1}), "$.model.k"),
    (minimal(extra_field=1), "$"),
])
def test_schema_errors_carry_field_path(data, path):
    with pytest.raises(ScenarioError) as err:
        parse_scenario(data)
    assert err.value.path == path


def test_defaults_and_presets():
    cfg = parse_scenario(minimal())
    assert cfg.window_s == 60.0 and cfg.allocator.micro_windows_W == 10
    assert cfg.model.learning_rate == 0.05 and cfg.model.similarity_scale == 0.5
    assert cfg.grouping.epsilon == 120.0 and cfg.grouping.delta == 500.0
    assert cfg.use_grouping and not cfg.use_equal_bandwidth and cfg.sampling_override is None
    naive = cfg.with_(policy="naive")
    assert not naive.use_grouping and naive.use_equal_bandwidth
    assert naive.sampling_override == (5.0, 960.0)


def test_round_trip():
    cfg = parse_scenario(correlated_scenario(4))
    assert parse_scenario(scenario_to_dict(cfg)) == cfg


@pytest.mark.parametrize("name", ["correlated_6", "divergence", "dissimilar"])
def test_shipped_scenarios_load(name):
    load_scenario(SCENARIOS / f"{name}.json")


def test_cli_run_is_byte_identical(tmp_path, capsys):
    scen = str(SCENARIOS / "divergence.json")
    for out in ("a", "b"):
        assert main(["run", scen, "--seed", "3", "--out", str(tmp_path / out)]) == 0
    for name in ("cameras.csv", "jobs.csv", "schedule.csv", "events.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header = (tmp_path / "a" / "cameras.csv").read_text().splitlines()[0]
    assert header == "window,t_end_s,camera_id,job_id,accuracy,request_t_s,request_acc"


def test_cli_analyze_profile_compare(tmp_path, capsys):
    scen = str(SCENARIOS / "divergence.json")
    main(["run", scen, "--out", str(tmp_path / "run")])
    capsys.readouterr()
    assert main(["analyze", str(tmp_path / "run" / "cameras.csv"), "--target-acc", "0.35"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("cam1\t")
    assert main(["analyze", str(tmp_path / "run" / "cameras.csv"), "--target-acc", "0.99"]) == 0
    assert "unattained" in capsys.readouterr().out

    prof = tmp_path / "cam1.csv"
    assert main(["profile", scen, "--camera", "cam1", "--out", str(prof)]) == 0
    assert prof.read_text().startswith("camera_id,budget_gpu_s,fps,resolution,feasible")

    assert main(["compare", scen, "--policies", "ecco,naive"]) == 0
    assert "ecco" in capsys.readouterr().out


def test_cli_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(minimal(policy="nope")))
    assert main(["run", str(bad)]) == 2
    assert "$.policy" in capsys.readouterr().err
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    assert main(["run", str(broken)]) == 2
    tight = tmp_path / "tight.json"
    tight.write_text(json.dumps(correlated_scenario(4, n_regions=4, micro_windows=3)))
    assert main(["run", str(tight), "--out", str(tmp_path / "o")]) == 3
    assert "window 1" in capsys.readouterr().err
    assert main(["profile", str(SCENARIOS / "divergence.json"), "--camera", "nope"]) == 2
    assert main(["compare", str(SCENARIOS / "divergence.json"), "--policies", "x"]) == 2
