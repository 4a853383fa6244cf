import json
from importlib import resources

import pytest

from meterlink.sim import PRESETS, Scenario, ScenarioError, preset
from meterlink.sim.presets import indoor_building_scenario, outdoor_scenario, saturation_scenario
from meterlink.sim.scenario import validate_dict


def test_json_round_trip(tmp_path):
    sc = preset("outdoor-hagenberg")
    path = tmp_path / "s.json"
    sc.save(path)
    back = Scenario.load(path)
    assert back.to_dict() == sc.to_dict()


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_checked_in_files_match_presets(name):
    text = resources.files("meterlink").joinpath(f"scenarios/{name}.json").read_text()
    assert json.loads(text) == preset(name).to_dict()


def test_collision_file_matches():
    text = resources.files("meterlink").joinpath("scenarios/collision.json").read_text()
    assert json.loads(text) == saturation_scenario(2, distinct=False).to_dict()


def test_schema_errors_carry_paths():
    d = preset("saturation").to_dict()
    d["nodes"][0]["dr"] = 9
    d["bogus"] = 1
    errors = validate_dict(d)
    assert ("$.nodes[0].dr", "9 is greater than the maximum of 5") in errors
    assert any(p == "$" and "bogus" in m for p, m in errors)
    with pytest.raises(ScenarioError):
        Scenario.from_dict(d)


def test_semantic_errors():
    d = preset("saturation").to_dict()
    d["nodes"][0]["channels"] = [868_000_000]
    d["nodes"][1]["payload"] = {"size": 243}
    d["nodes"][2]["start_s"] = 10
    d["nodes"][2]["stop_s"] = 5
    paths = {p for p, _ in validate_dict(d)}
    assert {"$.nodes[0].channels[0]", "$.nodes[1].payload", "$.nodes[2].stop_s"} <= paths


def test_schema_errors_hide_semantic_ones():
    d = preset("saturation").to_dict()
    d["nodes"][0]["channels"] = [868_000_000]
    d["nodes"][1]["dr"] = -1
    assert [p for p, _ in validate_dict(d)] == ["$.nodes[1].dr"]


def test_load_reports_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{")
    with pytest.raises(ScenarioError) as exc:
        Scenario.load(path)
    assert exc.value.errors[0][0] == "$"


def test_indoor_preset_layout():
    sc = indoor_building_scenario()
    assert len(sc.nodes) == 54 and sc.duration_s == 54 * 3600
    assert all(g.demodulators == 8 for g in sc.gateways)
    gw = sc.gateways[0].position
    distances = sorted({round(n.position.distance(gw)) for n in sc.nodes})
    assert distances == [20, 26, 40, 42, 45, 48, 51, 55, 60]


def test_outdoor_preset_layout():
    sc = outdoor_scenario()
    gw = sc.gateways[0].position
    assert sorted({round(n.position.distance(gw), 1) for n in sc.nodes}) == [151.1, 635.8, 845.0]
    assert {n.activation for n in sc.nodes} == {"OTAA"}


def test_unknown_presets():
    with pytest.raises(ValueError):
        preset("nowhere")
    with pytest.raises(ValueError):
        indoor_building_scenario("elsewhere")
    with pytest.raises(ValueError):
        outdoor_scenario("elsewhere")
