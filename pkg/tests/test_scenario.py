import json

import numpy as np
import pytest

from crowdctl.exceptions import ScenarioError
from crowdctl.params import Params
from crowdctl.scenario import (BUNDLED, bundled_path, bundled_scenario, load_scenario,
                               parse_scenario, scenario_hash)

BASE = {
    "dimension": 2,
    "field": {"type": "constant", "value": [1, 0]},
    "region": {"halfspaces": [{"normal": [1, 0], "offset": 0}, {"normal": [-1, 0], "offset": 2},
                              {"normal": [0, 1], "offset": 1.5}, {"normal": [0, -1], "offset": 1.5}]},
    "initial": [[-3, 0]],
    "target": [[1, 0]],
}


def write(tmp_path, data, name="s.json"):
    path = tmp_path / name
    path.write_text(data if isinstance(data, str) else json.dumps(data))
    return path


def test_fig4_left_bundle():
    s = bundled_scenario("fig4-left")
    assert np.array_equal(s.field.offset, [1.0, 0.0]) and s.field.kind == "constant"
    assert s.n_agents == 1 and s.dimension == 2
    assert s.region.contains([-1.0, 0.0]) and not s.region.contains([1.0, 0.0])


@pytest.mark.parametrize("name", BUNDLED)
def test_all_bundles_load(name):
    s = load_scenario(bundled_path(name))
    assert s.name == name


def test_fig5_style_size():
    assert bundled_scenario("fig5-style").n_agents == 16


def test_duplicate_points(tmp_path):
    data = dict(BASE, initial=[[-3, 0], [-3, 0]], target=[[1, 0], [2, 0]])
    with pytest.raises(ScenarioError, match="configuration not disjoint"):
        load_scenario(write(tmp_path, data))


def test_defaults_applied(tmp_path):
    s = load_scenario(write(tmp_path, BASE))
    assert s.params.step == 1e-3 and s.params.delta == 0.1 and s.params == Params()


def test_params_override(tmp_path):
    s = load_scenario(write(tmp_path, dict(BASE, params={"delta": 0.2, "working_box": [[-9, -9], [9, 9]]})))
    assert s.params.delta == 0.2 and s.params.working_box == ((-9.0, -9.0), (9.0, 9.0))


def test_parse_error_location(tmp_path):
    with pytest.raises(ScenarioError, match=r"s\.json:3:\d+"):
        load_scenario(write(tmp_path, '{\n "dimension": 2,\n "field": }\n'))


@pytest.mark.parametrize("mutate,match", [
    (lambda d: d.pop("field"), "field: missing"),
    (lambda d: d.update(dimension=0), "dimension"),
    (lambda d: d.update(field={"type": "spiral"}), "unknown field type"),
    (lambda d: d.update(target=[[1, 0], [2, 0]]), "differs from initial size"),
    (lambda d: d.update(initial=[[1, 0, 0]]), "length 2"),
    (lambda d: d.update(params={"step": -1}), "step"),
    (lambda d: d.update(params={"stepsize": 1}), "unknown parameter"),
    (lambda d: d.update(extra=1), "unknown field"),
    (lambda d: d["region"].update(halfspaces=[]), "non-empty"),
    (lambda d: d["region"]["halfspaces"][0].pop("offset"), r"halfspaces\[0\]\.offset"),
    (lambda d: d.update(region={"halfspaces": [{"normal": [1, 0], "offset": 0},
                                               {"normal": [-1, 0], "offset": -1}]}), "empty interior"),
])
def test_validation_errors(tmp_path, mutate, match):
    data = json.loads(json.dumps(BASE))
    mutate(data)
    with pytest.raises(ScenarioError, match=match):
        load_scenario(write(tmp_path, data))


def test_affine_without_offset(tmp_path):
    data = dict(BASE, field={"type": "affine", "matrix": [[0, -1], [1, 0]]})
    s = load_scenario(write(tmp_path, data))
    assert np.array_equal(s.field.offset, [0.0, 0.0])


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_scenario(tmp_path / "nope.json")


def test_hash_stable_and_sensitive(tmp_path):
    a = load_scenario(write(tmp_path, BASE, "a.json"))
    b = load_scenario(write(tmp_path, dict(BASE, name="other"), "b.json"))
    c = load_scenario(write(tmp_path, dict(BASE, target=[[1.5, 0]]), "c.json"))
    assert scenario_hash(a) == scenario_hash(b)
    assert scenario_hash(a) != scenario_hash(c)


def test_round_trip_via_dict():
    s = bundled_scenario("tangency")
    again = parse_scenario(json.dumps(s.to_dict()))
    assert scenario_hash(again) == scenario_hash(s)
