import json
import math
from pathlib import Path

import pytest

from groupnav.config import ConfigError, RunConfig, default_config, load_config
from groupnav.simulator import TestRegion

GOLDEN = Path(__file__).parent / "golden" / "default_config.json"


def test_default_config_matches_golden():
    assert default_config().to_json() == GOLDEN.read_text()


def test_reference_defaults():
    d = json.loads(GOLDEN.read_text())
    p = d["planner"]
    assert p["lambda"] == {"Offline": 0.65, "Online": 0.3}
    assert p["R"] == 12 and p["K"] == 8 and p["gamma"] == 1.0
    assert d["oracle"]["history"] == 8 and d["oracle"]["horizon"] == 8
    for name in ("ETH", "HOTEL", "ZARA1", "ZARA2"):
        s = d["scenes"][name]
        assert (s["eps_s"], s["eps_theta_deg"], s["eps_v"], s["C"]) == (2.0, 30.0, 1.0, 0.35)
    u = d["scenes"]["UNIV"]
    assert (u["eps_s"], u["eps_theta_deg"], u["eps_v"], u["C"]) == (1.5, 15.0, 0.5, 0.25)
    assert d["world"]["dt"] == 0.1


def test_round_trip(tmp_path):
    cfg = default_config()
    path = tmp_path / "cfg.json"
    path.write_text(cfg.to_json())
    again = load_config(path)
    assert again.to_json().replace(str(tmp_path) + "/", "") == cfg.to_json()


def test_overrides_and_explicit_layout(tmp_path):
    doc = {
        "scenes": {
            "ETH": {"path": "eth.txt", "C": 0.3, "region": [-1, -2, 3, 4], "tasks": {"Cross": [[0, -5], [0, 5]]}},
            "UNIV": {"path": "/abs/univ.txt"},
        },
        "planner": {"lambda": {"Online": 0.5}, "R": 6},
        "world": {"collision_distance": 0.4},
    }
    p = tmp_path / "c.json"
    p.write_text(json.dumps(doc))
    cfg = load_config(p)
    eth = cfg.scene("ETH")
    assert eth.path == str(tmp_path / "eth.txt")
    assert eth.C == 0.3 and eth.eps_s == 2.0
    assert eth.region == TestRegion(-1, -2, 3, 4)
    assert eth.tasks == {"Cross": ((0.0, -5.0), (0.0, 5.0))}
    assert cfg.scene("UNIV").path == "/abs/univ.txt" and cfg.scene("UNIV").C == 0.25
    assert cfg.lam == {"Offline": 0.65, "Online": 0.5}
    assert cfg.planner.R == 6
    assert cfg.world.collision_distance == 0.4
    sim = cfg.sim_config(eth, "Online")
    assert sim.planner.lam == 0.5
    assert math.isclose(sim.grouping.eps_theta, math.radians(30))


def test_missing_file_names_path(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.json"):
        load_config(tmp_path / "nope.json")


@pytest.mark.parametrize(
    "doc",
    [
        {},
        {"scenes": {}},
        {"scenes": {"ETH": {}}},
        {"scenes": {"ETH": {"path": "x", "tasks": {"Sideways": [[0, 0], [1, 1]]}}}},
        {"scenes": {"ETH": {"path": "x"}}, "policies": ["teleport"]},
        {"scenes": {"ETH": {"path": "x"}}, "condition": "Sometimes"},
    ],
)
def test_bad_configs(doc):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(doc)


def test_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="bad.json"):
        load_config(p)
