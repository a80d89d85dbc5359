import json

import pytest

from voltsim.config import Config, ConfigError, parse_months


def test_defaults_round_trip():
    cfg = Config()
    assert Config.from_dict(json.loads(cfg.dumps())) == cfg


def test_defaults_carry_reference_hyperparameters():
    cfg = Config()
    assert cfg.training.delta_min == 10.0
    assert cfg.training.mlp.hidden_layers == (18, 14, 9, 10)


def test_partial_override(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"seed": 5, "training": {"forest": {"tree_count": 7}}}))
    cfg = Config.load(path)
    assert cfg.seed == 5 and cfg.training.forest.tree_count == 7
    assert cfg.training.mlp == Config().training.mlp


@pytest.mark.parametrize("doc, message", [
    ({"sede": 1}, "unknown key"),
    ({"training": {"forest": {"trees": 3}}}, "unknown key"),
    ({"schemaVersion": 9}, "schema version"),
    ({"seed": "one"}, "does not match"),
    ({"training": {"delta_min": -1}}, "positive"),
    ({"training": {"features": ["shoeSize"]}}, "feature"),
    ({"training": {"months": "2010-05:2010-02"}}, "ends before"),
    ({"simulation": {"schedulers": ["ml:median"]}}, "unknown scheduler"),
    ({"generator": {"fleet": {"cluster_count": 0}}}, "cluster"),
])
def test_rejects(doc, message):
    with pytest.raises(ConfigError, match=message):
        Config.from_dict(doc)


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        Config.load(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError, match="valid JSON"):
        Config.load(tmp_path / "bad.json")
    (tmp_path / "list.json").write_text("[]")
    with pytest.raises(ConfigError, match="object"):
        Config.load(tmp_path / "list.json")


def test_bool_is_not_an_int():
    with pytest.raises(ConfigError):
        Config.from_dict({"seed": True})


def test_parse_months():
    assert parse_months("2010-02") == ((2010, 2), (2010, 2))
    assert parse_months("2010-02:2010-06") == ((2010, 2), (2010, 6))
    with pytest.raises(ConfigError):
        parse_months("Feb")
