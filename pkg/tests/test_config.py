import json
from pathlib import Path

import pytest

from deeplse.config import ExperimentConfig, config_from_dict, config_to_dict, load_config, save_config
from deeplse.errors import ConfigError, SchemaError
from deeplse.market_sim import AblParams

CONFIGS = sorted((Path(__file__).resolve().parents[1] / "configs").glob("*.json"))


def test_default_roundtrip(tmp_path):
    cfg = ExperimentConfig()
    back = load_config(save_config(cfg, tmp_path / "c.json"))
    assert config_to_dict(back) == config_to_dict(cfg)
    assert back.liquid_strikes == cfg.liquid_strikes


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.name)
def test_shipped_configs_load_and_roundtrip(path, tmp_path):
    cfg = load_config(path)
    again = load_config(save_config(cfg, tmp_path / path.name))
    assert config_to_dict(again) == config_to_dict(cfg)


def test_model_target_mode():
    cfg = load_config(next(p for p in CONFIGS if p.name.startswith("abl")))
    assert cfg.target.mode == "model" and isinstance(cfg.target.model, AblParams)


def test_seed_propagates():
    cfg = config_from_dict({"seed": 7})
    assert cfg.sim.seed == cfg.pretrain.seed == cfg.fine_tune.seed == 7


def test_invalid_rho_names_field():
    with pytest.raises(ConfigError) as info:
        config_from_dict({"model": {"tag": "bates", "params": {"rho": 2}}})
    assert info.value.field == "model.params.rho"
    assert "rho" in str(info.value)


@pytest.mark.parametrize("doc, field", [
    ({"bogus": 1}, "bogus"),
    ({"sim": {"n_path": 5}}, "sim.n_path"),
    ({"pretrain": {"learning_rate": -1}}, "pretrain.learning_rate"),
    ({"tau": 0}, "tau"),
    ({"target": {"mode": "shift"}}, "target.mode"),
    ({"model": {"tag": "heston"}}, "model.tag"),
    ({"liquid_strikes": []}, "liquid_strikes"),
])
def test_errors_name_the_field(doc, field):
    with pytest.raises(ConfigError) as info:
        config_from_dict(doc)
    assert info.value.field == field


def test_sieve_applies_to_both_stages():
    box = {"slope_cap": [2, 2], "intercept_cap": [2, 2], "skip_cap": [0.5, 0.5], "temp_cap": [1, 1],
           "width_cap": [3, 3], "out_cap": 1.0, "input_radius": 2.0}
    cfg = config_from_dict({"sieve": box})
    assert cfg.pretrain.sieve_box is cfg.fine_tune.sieve_box is cfg.sieve
    with pytest.raises(ConfigError):
        config_from_dict({"sieve": {**box, "slope_cap": [2]}})


def test_json_syntax_error_has_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "seed": 1,\n  oops\n}\n')
    with pytest.raises(ConfigError, match=r"bad.json:3:\d+"):
        load_config(p)
    assert issubclass(ConfigError, SchemaError)


def test_censor_rule_section():
    cfg = config_from_dict({"censor": {"side": "itm", "band": [0.1, 0.25], "n": 3}})
    assert cfg.censor.picks is None and cfg.censor.rule.band == (0.1, 0.25)
    assert json.loads(json.dumps(config_to_dict(cfg)))["censor"]["band"] == [0.1, 0.25]
