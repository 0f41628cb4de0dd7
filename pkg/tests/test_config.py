import json

import pytest

from qhengine.config import PRESETS, RunConfig, load_config, merge, parse_json
from qhengine.errors import ConfigError
from qhengine.model import EngineModel


def test_defaults_are_the_reference_parameters():
    cfg = RunConfig()
    assert cfg.model == EngineModel()
    assert cfg.model.levels == (-2.0, -0.5, 0.5, 2.0)
    assert cfg.schedule.engines == ["continuous", "two_stroke", "four_stroke", "two_field"]
    assert cfg.tau_cyc() == pytest.approx(cfg.model.cycle_time(1))


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_round_trip(name):
    cfg = load_config(preset=name)
    again = RunConfig.from_dict(json.loads(cfg.to_json()))
    assert again == cfg
    assert again.to_json() == cfg.to_json()


def test_preset_values():
    assert load_config(preset="fig6a").model.epsilon == 1e-4
    assert load_config(preset="fig6b").model.gamma_h == 5e-3
    f10 = load_config(preset="fig10")
    assert f10.model.epsilon == 2e-4 and f10.schedule.m == 600 and f10.experiment.axis == "gamma"


def test_config_file_overrides_preset(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"model": {"t_h": 7.0}, "schedule": {"n_cycles": 3}}')
    cfg = load_config(str(p), "fig6a")
    assert cfg.model.t_h == 7.0 and cfg.model.epsilon == 1e-4
    assert cfg.schedule.n_cycles == 3 and cfg.schedule.m == 20


def test_explicit_tau_wins():
    cfg = RunConfig.from_dict({"schedule": {"tau_cyc": 12.5}})
    assert cfg.tau_cyc() == 12.5


def test_parse_error_reports_line_and_column():
    with pytest.raises(ConfigError, match=r"c.json:2:5"):
        parse_json('{\n    oops}', "c.json")


@pytest.mark.parametrize("d, where", [
    ({"modle": {}}, "top-level"),
    ({"model": {"eps": 1}}, "model"),
    ({"model": {"epsilon": "big"}}, "model"),
    ({"model": []}, "model"),
    ({"schedule": {"engines": ["rotary"]}}, "schedule.engines"),
    ({"schedule": {"engines": "continuous"}}, "schedule.engines"),
    ({"schedule": {"n_cycles": -1}}, "schedule.n_cycles"),
    ({"schedule": {"m": 0}}, "schedule.m"),
    ({"experiment": {"axis": "time"}}, "experiment.axis"),
    ({"experiment": {"n_points": 0}}, "experiment.n_points"),
    ({"experiment": {"s_min": 1, "s_max": 0.1}}, "experiment"),
    ({"experiment": {"inject_fault": "gremlin"}}, "experiment.inject_fault"),
    ({"experiment": {"gap_reference_preset": "fig99"}}, "experiment.gap_reference_preset"),
    ({"output": {"format": "xml"}}, "output.format"),
])
def test_invalid_configs_name_the_field(d, where):
    with pytest.raises(ConfigError, match=where.replace(".", r"\.")):
        RunConfig.from_dict(d)


def test_unknown_preset_and_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(preset="fig99")
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.json"))


def test_merge_is_blockwise():
    out = merge({"model": {"a": 1, "b": 2}}, {"model": {"b": 3}, "output": {"x": 1}})
    assert out == {"model": {"a": 1, "b": 3}, "output": {"x": 1}}
