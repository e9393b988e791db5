import pytest

from sensorcode.config import load_config, parse_config
from sensorcode.errors import ConfigError


def test_sections_flatten(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('[scenario]\nkind = "ceo"\nn = 12\nlambda_sq = 0.5\n[coding]\nrate = 2\nmode = "ir"\n'
                 'resolution = 8\n[simulation]\nseed = 4\n')
    cfg, choice = load_config(p)
    assert (cfg.kind, cfg.n, cfg.lambda_sq, cfg.rate, cfg.seed) == ("ceo", 12, 0.5, 2, 4)
    assert choice.mode == "ir" and choice.L(cfg) == 8


def test_defaults_and_dec():
    cfg, choice = parse_config({"n": 5})
    assert cfg.kind == "field" and choice.L(cfg) is None


def test_ir_default_resolution_is_largest():
    cfg, choice = parse_config({"rate": 1, "mode": "ir"})
    assert choice.L(cfg) == 16


@pytest.mark.parametrize("data", [
    {"mode": "both"},
    {"resolution": 1},
    {"unknown": 3},
    {"extra": {"x": 1}},
    {"scenario": {"n": 3}, "coding": {"n": 4}},
    {"scenario": 5},
    {"n": "ten"},
    {"rate": 2, "mode": "ir", "resolution": 4},
])
def test_rejects(data):
    with pytest.raises(ConfigError):
        cfg, choice = parse_config(data)
        choice.L(cfg)


def test_malformed_and_missing(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("n = = 3")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
