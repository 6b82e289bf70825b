import pytest

from fiml.closure import SAConstants
from fiml.config import RunConfig
from fiml.errors import ConfigurationError


def test_defaults_round_trip(tmp_path):
    cfg = RunConfig()
    p = cfg.save(tmp_path / "c.toml")
    again = RunConfig.load(p)
    assert again.to_dict() == cfg.to_dict()
    assert again.dumps() == cfg.dumps()


def test_unknown_keys_all_listed():
    with pytest.raises(ConfigurationError) as exc:
        RunConfig.from_dict({"case": {"n": 64, "bogus": 1}, "sa": {"cw9": 1.0}, "extra": {}})
    msg = str(exc.value)
    assert "case.bogus" in msg and "sa.cw9" in msg and "extra" in msg


def test_type_errors():
    with pytest.raises(ConfigurationError, match="case.n"):
        RunConfig.from_dict({"case": {"n": 64.5}})
    with pytest.raises(ConfigurationError, match="case.full_channel"):
        RunConfig.from_dict({"case": {"full_channel": 1}})
    with pytest.raises(ConfigurationError, match="must be a table"):
        RunConfig.from_dict({"case": 3})


def test_value_errors_surface_at_load():
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict({"case": {"re_tau": -1.0}})
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict({"inversion": {"observation": "drag"}})
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict({"train": {"features": ["chi", "nope"]}})
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict({"train": {"algorithm": "adam"}})


def test_views():
    cfg = RunConfig.from_dict({"case": {"re_tau": 395.0, "n": 64}, "sa": {"cw2": 0.3},
                               "inversion": {"lam": 4e-3}, "train": {"hidden": [5, 5]}})
    case = cfg.case_config()
    assert case.re_tau == 395.0 and case.sa == SAConstants(cw2=0.3)
    assert cfg.case_config(re_tau=1000.0).re_tau == 1000.0
    assert cfg.inversion_config().lam == 4e-3
    assert cfg.train_config().hidden == (5, 5)
    assert cfg.with_label("x").run.label == "x"
    assert cfg.family().amplitude == 0.3


def test_malformed_toml(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[case\nn = 3\n")
    with pytest.raises(ConfigurationError):
        RunConfig.load(p)
    with pytest.raises(ConfigurationError):
        RunConfig.load(tmp_path / "missing.toml")
