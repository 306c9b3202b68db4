import pytest

import config
from config import RunConfig, Settings, build_run_config, load_run_config, read_cfg
from exceptions import ConfigError
from tests.conftest import CONFIG_DIR, bundled


@pytest.mark.parametrize("name", ["circular", "twopoint", "block2", "band3", "reducible"])
def test_bundled_configs_load(name):
    cfg = bundled(name)
    assert isinstance(cfg, RunConfig)
    assert cfg.sample.n == cfg.n
    assert cfg.quad.tail_mode == "extrapolate"


def test_circular_config_values():
    cfg = bundled("circular")
    assert cfg.model.K == 1
    assert cfg.grid.h == 0.05
    assert cfg.eps == (0.0, 0.1)
    assert cfg.seeds == (0, 1, 2, 3, 4)
    assert cfg.sample.seed == 0
    assert cfg.zeta == 0j
    assert "vde_exact" in cfg.acceptance["checks"]


def test_overrides_beat_file_values():
    cfg = load_run_config(
        CONFIG_DIR / "circular.cfg",
        {"run": {"n": 60, "seeds": [7]}, "sample": {"n": 60, "seed": 7},
         "grid": {"re_min": -1.0, "re_max": 1.0, "im_min": -1.0, "im_max": 1.0, "h": 0.1}},
    )
    assert cfg.n == 60
    assert cfg.sample.n == 60
    assert cfg.sample.seed == 7
    assert cfg.grid.h == 0.1


def test_config_hash_tracks_values_but_not_the_output_dir():
    base = bundled("circular")
    assert base.config_hash() == bundled("circular").config_hash()
    moved = load_run_config(CONFIG_DIR / "circular.cfg", output_dir="/tmp/elsewhere")
    assert moved.config_hash() == base.config_hash()
    changed = load_run_config(CONFIG_DIR / "circular.cfg", {"run": {"n": 101}})
    assert changed.config_hash() != base.config_hash()


def test_missing_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError) as info:
        read_cfg(tmp_path / "absent.cfg")
    assert info.value.exit_code == 2


def test_unknown_section_is_a_config_error(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("[model]\nbreakpoints = [0.0, 1.0]\n[plot]\ncolor = 1\n")
    with pytest.raises(ConfigError):
        read_cfg(path)


def test_non_json_value_is_a_config_error(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("[model]\nbreakpoints = zero to one\n")
    with pytest.raises(ConfigError):
        read_cfg(path)


def test_missing_model_section_is_a_config_error(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("[run]\nn = 10\n")
    with pytest.raises(ConfigError):
        read_cfg(path)


def test_invalid_values_are_config_errors():
    model = {"breakpoints": [0.0, 1.0], "variance": [[1.0]], "deformation_re": [0.0]}
    with pytest.raises(ConfigError):
        build_run_config({"model": model, "grid": {"re_min": 0, "re_max": 1, "im_min": 0, "im_max": 1, "h": 0.3}})
    with pytest.raises(ConfigError):
        build_run_config({"model": {**model, "variance": [[1.0, 2.0]]}})
    with pytest.raises(ConfigError):
        build_run_config({"model": model, "run": {"eta": 0.0}})
    with pytest.raises(ConfigError):
        build_run_config({"model": model, "run": {"unknown_key": 1}})


def test_settings_read_the_environment(monkeypatch):
    monkeypatch.setenv("BROWN_LOG_LEVEL", "DEBUG")
    monkeypatch.setenv("BROWN_THREADS", "3")
    settings = Settings()
    assert settings.log_level == "DEBUG"
    assert settings.threads == 3


def test_relative_config_paths_fall_back_to_the_config_dir(monkeypatch, tmp_path):
    monkeypatch.setattr(config.settings, "config_dir", str(CONFIG_DIR))
    monkeypatch.chdir(tmp_path)
    cfg = load_run_config("circular.cfg")
    assert cfg == bundled("circular")
    # a file in the working directory wins
    (tmp_path / "circular.cfg").write_text((CONFIG_DIR / "twopoint.cfg").read_text())
    assert load_run_config("circular.cfg") == bundled("twopoint")
    with pytest.raises(ConfigError):
        load_run_config("absent.cfg")
