import numpy as np
import pytest
import yaml

from aforce.config import ConfigError, config_from_dict, dump_config, load_config

from .conftest import CONFIGS
from .strategies import small_config


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.name)
def test_shipped_configs_load(path):
    load_config(path)


def test_defaults_are_valid():
    cfg = config_from_dict({})
    assert cfg.dt == 1e-3 and cfg.ticks_per_action == 50


def test_round_trip_is_exact(tmp_path):
    cfg = config_from_dict(small_config(**{"runner.seeds": [4, 2]}))
    dump_config(cfg, tmp_path / "a.yaml")
    again = load_config(tmp_path / "a.yaml")
    assert again.to_dict() == cfg.to_dict()
    assert again.digest() == cfg.digest()
    dump_config(again, tmp_path / "b.yaml")
    assert (tmp_path / "a.yaml").read_bytes() == (tmp_path / "b.yaml").read_bytes()


def _errors(raw):
    with pytest.raises(ConfigError) as info:
        config_from_dict(raw)
    return info.value.errors


def test_unknown_keys_are_reported_with_paths():
    errs = _errors({"plant": {"mas": 1.0}, "bogus": {}, "controller": {"aforce": {"betta": 1.0}}})
    assert "plant.mas: unknown key" in errs
    assert "bogus: unknown section" in errs
    assert "controller.aforce.betta: unknown key" in errs


def test_all_errors_reported_together():
    errs = _errors({"plant": {"mass": -1.0}, "bridge": {"control_rate": 1000.0, "policy_rate": 30.0}})
    assert any(e.startswith("plant.mass") for e in errs)
    assert any(e.startswith("bridge") for e in errs)


@pytest.mark.parametrize("path,value,prefix", [
    ("plant.model", "scara", "plant.model"),
    ("surface.k_n", 1e6, "surface"),
    ("controller.aforce.k_min", 5000.0, "controller.aforce"),
    ("controller.aforce.beta", [1.0, 2.0], "controller.aforce.beta"),
    ("runner.space", "nope", "runner.space"),
    ("task.kind", "door", "task.kind"),
    ("policy.kind", "sac", "policy.kind"),
    ("plant.link_inertias", [0.1], "plant.link_inertias"),
])
def test_error_paths(path, value, prefix):
    raw = small_config(**{path: value})
    if path == "plant.link_inertias":
        raw["plant"]["model"] = "planar"
        raw["runner"]["compare"] = []
    assert any(e.startswith(prefix) for e in _errors(raw)), _errors(raw)


def test_damping_step_bound_rejects_stiff_light_axes():
    errs = _errors(small_config(**{"plant.inertia": 0.005}))
    assert any("damping step" in e for e in errs)


def test_only_used_spaces_are_checked_for_damping():
    raw = small_config(**{"plant.inertia": 0.02, "controller.aforce.k_max": [2000, 2000, 2000, 100, 100, 100],
                          "controller.spaces": {"soft": {"kind": "fixed", "stiffness": [2000, 2000, 2000, 50, 50, 50]}},
                          "runner.compare": ["soft", "aforce+force"]})
    config_from_dict(raw)


def test_yaml_syntax_error_and_missing_file(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("plant: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yaml")


def test_space_vectors_and_planar_dimensions():
    raw = yaml.safe_load((CONFIGS / "planar_wipe.yaml").read_text())
    cfg = config_from_dict(raw)
    assert cfg.task_dim == 3
    sp = cfg.build_space("aforce+force")
    assert sp.stiffness.shape == (3,)
    assert np.allclose(cfg.build_psi().k_max, [2000.0, 2000.0, 20.0])
