import numpy as np
import pytest

from aforce.config import config_from_dict
from aforce.control import ActionContractError
from aforce.runner import (energy_total, run_cells, run_episode, safety_stats, tracking_error_total, write_episode_csv,
                           write_outputs)
from aforce.spatial import tracking_error_metric

from .strategies import small_config


@pytest.fixture(scope="module")
def cfg():
    return config_from_dict(small_config())


@pytest.fixture(scope="module")
def record(cfg):
    return run_episode(cfg, 0)


def test_energy_total_recomputes_from_log(record):
    manual = sum(np.abs(record.tau[i] * record.q_dot[i]).sum() for i in range(record.n_ticks)) * record.dt
    assert energy_total(record) == pytest.approx(record.energy, rel=1e-9)
    assert manual == pytest.approx(record.energy, rel=1e-9)


def test_tracking_total_recomputes_from_log(record):
    manual = sum(tracking_error_metric(e) for e in record.e) * record.dt
    assert tracking_error_total(record) == pytest.approx(record.tracking_error, rel=1e-9)
    assert manual == pytest.approx(record.tracking_error, rel=1e-9)


def test_log_shapes(record, cfg):
    assert record.n_ticks == record.action_count * cfg.ticks_per_action
    assert record.pose.shape == (record.n_ticks, 7)
    assert record.actions.shape[0] == record.action_count == len(record.observations)


def test_episode_csv_is_byte_identical_on_rerun(cfg, tmp_path):
    a, b = run_episode(cfg, 1), run_episode(cfg, 1)
    write_episode_csv(a, tmp_path / "a.csv")
    write_episode_csv(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    header = (tmp_path / "a.csv").read_text().splitlines()[0]
    assert "tau_0 [N|N*m]" in header and "reward [-]" in header


def test_different_seeds_differ(cfg):
    assert not np.array_equal(run_episode(cfg, 0).tau, run_episode(cfg, 1).tau)


def test_parallel_cells_match_serial(cfg):
    cells = [("high", 0), ("aforce+force", 1)]
    serial = run_cells(cfg, cells, workers=1)
    parallel = run_cells(cfg, cells, workers=2)
    for s, p in zip(serial, parallel):
        assert s.space == p.space and np.array_equal(s.tau, p.tau)


def test_outputs_have_manifest(cfg, tmp_path):
    import json
    write_outputs(cfg, [run_episode(cfg, 0)], tmp_path)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config_sha256"] == cfg.digest()
    assert manifest["version"]
    for name in manifest["files"]:
        assert (tmp_path / name).is_file()


def test_stiffness_action_rejected_on_aforce(cfg):
    class Bad:
        def reset(self, obs, rng=None):
            self.pose = obs.ee_pose

        def act(self, obs):
            from aforce.control import Action
            return Action(self.pose, K_d=np.full(6, 100.0))

    with pytest.raises(ActionContractError):
        run_episode(cfg, 0, "aforce", policy=Bad())


def test_blowup_is_recorded_as_failure():
    cfg = config_from_dict(small_config())
    cfg.controller.spaces["high"].stiffness = 1e7  # bypasses validation on purpose
    rec = run_episode(cfg, 0, "high")
    assert rec.failure and rec.failure.startswith("NumericalBlowup")
    assert not rec.success


def test_safety_stats():
    class R:
        def __init__(self, p):
            self.penalty_sum = p
    assert safety_stats([R(0.0), R(-1.0), R(0.0), R(-3.0)]) == (0.5, -1.0)
    with pytest.raises(ValueError):
        safety_stats([])
