import json

import numpy as np
import pytest

from swarmherd import DensityField, GridSpec, ScalarField, VectorField, mass
from swarmherd.config import ConfigError, ExperimentConfig
from swarmherd.fileio import (
    read_field,
    read_trajectory,
    write_field,
    write_metrics,
    write_sweep_csv,
    write_trajectory,
)

PI = np.pi


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------


def test_default_config_round_trip(tmp_path):
    cfg = ExperimentConfig()
    path = tmp_path / "cfg.json"
    cfg.save(path)
    loaded = ExperimentConfig.load(path)
    assert loaded == cfg
    assert loaded.hash() == cfg.hash()


def test_config_from_partial_dict_uses_defaults():
    cfg = ExperimentConfig.from_dict({"sim": {"diffusion": 0.05}, "gain": 2.0})
    assert cfg.sim.diffusion == 0.05
    assert cfg.sim.dt == 0.01
    assert cfg.gain == 2.0
    assert cfg.population.n_targets == 720


def test_unknown_top_level_key_rejected():
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentConfig.from_dict({"simm": {}})


def test_unknown_section_key_rejected():
    with pytest.raises(ConfigError, match="diffusionn"):
        ExperimentConfig.from_dict({"sim": {"diffusionn": 0.01}})


def test_invalid_values_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"sim": {"dt": -0.01}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"kernel": {"length": 0.0}})
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"gain": 0.0})


def test_hash_tracks_content():
    a = ExperimentConfig()
    b = ExperimentConfig.from_dict({"sim": {"seed": 1}})
    assert a.hash() != b.hash()


def test_concentration_default_follows_goal():
    cfg = ExperimentConfig.from_dict({"goal": {"radius": 1.0}})
    assert cfg.concentration() == pytest.approx(3.0)
    cfg2 = ExperimentConfig.from_dict({"target_density": {"concentration": 2.5}})
    assert cfg2.concentration() == 2.5


def test_malformed_json_reported(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="JSON"):
        ExperimentConfig.load(p)


# ---------------------------------------------------------------------------
# field files
# ---------------------------------------------------------------------------


def test_scalar_field_round_trip(tmp_path):
    g = GridSpec(16)
    rng = np.random.default_rng(0)
    f = ScalarField(g, rng.standard_normal((16, 16)))
    path = tmp_path / "f.field"
    write_field(path, f, "scalar", {"config_sha256": "abc", "seed": 3})
    back, header = read_field(path)
    assert isinstance(back, ScalarField)
    np.testing.assert_array_equal(back.values, f.values)  # 17 digits: exact
    assert header["kind"] == "scalar"
    assert int(header["m"]) == 16


def test_density_field_round_trip_and_header(tmp_path):
    g = GridSpec(25)
    f = DensityField(g, np.full((25, 25), 0.3))
    path = tmp_path / "rho.field"
    write_field(path, f, "density", {"seed": 0})
    back, header = read_field(path)
    assert isinstance(back, DensityField)
    assert mass(back) == pytest.approx(mass(f))
    text = path.read_text()
    assert text.startswith("# swarmherd")
    assert "seed=0" in text


def test_vector_field_round_trip(tmp_path):
    g = GridSpec(16)
    rng = np.random.default_rng(1)
    f = VectorField(g, rng.standard_normal((16, 16, 2)))
    path = tmp_path / "v.field"
    write_field(path, f, "vector")
    back, header = read_field(path)
    assert isinstance(back, VectorField)
    np.testing.assert_array_equal(back.values, f.values)
    assert int(header["components"]) == 2


def test_field_reader_validates(tmp_path):
    p = tmp_path / "bad.field"
    p.write_text("m=4\nkind=scalar\ncomponents=1\n1 2 3 4\n")
    with pytest.raises(ValueError, match="rows"):
        read_field(p)


# ---------------------------------------------------------------------------
# trajectories and metrics
# ---------------------------------------------------------------------------


def test_trajectory_round_trip_exact(tmp_path):
    rng = np.random.default_rng(2)
    snaps = [
        (0.0, rng.uniform(-PI, PI, (3, 2)), rng.uniform(-PI, PI, (5, 2))),
        (1.5, rng.uniform(-PI, PI, (3, 2)), rng.uniform(-PI, PI, (5, 2))),
    ]
    path = tmp_path / "traj.csv"
    write_trajectory(path, snaps, {"seed": 9})
    frames = read_trajectory(path)
    assert len(frames) == 2
    for (t0, h0, g0), (t1, h1, g1) in zip(snaps, frames):
        assert t0 == t1
        np.testing.assert_array_equal(h0, h1)  # bit-exact via repr digits
        np.testing.assert_array_equal(g0, g1)


def test_trajectory_scaling(tmp_path):
    snaps = [(0.0, np.array([[PI, 0.0]]), np.array([[0.0, -PI / 2]]))]
    path = tmp_path / "traj.csv"
    write_trajectory(path, snaps, scale=1.0 / PI)
    frames = read_trajectory(path)
    np.testing.assert_allclose(frames[0][1], [[1.0, 0.0]])
    np.testing.assert_allclose(frames[0][2], [[0.0, -0.5]])


def test_trajectory_reader_rejects_garbage(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,agent_kind,agent_id,x1,x2\n0.0,herder,zero,1,2\n")
    with pytest.raises(ValueError, match="bad.csv:2"):
        read_trajectory(p)


def test_metrics_file_shape(tmp_path):
    path = tmp_path / "metrics.csv"
    write_metrics(path, [0.0, 1.0], [10.0, 20.0], [1, 2], [np.nan, 0.5],
                  {"seed": 1})
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    assert lines[0] == "t,chi,n_inside,herder_error_l2"
    assert lines[1].endswith(",")  # nan herder error serialized as empty
    assert "0.5" in lines[2]


def test_sweep_csv_layout(tmp_path):
    path = tmp_path / "map.csv"
    write_sweep_csv(path, [1.0, 2.0], [0.01], np.array([[0.1, 0.2]]))
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    assert lines[0].split(",")[0] == "D\\k"
    assert len(lines) == 2
