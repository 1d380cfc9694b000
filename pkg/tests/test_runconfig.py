"""
Tests for run configuration: value parsing, source precedence, hashing and
validation.
"""

from pathlib import Path

import numpy as np
import pytest

from scripts.common.errors import ConfigError
from scripts.common.initial import InitialSpec, initial_potential, parse_modes
from scripts.common.runconfig import (
    config_hash,
    default_outdir,
    env_overrides,
    load_run_config,
    parse_lambda,
    parse_sweep,
    read_config_file,
    resolve,
)


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(
        "# flagship-like run\n"
        "[geometry]\n"
        "nx = 32\n"
        "ny = 32\n"
        "[model]\n"
        "lambda = 8pi\n"
        "[flow]\n"
        "t_end = 5\n"
        "scheme = semi_implicit\n"
        "dt_initial = 1e-2\n",
        encoding="utf-8",
    )
    return str(path)


class TestParseLambda:
    @pytest.mark.parametrize("text,expected", [
        ("8pi", 8 * np.pi),
        ("8*pi", 8 * np.pi),
        ("2pi^2", 2 * np.pi ** 2),
        ("pi", np.pi),
        ("25.5", 25.5),
        (3, 3.0),
    ])
    def test_values(self, text, expected):
        assert parse_lambda(text) == pytest.approx(expected)

    def test_garbage(self):
        with pytest.raises(ConfigError, match="lambda"):
            parse_lambda("eight pi")


class TestSources:
    def test_read_config_file(self, config_file):
        raw = read_config_file(config_file)
        assert raw["geometry.nx"] == "32"
        assert raw["model.lambda"] == "8pi"
        assert raw["flow.scheme"] == "semi_implicit"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            read_config_file(str(tmp_path / "absent.ini"))

    def test_env_overrides(self):
        env = {"TORUSLAB_FLOW_T_END": "7", "TORUSLAB_OUTDIR": "/tmp/x", "TORUSLAB_BOGUS_KEY": "1", "HOME": "/root"}
        assert env_overrides(env) == {"flow.t_end": "7"}

    def test_precedence(self, config_file):
        """defaults < file < environment < --set < --seed."""
        env = {"TORUSLAB_FLOW_T_END": "7", "TORUSLAB_GEOMETRY_NX": "16"}
        cfg = load_run_config(config_file, assignments=["geometry.nx=8", "initial.seed=4"], seed=9, environ=env)
        assert cfg.grid.nx == 8
        assert cfg.grid.ny == 32
        assert cfg.flow.t_end == 7.0
        assert cfg.flow.scheme == "semi_implicit"
        assert cfg.initial.seed == 9
        assert cfg.lam == pytest.approx(8 * np.pi)
        assert cfg.get("solver.tol") == 1e-11

    def test_shipped_flagship_config(self):
        """The flagship config runs backward Euler on 64x64 at the unit-square critical mass."""
        path = Path(__file__).resolve().parent.parent / "configs" / "flagship.ini"
        cfg = load_run_config(str(path), environ={})
        assert cfg.flow.scheme == "semi_implicit"
        assert cfg.flow.dt_initial < 1.0
        assert (cfg.grid.nx, cfg.grid.ny) == (64, 64)
        assert cfg.lam == pytest.approx(8 * np.pi)


class TestResolve:
    def test_defaults(self):
        cfg = resolve({})
        assert cfg.grid.shape == (64, 64)
        assert cfg.lam == pytest.approx(8 * np.pi)
        assert cfg.warnings() == []

    @pytest.mark.parametrize("raw,match", [
        ({"geometry.nx": "7"}, "even"),
        ({"geometry.nx": "8.5"}, "geometry.nx"),
        ({"model.lambda": "-1"}, "model.lambda"),
        ({"flow.renormalize_mass": "maybe"}, "flow.renormalize_mass"),
        ({"spectrum.operator": "Q"}, "spectrum.operator"),
        ({"rates.grad_lo": "1e-2", "rates.grad_hi": "1e-3"}, "rates window"),
        ({"initial.modes": "cos:1"}, "invalid mode"),
        ({"colour": "blue"}, "unknown config key"),
    ])
    def test_rejects(self, raw, match):
        with pytest.raises(ConfigError, match=match):
            resolve(raw)

    def test_supercritical_lambda_warns(self):
        assert "8*pi" in resolve({"model.lambda": "30"}).warnings()[0]

    def test_optional_values(self):
        cfg = resolve({"continuation.lambda_end": "2pi^2", "flow.h_theta": "none"})
        assert cfg.get("continuation.lambda_end") == pytest.approx(2 * np.pi ** 2)
        assert cfg.flow.h_theta is None

    def test_with_values(self):
        cfg = resolve({"geometry.nx": "16"}).with_values({"model.lambda": "20"})
        assert cfg.lam == 20.0
        assert cfg.grid.nx == 16


class TestHashAndSweep:
    def test_hash_is_stable_and_sensitive(self):
        a = resolve({"geometry.nx": "16"})
        assert a.config_hash == resolve({"geometry.nx": "16"}).config_hash
        assert a.config_hash != resolve({"geometry.nx": "32"}).config_hash
        assert len(a.config_hash) == 16
        assert config_hash({"x": 1, "y": 2}) == config_hash({"y": 2, "x": 1})

    def test_parse_sweep(self):
        assert parse_sweep("model.lambda=20, 25,30") == ("model.lambda", ["20", "25", "30"])

    @pytest.mark.parametrize("text", ["nonsense=1,2", "model.lambda=", "model.lambda"])
    def test_parse_sweep_rejects(self, text):
        with pytest.raises(ConfigError):
            parse_sweep(text)

    def test_default_outdir(self):
        path = default_outdir("simulate", environ={"TORUSLAB_OUTDIR": "/data/runs"})
        assert path.startswith("/data/runs/simulate_")


class TestInitialData:
    def test_parse_modes(self):
        assert parse_modes("cos:1:0:0.1, sin:0:-2:0.05") == (("cos", 1, 0, 0.1), ("sin", 0, -2, 0.05))
        assert parse_modes("") == ()

    def test_unresolved_mode(self, grid8):
        spec = InitialSpec(preset="modes", modes=(("cos", 4, 0, 1.0),))
        with pytest.raises(ConfigError, match="not resolved"):
            initial_potential(grid8, spec)

    def test_potential_is_zero_mean(self, grid16):
        spec = InitialSpec(preset="constant+cos_x+sin_y", amplitude=0.2, noise_amplitude=0.05, seed=1)
        v = initial_potential(grid16, spec)
        assert abs(np.mean(v)) < 1e-15
        np.testing.assert_array_equal(v, initial_potential(grid16, spec))

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="initial.preset"):
            InitialSpec(preset="gaussian")
