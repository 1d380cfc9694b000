"""
End-to-end runs of the experiment entry points on small grids: exit codes,
artifacts, and the numbers they carry.
"""

import json
import os

import numpy as np
import pytest

from scripts.common.cli import EXIT_CONFIG, EXIT_OK
from scripts.common.csvio import read_csv, read_json
from scripts.experiments.manifold import run as manifold_run
from scripts.experiments.rates import run as rates_run
from scripts.experiments.simulate import run as simulate_run
from scripts.experiments.spectrum import run as spectrum_run
from scripts.experiments.stationary import run as stationary_run
from scripts.experiments.verify import run as verify_run

SMALL = ["--set", "geometry.nx=8", "--set", "geometry.ny=8", "--set", "output.plots=false"]
RECTANGLE = ["--set", "geometry.b=2", "--set", "geometry.nx=8", "--set", "geometry.ny=16",
             "--set", "initial.preset=constant", "--set", "output.plots=false"]


def _simulate(out, *extra):
    return simulate_run.main(["--out", str(out), "--set", "flow.dt_initial=1e-2", "--set", "flow.t_end=1",
                              "--set", "flow.record_every=5", *extra])


class TestConfigErrors:
    def test_odd_grid_exits_2(self, tmp_path, capsys):
        code = simulate_run.main(["--out", str(tmp_path), "--set", "geometry.nx=7"])
        assert code == EXIT_CONFIG
        assert "even" in capsys.readouterr().err

    def test_unknown_key_exits_2(self, tmp_path, capsys):
        code = simulate_run.main(["--out", str(tmp_path), "--set", "geometry.depth=3"])
        assert code == EXIT_CONFIG
        assert "unknown config key" in capsys.readouterr().err

    def test_missing_trajectory_exits_2(self, tmp_path):
        code = rates_run.main(["--out", str(tmp_path), "--trajectory", str(tmp_path / "absent.csv")])
        assert code == EXIT_CONFIG


class TestSimulate:
    def test_writes_artifacts(self, tmp_path):
        assert _simulate(tmp_path, "--set", "geometry.nx=8", "--set", "geometry.ny=8") == EXIT_OK
        for name in ("trajectory.csv", "final.ckpt", "stationary.ckpt", "summary.json",
                     "energy.svg", "gradient.svg", "distance.svg"):
            assert os.path.isfile(tmp_path / name), name
        summary = read_json(str(tmp_path / "summary.json"))
        assert summary["mass_max_rel_drift"] <= 1e-12
        assert summary["energy_max_rise"] <= 1e-12 * abs(summary["energy_initial"])
        assert summary["stationary"]["converged"] is True
        df = read_csv(str(tmp_path / "trajectory.csv"))
        assert df["t"].iloc[-1] == pytest.approx(1.0)
        assert np.all(np.isfinite(df["dist_l2"]))

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert _simulate(a, *SMALL) == EXIT_OK
        assert _simulate(b, *SMALL) == EXIT_OK
        assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()
        assert (a / "final.ckpt").read_bytes() == (b / "final.ckpt").read_bytes()

    def test_no_reference(self, tmp_path):
        assert _simulate(tmp_path, *SMALL, "--no-reference") == EXIT_OK
        assert not os.path.exists(tmp_path / "stationary.ckpt")
        assert read_json(str(tmp_path / "summary.json"))["stationary"] is None

    def test_sweep(self, tmp_path, capsys):
        code = _simulate(tmp_path, *SMALL, "--sweep", "model.lambda=4,8", "--workers", "2")
        assert code == EXIT_OK
        for value in ("4", "8"):
            assert os.path.isfile(tmp_path / f"model.lambda={value}" / "trajectory.csv")
        assert "sweep model.lambda over 2 values" in capsys.readouterr().err


class TestSpectrum:
    def test_constant_state_oracle(self, tmp_path):
        argv = ["--out", str(tmp_path), "--set", "geometry.nx=16", "--set", "geometry.ny=16",
                "--set", "initial.preset=constant", "--set", "spectrum.k=5", "--set", "output.plots=false"]
        assert spectrum_run.main(argv) == EXIT_OK
        doc = read_json(str(tmp_path / "spectrum.json"))
        assert doc["spectrum"]["eigenvalues"][0] == pytest.approx(4 * np.pi ** 2 - 8 * np.pi, abs=1e-6)
        assert doc["nondegeneracy"]["nondegenerate"] is True
        assert doc["m_coercivity_constant"] == pytest.approx((1 + 4 * np.pi ** 2) / (4 * np.pi ** 2 - 8 * np.pi),
                                                             rel=1e-6)
        assert len(read_csv(str(tmp_path / "eigenvalues.csv"))) == 5
        assert os.path.isfile(tmp_path / "eigen" / "field_004.ckpt")

    def test_degenerate_rectangle(self, tmp_path):
        argv = ["--out", str(tmp_path), *RECTANGLE, "--set", "model.lambda=2pi^2", "--set", "spectrum.k=6"]
        assert spectrum_run.main(argv) == EXIT_OK
        doc = read_json(str(tmp_path / "spectrum.json"))
        assert doc["nondegeneracy"]["kernel_dim"] == 2
        assert max(doc["witness_reverse_residuals"]) <= 1e-8
        assert doc["m_coercivity_constant"] is None


class TestStationary:
    def test_continuation_finds_bifurcation(self, tmp_path):
        argv = ["--out", str(tmp_path), *RECTANGLE, "--set", "model.lambda=15", "--set", "continuation.steps=10",
                "--continue-to", "25", "--probe", "3"]
        assert stationary_run.main(argv) == EXIT_OK
        doc = read_json(str(tmp_path / "stationary.json"))
        cont = doc["continuation"]
        assert cont["complete"] is True
        assert cont["constant_branch"] is True
        assert cont["bifurcation_lambdas"][0] == pytest.approx(2 * np.pi ** 2, abs=1e-6)
        assert doc["uniqueness"] == "no second solution found among 3 starts"
        lines = (tmp_path / "branch.jsonl").read_text(encoding="utf-8").splitlines()
        assert "meta" in json.loads(lines[0])
        assert len(lines) == 12


class TestManifold:
    def test_degenerate_chart(self, tmp_path):
        argv = ["--out", str(tmp_path), *RECTANGLE, "--set", "model.lambda=2pi^2",
                "--set", "manifold.samples=10", "--points", "5"]
        assert manifold_run.main(argv) == EXIT_OK
        doc = read_json(str(tmp_path / "chart.json"))
        assert doc["kernel_dim"] == 2
        assert doc["certified_radius"] > 0
        assert doc["lemma_bounds"]["samples"] + doc["lemma_bounds"]["skipped"] == 10
        assert len(read_csv(str(tmp_path / "reduced_energy.csv"))) == 25


class TestRates:
    def test_flagship_chain(self, tmp_path):
        sim = tmp_path / "sim"
        argv = ["--out", str(sim), "--set", "geometry.nx=16", "--set", "geometry.ny=16",
                "--set", "flow.dt_initial=1e-2", "--set", "flow.t_end=40", "--set", "output.plots=false"]
        assert simulate_run.main(argv) == EXIT_OK
        out = tmp_path / "rates"
        assert rates_run.main(["--out", str(out), "--trajectory", str(sim / "trajectory.csv"),
                               "--stationary", str(sim / "stationary.ckpt")]) == EXIT_OK
        doc = read_json(str(out / "rates.json"))
        assert doc["lojasiewicz"]["theta"] == pytest.approx(0.5, abs=0.05)
        assert doc["decay"]["l2"]["model"] == "exponential"
        assert doc["decay"]["l2"]["gamma"] == pytest.approx(np.pi / 2 - 1, rel=0.1)
        assert doc["classification"]["verdict"] == "consistent"
        assert doc["h_series"]["bound_holds"] is True
        assert os.path.isfile(out / "overlay.csv")
        assert os.path.isfile(out / "h_series.csv")


class TestVerify:
    def test_suite_passes(self, tmp_path, capsys):
        assert verify_run.main(["--out", str(tmp_path)]) == EXIT_OK
        doc = read_json(str(tmp_path / "verify.json"))
        assert doc["passed"] is True
        assert doc["failed"] == []
        assert "PASS" in capsys.readouterr().out
