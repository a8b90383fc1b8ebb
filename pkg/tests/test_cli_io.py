import json
import os
import subprocess
import sys

import numpy as np
import pytest

import pkam
from pkam.cli import main as cli_main
from pkam.config import run_config
from pkam.errors import ConfigError, FrequencyRejected, SchemaError
from pkam.fourier import TorusEmbedding
from pkam.torus_io import load_torus, save_torus

from conftest import GOLDEN, SQRT2M1


def make_torus(seed=0, truncation=(6, 6)):
    rng = np.random.default_rng(seed)
    K = TorusEmbedding.flat(1, 1, truncation, y0=[0.4], rho=2e-3)
    center = np.array(truncation)
    for _ in range(12):
        k = np.array([rng.integers(-N, N + 1) for N in truncation])
        c = (rng.normal(size=3) + 1j * rng.normal(size=3)) * 0.1
        if not k.any():
            c = c.real.astype(complex)
        K.periodic.coeffs[tuple(center + k)] += c
        K.periodic.coeffs[tuple(center - k)] += np.conj(c)
    return K


MINIMAL_TOML = f"""
[family]
name = "coupled_standard"
strength = 0.3
coupling = 0.1
drift = {float(SQRT2M1)!r}

[frequency]
omega = [{float(GOLDEN)!r}, {float(SQRT2M1)!r}]
"""

FULL_TOML = MINIMAL_TOML + """
sigma = 2.0
scan_radius = 64

[solver]
truncation = [24, 24]
rho0 = 1e-3
max_iterations = 10
target_error = 1e-10

[initial]
torus = "flat"
y0 = [0.6180339887498949]
"""


class TestTorusFiles:
    def test_round_trip_bit_exact(self, tmp_path):
        K = make_torus()
        path = tmp_path / "t.json"
        save_torus(K, path)
        back = load_torus(path)
        assert back.d == K.d and back.n == K.n and back.rho == K.rho
        assert np.array_equal(back.periodic.coeffs, K.periodic.coeffs)

    def test_hermitian_violation_rejected(self, tmp_path):
        K = make_torus()
        path = tmp_path / "t.json"
        save_torus(K, path)
        payload = json.loads(path.read_text())
        entry = next(e for e in payload["coeffs"] if any(e["k"]))
        bad = dict(entry)
        bad["k"] = [-k for k in entry["k"]]
        bad["im"] = [v + 1e-3 for v in bad["im"]]     # not the conjugate
        payload["coeffs"].append(bad)
        path.write_text(json.dumps(payload))
        with pytest.raises(SchemaError):
            load_torus(path)

    def test_nonreal_zero_mode_rejected(self, tmp_path):
        path = tmp_path / "t.json"
        payload = {"d": 1, "n": 1, "truncation": [2, 2], "rho": 0.0,
                   "winding_convention": "angle-identity",
                   "coeffs": [{"k": [0, 0], "re": [0.0, 0.1, 0.0],
                               "im": [0.0, 0.2, 0.0]}]}
        path.write_text(json.dumps(payload))
        with pytest.raises(SchemaError):
            load_torus(path)

    def test_duplicate_mode_rejected(self, tmp_path):
        path = tmp_path / "t.json"
        payload = {"d": 1, "n": 1, "truncation": [2, 2], "rho": 0.0,
                   "winding_convention": "angle-identity",
                   "coeffs": [{"k": [1, 0], "re": [0.1, 0.0, 0.0], "im": [0.0] * 3},
                              {"k": [1, 0], "re": [0.2, 0.0, 0.0], "im": [0.0] * 3}]}
        path.write_text(json.dumps(payload))
        with pytest.raises(SchemaError):
            load_torus(path)

    def test_missing_rho_defaults_with_warning(self, tmp_path):
        K = make_torus()
        path = tmp_path / "t.json"
        save_torus(K, path)
        payload = json.loads(path.read_text())
        del payload["rho"]
        path.write_text(json.dumps(payload))
        with pytest.warns(UserWarning):
            back = load_torus(path)
        assert back.rho == 0.0

    def test_dimension_mismatch(self, tmp_path):
        path = tmp_path / "t.json"
        payload = {"d": 1, "n": 1, "truncation": [2, 2], "rho": 0.0,
                   "winding_convention": "angle-identity",
                   "coeffs": [{"k": [1, 0], "re": [0.1, 0.0], "im": [0.0, 0.0]}]}
        path.write_text(json.dumps(payload))
        with pytest.raises(pkam.errors.DimensionMismatch):
            load_torus(path)


class TestRunConfig:
    def test_minimal_config_defaults_echoed(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text(MINIMAL_TOML)
        setup = run_config(path)
        assert setup.family.name == "coupled_standard"
        assert setup.config.max_iterations == 20
        assert setup.truncation == (32, 32)
        echo = json.loads(setup.echo_json())
        assert echo["solver"]["target_error"] == 1e-12
        assert echo["frequency"]["sigma"] == 2.0
        assert echo["initial"]["torus"] == "flat"

    def test_full_config(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text(FULL_TOML)
        setup = run_config(path)
        assert setup.truncation == (24, 24)
        assert setup.initial.truncation == (24, 24)
        assert setup.config.target_error == 1e-10

    def test_inadmissible_sigma(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text(MINIMAL_TOML + "\nsigma = 1.5\n")
        with pytest.raises(ConfigError, match="at least d\\+n"):
            run_config(path)

    def test_rational_omega_rejected_at_load(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text(MINIMAL_TOML.replace(repr(float(GOLDEN)), "0.5", 1))
        with pytest.raises(FrequencyRejected):
            run_config(path)

    def test_initial_torus_from_file(self, tmp_path):
        K = make_torus(truncation=(24, 24))
        torus_path = tmp_path / "start.json"
        save_torus(K, torus_path)
        path = tmp_path / "run.toml"
        path.write_text(FULL_TOML.replace('torus = "flat"', f'torus = "{torus_path}"'))
        setup = run_config(path)
        assert np.array_equal(setup.initial.periodic.coeffs, K.periodic.coeffs)


class TestCli:
    def run_cli(self, args):
        return cli_main(args)

    def test_solve_writes_outputs(self, tmp_path, capsys):
        cfg = tmp_path / "run.toml"
        cfg.write_text(FULL_TOML)
        out = tmp_path / "torus.json"
        log = tmp_path / "run.csv"
        code = self.run_cli(["solve", "--config", str(cfg), "--out", str(out),
                             "--log", str(log)])
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["converged"] is True
        K = load_torus(out)
        assert K.truncation == (24, 24)
        lines = log.read_text().splitlines()
        assert lines[0].startswith("# pkam run config:")
        assert lines[1].split(",")[0] == "iter"
        assert len(lines) >= 3

    def test_frame_log_columns(self, tmp_path, capsys):
        cfg = tmp_path / "run.toml"
        cfg.write_text(FULL_TOML)
        flog = tmp_path / "frames.csv"
        code = self.run_cli(["solve", "--config", str(cfg), "--frame-log", str(flog)])
        assert code == 0
        capsys.readouterr()
        lines = flog.read_text().splitlines()
        assert lines[0] == ("iter,cond_M,cond_V,qm_residual,rank_avg_lambda,"
                            "sigma_min_avg_lambda,det_avg_S,max_offpattern_block")
        assert len(lines) >= 2

    def test_diagnose_frequency(self, tmp_path, capsys):
        cfg = tmp_path / "run.toml"
        cfg.write_text(FULL_TOML)
        code = self.run_cli(["diagnose", "--config", str(cfg), "--frequency"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["frequency"]["gamma"] > 0
        assert report["frequency"]["sigma"] == 2.0

    def test_verify_subcommand(self, tmp_path, capsys):
        cfg = tmp_path / "run.toml"
        cfg.write_text(FULL_TOML)
        out = tmp_path / "torus.json"
        assert self.run_cli(["solve", "--config", str(cfg), "--out", str(out)]) == 0
        solved = json.loads(capsys.readouterr().out)
        code = self.run_cli(["verify", "--config", str(cfg), "--torus", str(out),
                             "--lam", json.dumps(solved["lambda"]),
                             "--orbit-steps", "200"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["error_grid_sup"] <= 1e-9
        assert report["offgrid_residual"] <= 1e-9
        assert report["presymplectic_check"]["passed"] is True

    def test_align_subcommand(self, tmp_path, capsys):
        cfg = tmp_path / "run.toml"
        cfg.write_text(FULL_TOML)
        out_a = tmp_path / "a.json"
        assert self.run_cli(["solve", "--config", str(cfg), "--out", str(out_a)]) == 0
        capsys.readouterr()
        K = load_torus(out_a)
        out_b = tmp_path / "b.json"
        save_torus(K.shift(np.array([0.006, -0.002])), out_b)
        code = self.run_cli(["align", "--a", str(out_a), "--b", str(out_b)])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert abs(report["tau"][0] - 0.006) <= 1e-9
        assert abs(report["tau"][1] + 0.002) <= 1e-9

    def test_continue_subcommand(self, tmp_path, capsys):
        cfg = tmp_path / "sweep.toml"
        cfg.write_text(FULL_TOML + """
[continuation]
knob = "strength"
values = [0.1, 0.3]
""")
        prefix = str(tmp_path / "stage")
        code = self.run_cli(["continue", "--config", str(cfg), "--out-prefix", prefix])
        assert code == 0
        rows = json.loads(capsys.readouterr().out)
        assert [r["converged"] for r in rows] == [True, True]
        assert os.path.exists(prefix + "000.json")
        assert os.path.exists(prefix + "001.json")

    def test_solve_exit_code_on_no_convergence(self, tmp_path, capsys):
        cfg = tmp_path / "run.toml"
        cfg.write_text(FULL_TOML.replace("strength = 0.3", "strength = 1.4"))
        code = self.run_cli(["solve", "--config", str(cfg)])
        assert code == 2

    def test_deterministic_csv_in_subprocess(self, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text(FULL_TOML)
        logs = []
        for name in ("a.csv", "b.csv"):
            log = tmp_path / name
            env = dict(os.environ, PKAM_THREADS="1")
            proc = subprocess.run(
                [sys.executable, "-m", "pkam.cli", "solve", "--config", str(cfg),
                 "--log", str(log)],
                capture_output=True, env=env, cwd=str(tmp_path),
            )
            assert proc.returncode == 0, proc.stderr.decode()
            logs.append(log.read_bytes())
        assert logs[0] == logs[1]
