import csv
import filecmp
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from semigreen.cli import main
from semigreen.config import ConfigError, load_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_ini(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


SOLVE_INI = """\
[domain]
dim = 1
spacing = 0.0625
bbox = 0, 1

[nonlinearity]
phi = max(t, 0)
differentiable = true

[experiment]
type = solve
boundary_f = 1
"""


class TestLoadConfig:
    def test_shipped_exhaust_config(self):
        cfg = load_config(str(CONFIGS / "thin_support.ini"))
        assert cfg.dim == 2 and cfg.halfplane
        assert cfg.radius == pytest.approx(4.0)
        assert cfg.delta == pytest.approx(0.25)
        assert cfg.anchor == pytest.approx((0.0, 0.5))
        assert cfg.exhaustion["factor"] == pytest.approx(2.0)
        assert cfg.exhaustion["stages"] == 4
        assert cfg.scheme == "newton"
        assert cfg.experiment == "exhaust"
        assert cfg.basename == "thin_support"
        exh = cfg.build_exhaustion()
        assert len(exh.stages) == 4
        assert exh.stages[-1].shape == (257, 257)

    def test_shipped_solve_config(self):
        cfg = load_config(str(CONFIGS / "cosh_benchmark.ini"))
        assert cfg.dim == 1
        assert cfg.experiment == "solve"
        grid = cfg.grid()
        assert grid.spacing[0] == pytest.approx(1 / 64)
        # phi evaluates like the expression it was parsed from
        pts = grid.nodes[:4]
        np.testing.assert_allclose(cfg.phi(pts, 2.0), 2.0)
        np.testing.assert_allclose(cfg.phi(pts, -1.0), 0.0)

    def test_defaults(self, tmp_path):
        cfg = load_config(write_ini(tmp_path, SOLVE_INI))
        assert cfg.scheme == "sandwich"
        assert cfg.tol == pytest.approx(1e-10)
        assert cfg.max_iter == 200
        assert cfg.precision == 17
        assert cfg.basename == "solve"
        assert cfg.coeffs.zero_order_mode == "c_nonpos"

    def test_fmt_honors_precision(self, tmp_path):
        ini = SOLVE_INI + "\n[output]\nprecision = 4\n"
        cfg = load_config(write_ini(tmp_path, ini))
        assert cfg.fmt(1 / 3) == "0.3333"

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config("/nonexistent/run.ini")

    def test_unknown_section(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown section"):
            load_config(write_ini(tmp_path, SOLVE_INI + "\n[turbo]\nboost = 1\n"))

    def test_missing_required_section(self, tmp_path):
        with pytest.raises(ConfigError, match="required section"):
            load_config(write_ini(tmp_path, "[domain]\ndim = 1\nspacing = 0.5\nbbox = 0, 1\n"))

    def test_phi_parse_error_names_offset(self, tmp_path):
        bad = SOLVE_INI.replace("max(t, 0)", "2*+3")
        with pytest.raises(ConfigError, match=r"\[nonlinearity\] phi.*offset"):
            load_config(write_ini(tmp_path, bad))

    def test_phi_unknown_variable(self, tmp_path):
        bad = SOLVE_INI.replace("max(t, 0)", "max(z, 0)")
        with pytest.raises(ConfigError, match="unknown identifier"):
            load_config(write_ini(tmp_path, bad))

    def test_missing_experiment_key(self, tmp_path):
        bad = SOLVE_INI.replace("boundary_f = 1\n", "")
        with pytest.raises(ConfigError, match=r"\[experiment\] boundary_f"):
            load_config(write_ini(tmp_path, bad))

    def test_bad_number(self, tmp_path):
        bad = SOLVE_INI.replace("spacing = 0.0625", "spacing = tiny")
        with pytest.raises(ConfigError, match="expected"):
            load_config(write_ini(tmp_path, bad))

    def test_bad_scheme(self, tmp_path):
        with pytest.raises(ConfigError, match=r"\[solver\] scheme"):
            load_config(write_ini(tmp_path, SOLVE_INI + "\n[solver]\nscheme = secant\n"))

    def test_precision_range(self, tmp_path):
        with pytest.raises(ConfigError, match="precision"):
            load_config(write_ini(tmp_path, SOLVE_INI + "\n[output]\nprecision = 99\n"))

    def test_degenerate_bbox(self, tmp_path):
        bad = SOLVE_INI.replace("bbox = 0, 1", "bbox = 1, 1")
        with pytest.raises(ConfigError, match="degenerate"):
            load_config(write_ini(tmp_path, bad))


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestCliSolve:
    def test_writes_solution_and_log(self, tmp_path):
        cfg = write_ini(tmp_path, SOLVE_INI)
        assert main(["solve", "--config", cfg, "--out-dir", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "solve.csv")
        assert rows[0] == ["x", "u"]
        assert len(rows) == 1 + 17  # header + nodes at h = 1/16
        log = read_csv(tmp_path / "solve_log.csv")
        assert log[0] == ["iteration", "envelope_gap", "identity_residual"]
        assert len(log) >= 2

    def test_deterministic_bytes(self, tmp_path):
        cfg = write_ini(tmp_path, SOLVE_INI)
        a, b = tmp_path / "a", tmp_path / "b"
        a.mkdir(), b.mkdir()
        assert main(["solve", "--config", cfg, "--out-dir", str(a)]) == 0
        assert main(["solve", "--config", cfg, "--out-dir", str(b)]) == 0
        assert filecmp.cmp(a / "solve.csv", b / "solve.csv", shallow=False)
        assert filecmp.cmp(a / "solve_log.csv", b / "solve_log.csv", shallow=False)

    def test_nonconvergence_exit_code(self, tmp_path):
        cfg = write_ini(tmp_path, SOLVE_INI)
        rc = main(["solve", "--config", cfg, "--out-dir", str(tmp_path),
                   "--max-iter", "1", "--tol", "1e-14"])
        assert rc == 3

    def test_missing_config_file(self, tmp_path):
        assert main(["solve", "--config", str(tmp_path / "nope.ini")]) == 2

    def test_config_required(self):
        assert main(["solve"]) == 2

    def test_wrong_experiment_type(self, tmp_path):
        cfg = write_ini(tmp_path, SOLVE_INI)
        assert main(["exhaust", "--config", cfg, "--out-dir", str(tmp_path)]) == 2

    def test_parse_error_exit(self, tmp_path, capsys):
        cfg = write_ini(tmp_path, SOLVE_INI.replace("max(t, 0)", "2*+3"))
        assert main(["solve", "--config", cfg, "--out-dir", str(tmp_path)]) == 2
        assert "parse error" in capsys.readouterr().err


EXHAUST_INI = """\
[domain]
dim = 2
spacing = 0.25
halfplane = true
radius = 2
delta = 0.25
anchor = 0, 0.5
exhaustion.factor = 2
exhaustion.stages = 2

[nonlinearity]
phi = (y > 1) * max(t, 0)
differentiable = true

[solver]
scheme = newton

[experiment]
type = exhaust
super_s = min(1, y^0.5)
"""


class TestCliExperiments:
    def test_exhaust_outputs(self, tmp_path, capsys):
        cfg = write_ini(tmp_path, EXHAUST_INI)
        assert main(["exhaust", "--config", cfg, "--out-dir", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "exhaust.csv")
        assert rows[0] == ["stage", "anchor_value", "identity_residual", "min_u", "max_u"]
        assert len(rows) == 3
        verdict = (tmp_path / "exhaust_verdict.txt").read_text()
        assert "undecided" in verdict  # two stages cannot classify
        assert "verdict=" in capsys.readouterr().out

    def test_thin_check_outputs(self, tmp_path):
        assert main(["thin-check", "--config", str(CONFIGS / "sqrt_witness.ini"),
                     "--out-dir", str(tmp_path)]) == 0
        rows = dict(read_csv(tmp_path / "sqrt_witness.csv")[1:])
        assert rows["passed"] == "true"
        assert float(rows["margin"]) > 0

    def test_criterion_outputs(self, tmp_path):
        assert main(["criterion", "--config", str(CONFIGS / "strip_criterion.ini"),
                     "--out-dir", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "strip_criterion.csv")
        assert rows[0] == ["radius", "value", "increment", "ratio"]
        assert len(rows) == 5
        values = [float(r[1]) for r in rows[1:]]
        assert values == sorted(values)

    def test_green_interval(self, tmp_path, capsys):
        assert main(["green", "--config", str(CONFIGS / "green_interval.ini"),
                     "--out-dir", str(tmp_path), "--compare"]) == 0
        rows = read_csv(tmp_path / "green_interval.csv")
        assert rows[0] == ["x", "discrete", "analytic", "abs_error"]
        worst = max(float(r[3]) for r in rows[1:])
        assert worst <= 1e-12
        assert "max_abs_error" in capsys.readouterr().out

    def test_verify_without_config(self, tmp_path, capsys):
        assert main(["verify", "--out-dir", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "verify.csv")
        assert rows[0] == ["suite", "trials", "failures", "status"]
        assert all(r[3] == "pass" for r in rows[1:])
        assert len(rows) >= 8  # seven suites plus header
        out = capsys.readouterr().out
        assert "pass" in out

    def test_console_entry_point(self, tmp_path):
        cfg = write_ini(tmp_path, SOLVE_INI)
        proc = subprocess.run(
            [sys.executable, "-m", "semigreen.cli", "solve",
             "--config", cfg, "--out-dir", str(tmp_path)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "status=converged" in proc.stdout
