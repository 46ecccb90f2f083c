"""CLI behavior: subcommands, artifacts, exit codes, determinism."""

from pathlib import Path

import pytest

from hawkes_reinsurance.cli import main
from hawkes_reinsurance.config import load_config, parse_contract_spec
from hawkes_reinsurance.errors import ConfigError

GOOD_CONFIG = """\
hawkes:
  lambda0: 1.0
  lambda_bar: 1.0
  beta: 2.0
  impact: {kind: linear, value: 0.5}
marks:
  family: exponential
  mean: 1.0
economic:
  r0: 10.0
  rho: 1.2
  c: 2.0
  gamma: 0.8
  horizon: 5.0
contract:
  shape: deductible
  a: 1.0
run:
  seed: 7
  n_paths: 4000
  grid_points: 60
  qp_atoms: 150
  lambda_grid: [0.5, 0.2, 0.05]
"""


@pytest.fixture()
def config_path(tmp_path) -> Path:
    p = tmp_path / "scenario.yaml"
    p.write_text(GOOD_CONFIG)
    return p


def _outdir(tmp_path) -> Path:
    return tmp_path / "out"


def _assert_csv(path: Path, sha: str):
    assert path.exists(), path
    lines = path.read_text().splitlines()
    assert lines[0] == f"# config_sha256={sha}"
    assert "," in lines[1]  # header row


class TestSubcommands:
    def test_simulate(self, config_path, tmp_path):
        out = _outdir(tmp_path)
        rc = main(["simulate", str(config_path), "--paths", "500",
                   "--output-dir", str(out), "--dump-events"])
        assert rc == 0
        sha = load_config(config_path).sha256
        _assert_csv(out / "simulate_summary.csv", sha)
        _assert_csv(out / "events.csv", sha)
        assert (out / "simulate.png").exists()

    def test_moments(self, config_path, tmp_path):
        out = _outdir(tmp_path)
        assert main(["moments", str(config_path), "--grid", "40",
                     "--output-dir", str(out)]) == 0
        sha = load_config(config_path).sha256
        _assert_csv(out / "moments_grid.csv", sha)
        _assert_csv(out / "moments_summary.csv", sha)
        assert (out / "moments.png").exists()
        grid = (out / "moments_grid.csv").read_text().splitlines()
        assert grid[1] == "t,m,m2,M"
        assert len(grid) == 2 + 41

    def test_evaluate_full_contract_exact(self, config_path, tmp_path, capsys):
        out = _outdir(tmp_path)
        rc = main(["evaluate", str(config_path), "--contract", "full",
                   "--paths", "0", "--output-dir", str(out)])
        assert rc == 0
        report = (out / "evaluate_report.csv").read_text().splitlines()
        utility_row = next(l for l in report if l.startswith("utility,"))
        # R0 + (rho - c) * mean * T = 10 + (1.2 - 2) * 5 = 6.
        assert float(utility_row.split(",")[1]) == 6.0
        assert (out / "contract_curve.csv").exists()
        assert (out / "evaluate.png").exists()

    def test_evaluate_with_mc(self, config_path, tmp_path):
        out = _outdir(tmp_path)
        assert main(["evaluate", str(config_path), "--paths", "2000",
                     "--output-dir", str(out)]) == 0

    def test_optimize(self, config_path, tmp_path):
        out = _outdir(tmp_path)
        assert main(["optimize", str(config_path), "--output-dir", str(out)]) == 0
        sha = load_config(config_path).sha256
        _assert_csv(out / "optimal_contract.csv", sha)
        _assert_csv(out / "optimal_curve.csv", sha)
        assert (out / "optimize.png").exists()

    def test_sweep(self, config_path, tmp_path):
        out = _outdir(tmp_path)
        assert main(["sweep", str(config_path), "--output-dir", str(out)]) == 0
        _assert_csv(out / "sweep.csv", load_config(config_path).sha256)
        assert (out / "sweep.png").exists()

    def test_validate_fast(self, config_path, tmp_path):
        out = _outdir(tmp_path)
        assert main(["validate", str(config_path), "--fast",
                     "--output-dir", str(out)]) == 0
        _assert_csv(out / "validate_report.csv", load_config(config_path).sha256)


class TestExitCodes:
    def test_cheap_reinsurance_is_config_error(self, tmp_path):
        p = tmp_path / "cheap.yaml"
        p.write_text(GOOD_CONFIG.replace("c: 2.0", "c: 1.0"))
        assert main(["optimize", str(p)]) == 2

    def test_broken_yaml(self, tmp_path):
        p = tmp_path / "broken.yaml"
        p.write_text("hawkes: [unclosed")
        assert main(["moments", str(p)]) == 2

    def test_missing_section(self, tmp_path):
        p = tmp_path / "missing.yaml"
        p.write_text("marks: {family: exponential, mean: 1.0}\n")
        assert main(["moments", str(p)]) == 2

    def test_seed_required_for_stochastic(self, tmp_path):
        p = tmp_path / "noseed.yaml"
        p.write_text(GOOD_CONFIG.replace("  seed: 7\n", ""))
        assert main(["simulate", str(p)]) == 2

    def test_non_ergodic_config(self, tmp_path):
        p = tmp_path / "explosive.yaml"
        p.write_text(GOOD_CONFIG.replace("value: 0.5", "value: 2.5"))
        assert main(["moments", str(p)]) == 2


class TestDeterminism:
    def test_repeated_runs_byte_identical(self, config_path, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            assert main(["evaluate", str(config_path), "--paths", "1500",
                         "--output-dir", str(out)]) == 0
        for name in ("evaluate_report.csv", "contract_curve.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


class TestConfigParsing:
    def test_line_attributed_error(self, tmp_path):
        p = tmp_path / "badgamma.yaml"
        p.write_text(GOOD_CONFIG.replace("gamma: 0.8", "gamma: bad"))
        with pytest.raises(ConfigError, match=r"badgamma\.yaml:\d+: economic\.gamma"):
            load_config(p)

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "extra.yaml"
        p.write_text(GOOD_CONFIG + "\nextra_section: {}\n")
        with pytest.raises(ConfigError, match="unknown top-level"):
            load_config(p)

    def test_contract_spec_shorthand(self):
        c = parse_contract_spec("three_piece:a=1,b=3")
        assert c(2.0) == pytest.approx(1.5)
        assert parse_contract_spec("full")(3.0) == 3.0
        with pytest.raises(ConfigError):
            parse_contract_spec("nonsense:x=1")
        with pytest.raises(ConfigError):
            parse_contract_spec("deductible:b=1")

    def test_config_hash_stable(self, config_path):
        assert load_config(config_path).sha256 == load_config(config_path).sha256
