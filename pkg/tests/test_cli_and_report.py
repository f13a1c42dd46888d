import json

from msfsim.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, main
from msfsim.harness import load_log
from msfsim.report import save_report


def write_mini_config(tmp_path, **extra):
    data = {
        "fleet_size": 3,
        "duration": 1.0,
        "dt": 0.02,
        "reference": {"r0": 0.9, "w0": 0.5},
        "ring_radius": 1.1,
        "tracker": {"horizon": 8},
        "attack": {"kind": "covert", "window": [0.3, 0.7]},
    }
    data.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return path


class TestRunCommand:
    def test_run_writes_logs_and_figures(self, tmp_path, capsys):
        cfg = write_mini_config(tmp_path)
        out_dir = tmp_path / "out"
        code = main(["run", "--config", str(cfg), "--out", str(out_dir)])
        assert code == EXIT_OK
        assert (out_dir / "scenario.csv").exists()
        assert (out_dir / "scenario.json").exists()
        for name in ("snapshots.png", "channels.png", "traces.png", "margins.png"):
            assert (out_dir / name).stat().st_size > 0
        stdout = capsys.readouterr().out
        assert "min_pairwise_distance" in stdout

    def test_run_csv_only_no_figures(self, tmp_path):
        cfg = write_mini_config(tmp_path)
        out_dir = tmp_path / "out"
        code = main(
            [
                "run", "--config", str(cfg), "--out", str(out_dir),
                "--format", "csv", "--no-figures",
            ]
        )
        assert code == EXIT_OK
        assert (out_dir / "scenario.csv").exists()
        assert not (out_dir / "scenario.json").exists()
        assert not (out_dir / "snapshots.png").exists()

    def test_cli_overrides(self, tmp_path):
        cfg = write_mini_config(tmp_path)
        out_dir = tmp_path / "out"
        code = main(
            [
                "run", "--config", str(cfg), "--out", str(out_dir),
                "--attack", "none", "--no-filter", "--duration", "0.5",
                "--format", "json", "--no-figures",
            ]
        )
        assert code == EXIT_OK
        log, _ = load_log(out_dir / "scenario.json")
        assert log.config.attack.kind == "none"
        assert not log.config.filter_enabled
        assert log.n_steps == 25
        assert set(log.mode) == {"off"}

    def test_config_error_exit_code(self, tmp_path, capsys):
        cfg = write_mini_config(tmp_path, unknown_key=1)
        assert main(["run", "--config", str(cfg)]) == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_initial_infeasibility_exit_code(self, tmp_path, capsys):
        cfg = write_mini_config(
            tmp_path,
            fleet_size=2,
            initial_states=[[0.0, 0.0, 0.0], [0.05, 0.0, 0.0]],
        )
        code = main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert code == EXIT_INFEASIBLE
        assert "infeasib" in capsys.readouterr().err

    def test_determinism_byte_identical_csv(self, tmp_path):
        cfg = write_mini_config(tmp_path)
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(
                [
                    "run", "--config", str(cfg), "--out", str(out),
                    "--format", "csv", "--no-figures",
                ]
            ) == EXIT_OK
        assert (a / "scenario.csv").read_bytes() == (b / "scenario.csv").read_bytes()


class TestMetricsCommand:
    def test_metrics_from_json_log(self, tmp_path, capsys):
        cfg = write_mini_config(tmp_path)
        out_dir = tmp_path / "out"
        main(
            [
                "run", "--config", str(cfg), "--out", str(out_dir),
                "--format", "json", "--no-figures",
            ]
        )
        capsys.readouterr()
        assert main(["metrics", str(out_dir / "scenario.json")]) == EXIT_OK
        stdout = capsys.readouterr().out
        assert "min_pairwise_distance" in stdout
        assert "fallback_count" in stdout


class TestReport:
    def test_save_report_paths(self, mini_covert_log, tmp_path):
        paths = save_report(mini_covert_log, tmp_path)
        assert len(paths) == 4
        for p in paths:
            assert p.exists() and p.stat().st_size > 0


class TestSelftest:
    def test_selftest_passes(self, capsys):
        assert main(["selftest"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "[PASS]" in out
        assert "[FAIL]" not in out
